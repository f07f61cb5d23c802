"""Core grid types for polarimetric coherency data and derived fields.

A coherency image stores the nine real degrees of freedom of the 3x3
Hermitian coherency matrix T at every pixel, as float32 planes in the
order T11, T22, T33, Re T12, Im T12, Re T13, Im T13, Re T23, Im T23.
All containers validate their invariants on construction and freeze
their arrays; downstream operations are pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PLANE_NAMES = ("T11", "T22", "T33",
               "ReT12", "ImT12", "ReT13", "ImT13", "ReT23", "ImT23")

RAW_FEATURE_NAMES = ("SPAN", "T11", "T22", "T33",
                     "absT12", "absT13", "absT23")

# relative slack on the 2x2 principal-minor PSD check, to absorb the
# float32 storage rounding of data that is PSD in exact arithmetic
PSD_MINOR_RTOL = 1e-6

PROB_FLOOR = 1e-12
PROB_SUM_TOL = 1e-6

UNLABELED = 0


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CoherencyImage:
    """Per-pixel 3x3 Hermitian coherency matrices as nine float32 planes."""

    planes: np.ndarray  # (9, H, W) float32

    def __post_init__(self):
        planes = np.asarray(self.planes, dtype=np.float32)
        if planes.ndim != 3 or planes.shape[0] != 9:
            raise ValueError(f"expected planes of shape (9, H, W), got {planes.shape}")
        if planes.shape[1] < 1 or planes.shape[2] < 1:
            raise ValueError("empty image")
        if not np.all(np.isfinite(planes)):
            raise ValueError("non-finite value in coherency planes")
        diag = planes[:3].astype(np.float64)
        if np.any(diag < 0.0):
            raise ValueError("negative diagonal in coherency matrix")
        # Cauchy-Schwarz on every 2x2 principal minor: |Tij|^2 <= Tii * Tjj
        p64 = planes.astype(np.float64)
        for (i, j), (re, im) in (((0, 1), (3, 4)), ((0, 2), (5, 6)), ((1, 2), (7, 8))):
            magsq = p64[re] ** 2 + p64[im] ** 2
            prod = p64[i] * p64[j]
            slack = PSD_MINOR_RTOL * np.maximum(magsq, prod) + 1e-30
            if np.any(magsq > prod + slack):
                raise ValueError(
                    f"off-diagonal magnitude violates positive semidefiniteness "
                    f"(|{PLANE_NAMES[re][2:]}|^2 > {PLANE_NAMES[i]}*{PLANE_NAMES[j]})")
        object.__setattr__(self, "planes", _freeze(planes))

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]


@dataclass(frozen=True)
class FeatureCube:
    """Dense per-pixel feature vectors, shape (H, W, C) float64."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise ValueError(f"expected (H, W, C) feature array, got shape {data.shape}")
        if data.shape[2] < 1:
            raise ValueError("feature cube must have at least one channel")
        if not np.all(np.isfinite(data)):
            raise ValueError("non-finite feature value")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class LabelMap:
    """Class labels per pixel: 0 marks unlabeled, classes run 1..n_classes."""

    labels: np.ndarray  # (H, W) uint8
    n_classes: int

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise ValueError(f"expected (H, W) label array, got shape {labels.shape}")
        if labels.dtype != np.uint8:
            if not np.issubdtype(labels.dtype, np.integer):
                raise ValueError("labels must be integers")
            if labels.min(initial=0) < 0 or labels.max(initial=0) > 255:
                raise ValueError("labels out of uint8 range")
            labels = labels.astype(np.uint8)
        if not 1 <= self.n_classes <= 255:
            raise ValueError("n_classes must be in 1..255")
        if labels.max(initial=0) > self.n_classes:
            raise ValueError("label exceeds n_classes")
        object.__setattr__(self, "labels", _freeze(labels))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def labeled_mask(self) -> np.ndarray:
        return self.labels != UNLABELED


@dataclass(frozen=True)
class PauliField:
    """Pauli magnitude triplet per pixel: sqrt of the coherency diagonal."""

    components: np.ndarray  # (H, W, 3) float64

    def __post_init__(self):
        comp = np.asarray(self.components, dtype=np.float64)
        if comp.ndim != 3 or comp.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) array, got shape {comp.shape}")
        if not np.all(np.isfinite(comp)):
            raise ValueError("non-finite Pauli component")
        if np.any(comp < 0.0):
            raise ValueError("negative Pauli component")
        object.__setattr__(self, "components", _freeze(comp))


@dataclass(frozen=True)
class ProbabilityField:
    """Per-pixel class posteriors, floored at PROB_FLOOR, rows summing to 1."""

    probs: np.ndarray  # (H, W, K) float64

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 3 or probs.shape[2] < 1:
            raise ValueError(f"expected (H, W, K) array, got shape {probs.shape}")
        if not np.all(np.isfinite(probs)):
            raise ValueError("non-finite probability")
        if np.any(probs < PROB_FLOOR) or np.any(probs > 1.0):
            raise ValueError(f"probabilities must lie in [{PROB_FLOOR}, 1]")
        sums = probs.sum(axis=2)
        err = np.abs(sums - 1.0).max()
        if err > PROB_SUM_TOL:
            raise ValueError(f"probabilities deviate from unit sum by {err:.3e}")
        object.__setattr__(self, "probs", _freeze(probs))

    @property
    def n_classes(self) -> int:
        return self.probs.shape[2]


def extract_raw_features(image: CoherencyImage) -> FeatureCube:
    """Seven per-pixel polarimetric indicators from the coherency matrix.

    Channel order: SPAN, T11, T22, T33, |T12|, |T13|, |T23|.  SPAN is the
    matrix trace T11 + T22 + T33.  All values stay in linear power units.
    """
    p = image.planes.astype(np.float64)
    span = p[0] + p[1] + p[2]
    feats = np.stack([
        span, p[0], p[1], p[2],
        np.hypot(p[3], p[4]),
        np.hypot(p[5], p[6]),
        np.hypot(p[7], p[8]),
    ], axis=-1)
    return FeatureCube(feats)


def extract_pauli(image: CoherencyImage) -> PauliField:
    """Pauli magnitudes (sqrt T11, sqrt T22, sqrt T33) used for edge strength."""
    diag = image.planes[:3].astype(np.float64)
    return PauliField(np.sqrt(np.maximum(diag, 0.0)).transpose(1, 2, 0))


def argmax_labels(field: ProbabilityField) -> LabelMap:
    """Per-pixel most probable class; ties resolve to the smallest class id."""
    return LabelMap(np.argmax(field.probs, axis=2).astype(np.uint8) + 1,
                    field.n_classes)
