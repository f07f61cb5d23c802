"""Synthetic polarimetric scenes with fully developed multilook speckle.

Each pixel of class c draws n independent scattering vectors
k = L_c g, where L_c is the Cholesky factor of the class covariance and
g is circular complex Gaussian with unit-variance components (real and
imaginary parts of variance 1/2 each).  The stored coherency matrix is
the n-look average of k k^H.  Rows use independent counter-based RNG
streams spawned from the scene seed, so output is reproducible
regardless of evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import CoherencyImage, LabelMap

MIN_CLASS_OCCUPANCY = 0.01

LAYOUTS = ("rectangles", "voronoi")


@dataclass(frozen=True)
class ClassModel:
    """Named 3x3 Hermitian PSD covariance for one thematic class."""

    name: str
    sigma: np.ndarray  # (3, 3) complex128

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=np.complex128)
        if sigma.shape != (3, 3):
            raise ValueError(f"class '{self.name}': covariance must be 3x3")
        scale = max(np.abs(sigma).max(), 1e-300)
        if np.abs(sigma - sigma.conj().T).max() > 1e-9 * scale:
            raise ValueError(f"class '{self.name}': covariance is not Hermitian")
        sigma = 0.5 * (sigma + sigma.conj().T)
        eigvals = np.linalg.eigvalsh(sigma)
        if eigvals.min() < -1e-9 * scale:
            raise ValueError(f"class '{self.name}': covariance is not PSD "
                             f"(min eigenvalue {eigvals.min():.3e})")
        object.__setattr__(self, "sigma", sigma)
        self.sigma.setflags(write=False)

    @property
    def span(self) -> float:
        return float(np.real(np.trace(self.sigma)))


@dataclass(frozen=True)
class SceneSpec:
    """Layout, class models, look count, and seed for one synthetic scene."""

    height: int
    width: int
    classes: tuple  # tuple[ClassModel, ...]
    looks: int = 4
    layout: str = "rectangles"
    voronoi_sites: int = 0
    rng_seed: int = 0

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError("scene dimensions must be positive")
        if len(self.classes) < 2:
            raise ValueError("need at least two classes")
        if self.looks < 1:
            raise ValueError("looks must be >= 1")
        if self.layout not in LAYOUTS:
            raise ValueError(f"unknown layout '{self.layout}', expected one of {LAYOUTS}")
        if self.layout == "voronoi" and self.voronoi_sites < len(self.classes):
            raise ValueError("voronoi layout needs at least one site per class")
        object.__setattr__(self, "classes", tuple(self.classes))

    @property
    def n_classes(self) -> int:
        return len(self.classes)


def _hermitian(span, diag_frac, off=()):
    """Build a covariance from a SPAN level, diagonal fractions, and
    (i, j, complex correlation) off-diagonal entries."""
    d = span * np.asarray(diag_frac, dtype=np.float64)
    sigma = np.diag(d).astype(np.complex128)
    for i, j, rho in off:
        v = rho * np.sqrt(d[i] * d[j])
        sigma[i, j] = v
        sigma[j, i] = np.conj(v)
    return sigma


# unit-SPAN correlation structures the built-in classes are mixed from
_U_SURFACE_A = _hermitian(1.0, (0.62, 0.28, 0.10), ((0, 1, 0.55 + 0.00j),))
_U_SURFACE_B = _hermitian(1.0, (0.30, 0.55, 0.15), ((0, 1, -0.45 + 0.15j),))
_U_DOUBLE_A = _hermitian(1.0, (0.55, 0.30, 0.15),
                         ((0, 1, 0.10 - 0.50j), (1, 2, 0.25 + 0.0j)))
_U_VOLUME_A = _hermitian(1.0, (0.20, 0.35, 0.45), ((1, 2, 0.40 + 0.20j),))


def _blend(span, base, other, mix):
    return span * ((1.0 - mix) * base + mix * other)


# Built-in class covariances.  SPAN levels are pairwise distinct, and the
# first four classes form two look-alike pairs (surface-a/surface-b,
# double-a/double-b) that share most of their structure: single-pixel
# intensity separates them poorly under heavy speckle, so texture and
# spatial context carry the contrast between pair members.
_BANK = (
    ("surface-a", 1.00 * _U_SURFACE_A),
    ("double-a", 2.10 * _U_DOUBLE_A),
    ("surface-b", _blend(1.06, _U_SURFACE_A, _U_SURFACE_B, 0.25)),
    ("double-b", _blend(2.226, _U_DOUBLE_A, _U_VOLUME_A, 0.25)),
    ("volume-a", 1.45 * _U_VOLUME_A),
    ("double-c", 2.60 * _hermitian(1.0, (0.45, 0.45, 0.10),
                                   ((0, 2, 0.50 + 0.00j),))),
    ("surface-c", 1.80 * _hermitian(1.0, (0.70, 0.15, 0.15),
                                    ((0, 2, -0.30 - 0.25j),))),
    ("volume-b", 3.20 * _hermitian(1.0, (0.25, 0.50, 0.25),
                                   ((0, 1, 0.35 - 0.35j), (0, 2, 0.20 + 0.0j)))),
)


def default_class_bank(n_classes: int) -> tuple:
    """First n_classes built-in covariances; supports 2..8 classes."""
    if not 2 <= n_classes <= len(_BANK):
        raise ValueError(f"n_classes must be in 2..{len(_BANK)}")
    return tuple(ClassModel(name, sigma) for name, sigma in _BANK[:n_classes])


def _layout_labels(spec: SceneSpec) -> np.ndarray:
    k = spec.n_classes
    if spec.layout == "rectangles":
        # k vertical bands of near-equal width, class 1 leftmost
        cols = np.minimum(np.arange(spec.width) * k // spec.width, k - 1)
        labels = np.broadcast_to(cols + 1, (spec.height, spec.width))
        return labels.astype(np.uint8)
    rng = np.random.Generator(np.random.Philox(
        np.random.SeedSequence(spec.rng_seed, spawn_key=(0,))))
    sites_r = rng.uniform(0.0, spec.height, size=spec.voronoi_sites)
    sites_c = rng.uniform(0.0, spec.width, size=spec.voronoi_sites)
    site_class = np.arange(spec.voronoi_sites) % k + 1
    rr = np.arange(spec.height)[:, None, None] + 0.5
    cc = np.arange(spec.width)[None, :, None] + 0.5
    d2 = (rr - sites_r) ** 2 + (cc - sites_c) ** 2
    nearest = np.argmin(d2, axis=2)
    return site_class[nearest].astype(np.uint8)


def _check_occupancy(labels: np.ndarray, k: int) -> None:
    total = labels.size
    counts = np.bincount(labels.ravel(), minlength=k + 1)[1:]
    frac = counts / total
    if frac.min() < MIN_CLASS_OCCUPANCY:
        worst = int(np.argmin(frac)) + 1
        raise ValueError(
            f"class {worst} occupies {100 * frac.min():.2f}% of the scene, "
            f"below the {100 * MIN_CLASS_OCCUPANCY:.0f}% minimum; "
            f"use a different seed or layout")


def generate_scene(spec: SceneSpec):
    """Simulate one scene; returns (CoherencyImage, LabelMap ground truth)."""
    labels = _layout_labels(spec)
    _check_occupancy(labels, spec.n_classes)

    chols = [np.linalg.cholesky(
        cm.sigma + 1e-12 * cm.span * np.eye(3)) for cm in spec.classes]
    n = spec.looks
    planes = np.empty((9, spec.height, spec.width), dtype=np.float64)

    for r in range(spec.height):
        rng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence(spec.rng_seed, spawn_key=(1, r))))
        re = rng.standard_normal((spec.width, n, 3))
        im = rng.standard_normal((spec.width, n, 3))
        g = (re + 1j * im) * np.sqrt(0.5)
        k_vec = np.empty_like(g)
        row_lab = labels[r]
        for c in range(spec.n_classes):
            sel = row_lab == c + 1
            if sel.any():
                k_vec[sel] = g[sel] @ chols[c].T
        t = np.einsum("wli,wlj->wij", k_vec, k_vec.conj()) / n
        planes[0, r] = t[:, 0, 0].real
        planes[1, r] = t[:, 1, 1].real
        planes[2, r] = t[:, 2, 2].real
        planes[3, r] = t[:, 0, 1].real
        planes[4, r] = t[:, 0, 1].imag
        planes[5, r] = t[:, 0, 2].real
        planes[6, r] = t[:, 0, 2].imag
        planes[7, r] = t[:, 1, 2].real
        planes[8, r] = t[:, 1, 2].imag

    return CoherencyImage(planes.astype(np.float32)), LabelMap(labels, spec.n_classes)
