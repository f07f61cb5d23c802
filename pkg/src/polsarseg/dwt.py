"""Undecimated separable 3D Haar decomposition of a feature cube.

Filtering keeps every sample: output[i] = f0*x[i] + f1*x[i+1] with the
last sample replicated past the boundary, so sub-cubes have the same
shape as the input and no downsampling occurs at any level.  Letters in
a sub-cube code give the filter applied along (height, width, channel),
L for low-pass and H for high-pass.  The second level decomposes the
first-level LLL sub-cube with the same unit-offset stencil.

The feature map retains the seven non-LLL sub-cubes of every level
before the last, plus all eight sub-cubes of the last level, takes the
3x3 spatial mean of coefficient magnitudes per channel (borders average
in-bounds samples only), and concatenates the results channel-wise, so
two levels over a D-channel cube give 15*D output channels.
"""

from __future__ import annotations

import numpy as np

from .core import FeatureCube

_INV_SQRT2 = 1.0 / np.sqrt(2.0)

HAAR_LOW = (_INV_SQRT2, _INV_SQRT2)
HAAR_HIGH = (-_INV_SQRT2, _INV_SQRT2)

# binary counting order with L = 0, H = 1
SUBCUBE_CODES_3D = ("LLL", "LLH", "LHL", "LHH", "HLL", "HLH", "HHL", "HHH")
SUBCUBE_CODES_2D = ("LL", "LH", "HL", "HH")


def udwt_1d(signal, taps) -> np.ndarray:
    """Stationary two-tap filter along a 1-d signal, replicate boundary."""
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise ValueError("signal must be a non-empty 1-d array")
    return _filter_axis(x, taps, 0)


def _filter_axis(data: np.ndarray, taps, axis: int) -> np.ndarray:
    f0, f1 = taps
    shifted = np.concatenate(
        [np.take(data, range(1, data.shape[axis]), axis=axis),
         np.take(data, [-1], axis=axis)], axis=axis)
    return f0 * data + f1 * shifted


def _level(data: np.ndarray) -> dict:
    """One undecimated level along all three axes; keys SUBCUBE_CODES_3D."""
    out = {"": data}
    for axis in range(3):
        nxt = {}
        for code, arr in out.items():
            nxt[code + "L"] = _filter_axis(arr, HAAR_LOW, axis)
            nxt[code + "H"] = _filter_axis(arr, HAAR_HIGH, axis)
        out = nxt
    return {code: out[code] for code in SUBCUBE_CODES_3D}


def _level_2d(data: np.ndarray) -> dict:
    """One undecimated level along the two spatial axes only."""
    out = {"": data}
    for axis in range(2):
        nxt = {}
        for code, arr in out.items():
            nxt[code + "L"] = _filter_axis(arr, HAAR_LOW, axis)
            nxt[code + "H"] = _filter_axis(arr, HAAR_HIGH, axis)
        out = nxt
    return {code: out[code] for code in SUBCUBE_CODES_2D}


def udwt_3d_level(cube: FeatureCube) -> dict:
    """Decompose one level; returns all eight same-shape sub-cubes."""
    raw = _level(cube.data)
    return {code: FeatureCube(arr) for code, arr in raw.items()}


def mean_filter_abs(data: np.ndarray) -> np.ndarray:
    """3x3 spatial mean of |data| per channel; borders use in-bounds counts."""
    a = np.abs(np.asarray(data, dtype=np.float64))
    h, w = a.shape[:2]
    padded = np.zeros((h + 2, w + 2) + a.shape[2:], dtype=np.float64)
    padded[1:-1, 1:-1] = a
    total = np.zeros_like(a)
    for di in range(3):
        for dj in range(3):
            total += padded[di:di + h, dj:dj + w]
    counts = _inbounds_counts(h, w)
    if a.ndim == 3:
        counts = counts[:, :, None]
    return total / counts


def _inbounds_counts(h: int, w: int) -> np.ndarray:
    # entry (i, j) = number of in-bounds cells of the 3x3 window centred there
    rows = np.minimum(np.arange(h), 1) + 1 + np.minimum(h - 1 - np.arange(h), 1)
    cols = np.minimum(np.arange(w), 1) + 1 + np.minimum(w - 1 - np.arange(w), 1)
    return (rows[:, None] * cols[None, :]).astype(np.float64)


def _plan(levels: int, codes, low_code: str):
    if levels < 1:
        raise ValueError("levels must be >= 1")
    plan = []
    for lv in range(1, levels + 1):
        if lv < levels:
            plan.append((lv, tuple(c for c in codes if c != low_code)))
        else:
            plan.append((lv, tuple(codes)))
    return plan


def subcube_names(levels: int = 2, mode: str = "dwt3d") -> tuple:
    """Sub-cube names, e.g. 'L1-LLH', in output channel-block order."""
    codes, low = ((SUBCUBE_CODES_3D, "LLL") if mode == "dwt3d"
                  else (SUBCUBE_CODES_2D, "LL"))
    names = []
    for lv, kept in _plan(levels, codes, low):
        names.extend(f"L{lv}-{code}" for code in kept)
    return tuple(names)


def _features(raw: FeatureCube, levels: int, level_fn, codes, low_code) -> FeatureCube:
    plan = _plan(levels, codes, low_code)
    current = raw.data
    blocks = []
    for lv, kept in plan:
        decomp = level_fn(current)
        for code in kept:
            blocks.append(mean_filter_abs(decomp[code]))
        current = decomp[low_code]
    return FeatureCube(np.concatenate(blocks, axis=2))


def dwt_features(raw: FeatureCube, levels: int = 2) -> FeatureCube:
    """Full 3D texture feature map; 15*D channels for the default 2 levels.

    Channel block s*D..(s+1)*D-1 holds sub-cube s (order subcube_names),
    each block keeping the input channel order.
    """
    return _features(raw, levels, _level, SUBCUBE_CODES_3D, "LLL")


def dwt2d_features(raw: FeatureCube, levels: int = 2) -> FeatureCube:
    """Spatial-only ablation variant; 7*D channels for 2 levels."""
    return _features(raw, levels, _level_2d, SUBCUBE_CODES_2D, "LL")
