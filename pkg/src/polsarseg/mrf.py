"""Edge-aware MRF label refinement on the 4-connected pixel grid.

The energy of a labeling y is

    E(y) = sum_i phi_i(y_i) + alpha_s * sum_{edges (i,j)} a_ij * D(y_i, y_j)

with unary costs phi_i(y) = -log P(y | z_i), per-edge affinities
a_ij = exp(-||v_i - v_j||^2 / (2 sigma)) from the Pauli field, and D
either the potts indicator (default) or the literal label difference
|y_i - y_j| ("linear-label").  Each undirected edge is counted once.

Minimization uses min-sum belief propagation: messages start at 0 and
are updated in four directional full-image sweeps per iteration in the
order up, down, left, right.  Within a sweep, lines perpendicular to the
travel direction are independent and computed vectorized; successive
lines along the travel direction see fresh messages, so information
crosses the whole image in a single sweep.  Message vectors are
renormalized to minimum 0 after every update, which never changes the
final argmin.  An exhaustive enumeration oracle covers small instances.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import LabelMap, PauliField, ProbabilityField

KERNELS = ("potts", "linear-label")

DEFAULT_ALPHA_S = 5.0
DEFAULT_EPS = 1e-4
DEFAULT_MAX_SWEEPS = 50

EXHAUSTIVE_LIMIT = 10_000_000


def kernel_matrix(kernel: str, n_classes: int) -> np.ndarray:
    """Label-pair base costs D, indexed by 0-based class index."""
    if kernel not in KERNELS:
        raise ValueError(f"unknown kernel '{kernel}', expected one of {KERNELS}")
    ids = np.arange(n_classes)
    if kernel == "potts":
        return (ids[:, None] != ids[None, :]).astype(np.float64)
    return np.abs(ids[:, None] - ids[None, :]).astype(np.float64)


def pairwise_cost(y_i: int, y_j: int, a_ij: float, alpha_s: float,
                  kernel: str = "potts") -> float:
    """Cost of one edge given its two labels (1-based class ids)."""
    d = kernel_matrix(kernel, max(y_i, y_j))
    return float(alpha_s * a_ij * d[y_i - 1, y_j - 1])


@dataclass(frozen=True)
class MrfProblem:
    """Unary costs plus weighted 4-neighbor smoothness terms.

    affinity_h[r, c] weights the edge (r, c)-(r, c+1); affinity_v[r, c]
    weights (r, c)-(r+1, c).
    """

    unary: np.ndarray       # (H, W, K) float64
    affinity_h: np.ndarray  # (H, W-1) float64
    affinity_v: np.ndarray  # (H-1, W) float64
    alpha_s: float = DEFAULT_ALPHA_S
    kernel: str = "potts"
    sigma: float = 1.0

    def __post_init__(self):
        unary = np.asarray(self.unary, dtype=np.float64)
        if unary.ndim != 3 or unary.shape[2] < 1:
            raise ValueError(f"expected (H, W, K) unary array, got {unary.shape}")
        if not np.all(np.isfinite(unary)):
            raise ValueError("non-finite unary cost")
        h, w = unary.shape[:2]
        ah = np.asarray(self.affinity_h, dtype=np.float64)
        av = np.asarray(self.affinity_v, dtype=np.float64)
        if ah.shape != (h, w - 1) or av.shape != (h - 1, w):
            raise ValueError("affinity shapes do not match the grid")
        for a in (ah, av):
            if a.size and (not np.all(np.isfinite(a)) or a.min() < 0.0 or a.max() > 1.0):
                raise ValueError("affinities must lie in [0, 1]")
        if self.alpha_s < 0:
            raise ValueError("alpha_s must be >= 0")
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel '{self.kernel}'")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        for name, arr in (("unary", unary), ("affinity_h", ah), ("affinity_v", av)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def height(self) -> int:
        return self.unary.shape[0]

    @property
    def width(self) -> int:
        return self.unary.shape[1]

    @property
    def n_classes(self) -> int:
        return self.unary.shape[2]


@dataclass
class MessageState:
    """Directed message planes; plane X holds messages arriving from
    direction X (m_down[r, c] came from (r-1, c)); border planes stay 0."""

    m_down: np.ndarray
    m_up: np.ndarray
    m_right: np.ndarray
    m_left: np.ndarray
    iteration: int = 0

    @classmethod
    def zeros(cls, h: int, w: int, k: int) -> "MessageState":
        return cls(*(np.zeros((h, w, k)) for _ in range(4)))


@dataclass(frozen=True)
class BpDiagnostics:
    iterations: int
    final_delta: float
    energy: float
    converged: bool
    sweep_seconds: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {"iterations": self.iterations,
                "final_delta": self.final_delta,
                "energy": self.energy,
                "converged": self.converged,
                "sweep_seconds": dict(self.sweep_seconds)}


def compute_sigma(pauli: PauliField) -> float:
    """Mean squared Pauli distance over all 4-neighbor pairs.

    A perfectly flat field has mean 0; the value then falls back to 1
    and a UserWarning flags the degenerate case.
    """
    v = pauli.components
    h, w = v.shape[:2]
    if h * w < 2:
        raise ValueError("need at least two pixels")
    dh = ((v[:, 1:] - v[:, :-1]) ** 2).sum(axis=2)
    dv = ((v[1:] - v[:-1]) ** 2).sum(axis=2)
    sigma = (dh.sum() + dv.sum()) / (dh.size + dv.size)
    if sigma == 0.0:
        warnings.warn("flat image: all 4-neighbor Pauli distances are 0; "
                      "sigma falls back to 1", UserWarning, stacklevel=2)
        return 1.0
    return float(sigma)


def edge_affinities(pauli: PauliField, sigma: float):
    """Per-edge weights exp(-||v_i - v_j||^2 / (2 sigma)) for the
    horizontal and vertical 4-neighbor edges."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    v = pauli.components
    dh = ((v[:, 1:] - v[:, :-1]) ** 2).sum(axis=2)
    dv = ((v[1:] - v[:-1]) ** 2).sum(axis=2)
    return np.exp(-dh / (2.0 * sigma)), np.exp(-dv / (2.0 * sigma))


def problem_from_probabilities(probs: ProbabilityField, pauli: PauliField,
                               alpha_s: float = DEFAULT_ALPHA_S,
                               kernel: str = "potts") -> MrfProblem:
    """Assemble the refinement problem from classifier posteriors and the
    Pauli field of the same scene."""
    if probs.probs.shape[:2] != pauli.components.shape[:2]:
        raise ValueError("probability and Pauli grids differ in shape")
    sigma = compute_sigma(pauli)
    ah, av = edge_affinities(pauli, sigma)
    return MrfProblem(-np.log(probs.probs), ah, av, alpha_s, kernel, sigma)


def total_energy(problem: MrfProblem, labels) -> float:
    """Energy of a full labeling; each undirected edge counted once."""
    lab = labels.labels if isinstance(labels, LabelMap) else np.asarray(labels)
    if lab.shape != (problem.height, problem.width):
        raise ValueError("label grid does not match the problem")
    if lab.min() < 1 or lab.max() > problem.n_classes:
        raise ValueError("labeling contains unlabeled or out-of-range pixels")
    idx = lab.astype(np.int64) - 1
    d = kernel_matrix(problem.kernel, problem.n_classes)
    unary = np.take_along_axis(problem.unary, idx[:, :, None], axis=2).sum()
    pair = (d[idx[:, :-1], idx[:, 1:]] * problem.affinity_h).sum() \
        + (d[idx[:-1], idx[1:]] * problem.affinity_v).sum()
    return float(unary + problem.alpha_s * pair)


def _pass_line(hsum: np.ndarray, weight: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Min-sum update for one line of messages.

    hsum: (N, K) source beliefs excluding the message from the target;
    weight: (N,) edge weights alpha_s * a_ij; d: (K, K) kernel matrix.
    Returns the (N, K) messages normalized to minimum 0.
    """
    cost = hsum[:, :, None] + weight[:, None, None] * d[None, :, :]
    msg = cost.min(axis=1)
    return msg - msg.min(axis=1, keepdims=True)


def bp_solve(problem: MrfProblem, max_sweeps: int = DEFAULT_MAX_SWEEPS,
             eps: float = DEFAULT_EPS, damping: float = 0.0):
    """Min-sum belief propagation; returns (LabelMap, BpDiagnostics).

    One iteration runs the four directional sweeps up, down, left,
    right.  Convergence is declared when the largest absolute message
    change over a full iteration drops below eps; hitting max_sweeps
    first is reported in the diagnostics, not an error.  damping blends
    each new message with its previous value (0 = off).
    """
    if max_sweeps < 1:
        raise ValueError("max_sweeps must be >= 1")
    if not 0.0 <= damping < 1.0:
        raise ValueError("damping must lie in [0, 1)")
    unary = problem.unary
    h, w, k = unary.shape
    d = kernel_matrix(problem.kernel, k)
    wh = problem.alpha_s * problem.affinity_h
    wv = problem.alpha_s * problem.affinity_v
    state = MessageState.zeros(h, w, k)
    m_down, m_up = state.m_down, state.m_up
    m_right, m_left = state.m_right, state.m_left
    seconds = {"up": 0.0, "down": 0.0, "left": 0.0, "right": 0.0}

    def _update(plane, line, new):
        nonlocal delta
        if damping:
            new = (1.0 - damping) * new + damping * plane[line]
        delta = max(delta, float(np.abs(new - plane[line]).max()))
        plane[line] = new

    delta = np.inf
    converged = False
    for _ in range(max_sweeps):
        delta = 0.0
        t0 = time.perf_counter()
        for r in range(h - 2, -1, -1):  # messages travel upward
            hsum = unary[r + 1] + m_up[r + 1] + m_left[r + 1] + m_right[r + 1]
            _update(m_up, r, _pass_line(hsum, wv[r], d))
        t1 = time.perf_counter()
        seconds["up"] += t1 - t0
        for r in range(1, h):           # downward
            hsum = unary[r - 1] + m_down[r - 1] + m_left[r - 1] + m_right[r - 1]
            _update(m_down, r, _pass_line(hsum, wv[r - 1], d))
        t2 = time.perf_counter()
        seconds["down"] += t2 - t1
        for c in range(w - 2, -1, -1):  # leftward
            hsum = unary[:, c + 1] + m_left[:, c + 1] + m_up[:, c + 1] \
                + m_down[:, c + 1]
            _update(m_left, (slice(None), c), _pass_line(hsum, wh[:, c], d))
        t3 = time.perf_counter()
        seconds["left"] += t3 - t2
        for c in range(1, w):           # rightward
            hsum = unary[:, c - 1] + m_right[:, c - 1] + m_up[:, c - 1] \
                + m_down[:, c - 1]
            _update(m_right, (slice(None), c), _pass_line(hsum, wh[:, c - 1], d))
        seconds["right"] += time.perf_counter() - t3
        state.iteration += 1
        if delta < eps:
            converged = True
            break

    beliefs = unary + m_up + m_down + m_left + m_right
    labels = LabelMap(np.argmin(beliefs, axis=2).astype(np.uint8) + 1, k)
    diag = BpDiagnostics(state.iteration, float(delta),
                         total_energy(problem, labels), converged, seconds)
    return labels, diag


def exhaustive_map(problem: MrfProblem, limit: int = EXHAUSTIVE_LIMIT) -> LabelMap:
    """Global energy minimizer by enumeration; ties resolve to the
    lexicographically smallest labeling (row-major pixel order)."""
    h, w, k = problem.unary.shape
    n = h * w
    total = k ** n
    if total > limit:
        raise ValueError(f"{k}^{n} labelings exceed the enumeration limit {limit}")
    unary_flat = problem.unary.reshape(n, k)
    d = kernel_matrix(problem.kernel, k)
    edges = []
    grid = np.arange(n).reshape(h, w)
    for (pp, qq, aff) in ((grid[:, :-1], grid[:, 1:], problem.affinity_h),
                          (grid[:-1], grid[1:], problem.affinity_v)):
        for p, q, a in zip(pp.ravel(), qq.ravel(), aff.ravel()):
            edges.append((int(p), int(q), problem.alpha_s * float(a)))

    best_energy = np.inf
    best = None
    batch = 1 << 16
    powers = [k ** (n - 1 - p) for p in range(n)]  # pixel 0 most significant
    for start in range(0, total, batch):
        count = min(batch, total - start)
        codes = np.arange(start, start + count, dtype=np.int64)
        labs = np.empty((count, n), dtype=np.int64)
        for p in range(n):
            labs[:, p] = (codes // powers[p]) % k
        energy = unary_flat[0, labs[:, 0]].copy()
        for p in range(1, n):
            energy += unary_flat[p, labs[:, p]]
        for p, q, wt in edges:
            energy += wt * d[labs[:, p], labs[:, q]]
        j = int(np.argmin(energy))
        if energy[j] < best_energy:
            best_energy = float(energy[j])
            best = labs[j].copy()
    return LabelMap(best.reshape(h, w).astype(np.uint8) + 1, k)


def count_discontinuities(labels) -> int:
    """Number of 4-neighbor edges whose endpoints carry different labels."""
    lab = labels.labels if isinstance(labels, LabelMap) else np.asarray(labels)
    return int((lab[:, 1:] != lab[:, :-1]).sum() + (lab[1:] != lab[:-1]).sum())
