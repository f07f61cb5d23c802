"""Multi-class probabilistic linear classifier over per-pixel features.

Multinomial logistic regression with an L2 penalty, trained by
full-batch gradient descent with a backtracking (Armijo) line search
from a zero initialization; the objective is convex so the run is
deterministic for a given sample.  The regularization weight is chosen
by k-fold cross-validation on a small subsample of the training set.
Standardization statistics are learned from the training pixels and
stored with the model.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .core import PROB_FLOOR, FeatureCube, LabelMap, ProbabilityField

MAGIC_PLM = b"PLM1"

DEFAULT_REG_GRID = (0.001, 0.01, 0.1, 1.0, 10.0)


@dataclass(frozen=True)
class TrainConfig:
    train_fraction: float = 0.01
    cv_samples: int = 200
    cv_folds: int = 5
    reg_grid: tuple = DEFAULT_REG_GRID
    max_epochs: int = 500
    tol: float = 1e-8
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction <= 1.0:
            raise ValueError("train_fraction must lie in (0, 1]")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be >= 2")
        if self.cv_samples < self.cv_folds:
            raise ValueError("cv_samples must be >= cv_folds")
        grid = tuple(float(g) for g in self.reg_grid)
        if not grid or any(g <= 0 for g in grid):
            raise ValueError("reg_grid must be non-empty and positive")
        if self.max_epochs < 1 or self.tol <= 0:
            raise ValueError("bad optimizer settings")
        object.__setattr__(self, "reg_grid", grid)


@dataclass(frozen=True)
class TrainingSet:
    """Flat row-major pixel indices with their class labels (1..K)."""

    indices: np.ndarray  # int64, sorted
    labels: np.ndarray   # uint8

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        lab = np.asarray(self.labels, dtype=np.uint8)
        if idx.shape != lab.shape or idx.ndim != 1 or idx.size == 0:
            raise ValueError("indices and labels must be equal-length 1-d arrays")
        if lab.min() < 1:
            raise ValueError("training labels must be >= 1")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "labels", lab)
        for a in (self.indices, self.labels):
            a.setflags(write=False)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.indices.astype("<i8").tobytes())
        h.update(self.labels.tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class LinearModel:
    """Affine scores over standardized features, softmax for posteriors."""

    weights: np.ndarray  # (K, C)
    biases: np.ndarray   # (K,)
    mean: np.ndarray     # (C,)
    scale: np.ndarray    # (C,)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.biases, dtype=np.float64)
        mu = np.asarray(self.mean, dtype=np.float64)
        sc = np.asarray(self.scale, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[0],) \
                or mu.shape != (w.shape[1],) or sc.shape != (w.shape[1],):
            raise ValueError("inconsistent model shapes")
        if w.shape[0] < 2:
            raise ValueError("model needs at least two classes")
        if np.any(sc <= 0) or not all(np.all(np.isfinite(a)) for a in (w, b, mu, sc)):
            raise ValueError("model parameters must be finite with positive scales")
        for name, arr in (("weights", w), ("biases", b), ("mean", mu), ("scale", sc)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]


def sample_training_set(labels: LabelMap, cfg: TrainConfig) -> TrainingSet:
    """Uniform draw without replacement of round(fraction * labeled count)
    labeled pixels, adjusted so every class contributes at least one."""
    flat = labels.labels.ravel()
    pool = np.flatnonzero(flat != 0)
    if pool.size == 0:
        raise ValueError("no labeled pixels to sample from")
    k = labels.n_classes
    pool_labels = flat[pool]
    counts = np.bincount(pool_labels, minlength=k + 1)[1:]
    if np.any(counts == 0):
        missing = int(np.flatnonzero(counts == 0)[0]) + 1
        raise ValueError(f"class {missing} has no labeled pixels")
    target = int(round(cfg.train_fraction * pool.size))
    target = min(max(target, k), pool.size)

    rng = np.random.default_rng(cfg.rng_seed)
    taken = np.zeros(pool.size, dtype=bool)
    for c in range(1, k + 1):
        members = np.flatnonzero(pool_labels == c)
        taken[members[rng.integers(members.size)]] = True
    rest = np.flatnonzero(~taken)
    if target > k:
        taken[rng.choice(rest, size=target - k, replace=False)] = True
    indices = np.sort(pool[taken])
    return TrainingSet(indices, flat[indices])


def _objective(z, onehot, w, b, lam):
    scores = z @ w.T + b
    shift = scores.max(axis=1, keepdims=True)
    logsum = shift + np.log(np.exp(scores - shift).sum(axis=1, keepdims=True))
    logp = scores - logsum
    ce = -(onehot * logp).sum() / z.shape[0]
    return ce + 0.5 * lam * (w ** 2).sum(), np.exp(logp)


def fit_logistic(z, y, n_classes, lam, max_epochs=500, tol=1e-8):
    """Minimize mean cross-entropy + 0.5*lam*||W||^2; biases unpenalized.

    Returns (weights, biases, objective history).  The history is
    strictly decreasing while the line search makes progress.
    """
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y)
    n = z.shape[0]
    w = np.zeros((n_classes, z.shape[1]))
    b = np.zeros(n_classes)
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y - 1] = 1.0

    obj, probs = _objective(z, onehot, w, b, lam)
    history = [obj]
    step = 1.0
    for _ in range(max_epochs):
        resid = probs - onehot
        grad_w = resid.T @ z / n + lam * w
        grad_b = resid.mean(axis=0)
        gsq = (grad_w ** 2).sum() + (grad_b ** 2).sum()
        if gsq == 0.0:
            break
        step = min(step * 2.0, 1e4)
        while True:
            cand_w = w - step * grad_w
            cand_b = b - step * grad_b
            cand_obj, cand_probs = _objective(z, onehot, cand_w, cand_b, lam)
            if cand_obj <= obj - 1e-4 * step * gsq:
                break
            step *= 0.5
            if step < 1e-20:
                break
        if step < 1e-20:
            break
        w, b, probs = cand_w, cand_b, cand_probs
        prev, obj = obj, cand_obj
        history.append(obj)
        if prev - obj <= tol * max(1.0, abs(prev)):
            break
    return w, b, np.asarray(history)


def cross_validate(z, y, n_classes, cfg: TrainConfig):
    """Pick the penalty from cfg.reg_grid by k-fold accuracy on a subsample.

    Ties keep the smallest penalty.  Returns (best_lambda, {lambda: acc}).
    """
    grid = sorted(cfg.reg_grid)
    if len(grid) == 1:
        return grid[0], {grid[0]: float("nan")}
    n = z.shape[0]
    m = min(cfg.cv_samples, n)
    if m < cfg.cv_folds:
        raise ValueError("too few training samples for cross-validation")
    rng = np.random.default_rng(cfg.rng_seed + 1)
    sub = rng.choice(n, size=m, replace=False)
    fold_of = np.arange(m) % cfg.cv_folds

    table = {}
    best_lam, best_acc = grid[0], -1.0
    for lam in grid:
        accs = []
        for f in range(cfg.cv_folds):
            tr = sub[fold_of != f]
            va = sub[fold_of == f]
            w, b, _ = fit_logistic(z[tr], y[tr], n_classes, lam,
                                   cfg.max_epochs, cfg.tol)
            pred = np.argmax(z[va] @ w.T + b, axis=1) + 1
            accs.append(float(np.mean(pred == y[va])))
        table[lam] = float(np.mean(accs))
        if table[lam] > best_acc:
            best_lam, best_acc = lam, table[lam]
    return best_lam, table


def train(features: FeatureCube, train_set: TrainingSet,
          cfg: TrainConfig) -> LinearModel:
    """Standardize, cross-validate the penalty, and fit the final model."""
    x = features.data.reshape(-1, features.channels)[train_set.indices]
    y = train_set.labels.astype(np.int64)
    n_classes = int(y.max())
    if n_classes < 2:
        raise ValueError("training set covers fewer than two classes")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    scale = np.where(std > 0, std, 1.0)
    z = (x - mean) / scale
    lam, _ = cross_validate(z, y, n_classes, cfg)
    w, b, _ = fit_logistic(z, y, n_classes, lam, cfg.max_epochs, cfg.tol)
    return LinearModel(w, b, mean, scale)


def predict_probabilities(model: LinearModel,
                          features: FeatureCube) -> ProbabilityField:
    """Softmax posteriors per pixel, floored at PROB_FLOOR without
    renormalization so the floor never distorts the argmax."""
    if features.channels != model.n_features:
        raise ValueError(f"model expects {model.n_features} channels, "
                         f"features have {features.channels}")
    x = features.data.reshape(-1, features.channels)
    z = (x - model.mean) / model.scale
    scores = z @ model.weights.T + model.biases
    scores -= scores.max(axis=1, keepdims=True)
    p = np.exp(scores)
    p /= p.sum(axis=1, keepdims=True)
    p = np.maximum(p, PROB_FLOOR)
    return ProbabilityField(p.reshape(features.height, features.width, -1))


def save_model(model: LinearModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC_PLM)
        fh.write(struct.pack("<II", model.n_classes, model.n_features))
        for arr in (model.weights, model.biases, model.mean, model.scale):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_model(path) -> LinearModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != MAGIC_PLM:
        raise ValueError(f"{path}: not a linear model file")
    k, c = struct.unpack_from("<II", blob, 4)
    need = 12 + 8 * (k * c + k + 2 * c)
    if len(blob) != need:
        raise ValueError(f"{path}: expected {need} bytes, found {len(blob)}")
    vals = np.frombuffer(blob, dtype="<f8", offset=12)
    w = vals[:k * c].reshape(k, c)
    b = vals[k * c:k * c + k]
    mu = vals[k * c + k:k * c + k + c]
    sc = vals[k * c + k + c:]
    return LinearModel(w.copy(), b.copy(), mu.copy(), sc.copy())
