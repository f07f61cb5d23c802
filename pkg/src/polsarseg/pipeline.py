"""End-to-end segmentation pipeline, evaluation, and artifact export.

Stage order: load or generate the scene, extract the seven raw
polarimetric indicators, optionally lift them to wavelet texture
features, sample a training set, train the linear classifier, predict
posteriors, optionally refine labels with belief propagation, then
evaluate on all labeled pixels excluding the training pixels.

Artifacts: labels.png (palette-indexed prediction), metrics.json
(accuracy, confusion, BP diagnostics; content is bit-reproducible for a
fixed seed), timing.json (per-stage seconds, volatile by nature, kept
out of metrics.json so reruns stay byte-identical), model.plm, and
truth.plb when the scene was synthesized.
"""

from __future__ import annotations

import json
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import classifier, dwt, fileio, mrf, synth
from .core import (CoherencyImage, FeatureCube, LabelMap, ProbabilityField,
                   argmax_labels, extract_pauli, extract_raw_features)

FEATURE_MODES = ("raw", "dwt2d", "dwt3d")

# black for the unlabeled sentinel, then 15 visually distinct colors
DEFAULT_PALETTE = (
    (0, 0, 0),
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
    (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
    (210, 245, 60), (250, 190, 212), (0, 128, 128), (220, 190, 255),
    (170, 110, 40), (128, 0, 0), (170, 255, 195),
)


class PipelineError(RuntimeError):
    """A stage failed; the message names the stage."""


@dataclass(frozen=True)
class PipelineConfig:
    """Inputs, feature mode, training and smoothing settings for one run.

    Exactly one of (coherency_path + labels_path) or scene must be set.
    rng_seed is the master seed: it is stamped into the scene spec and
    the training config so a single integer pins the whole run.
    """

    coherency_path: str | None = None
    labels_path: str | None = None
    scene: synth.SceneSpec | None = None
    feature_mode: str = "dwt3d"
    levels: int = 2
    train: classifier.TrainConfig = field(default_factory=classifier.TrainConfig)
    alpha_s: float = mrf.DEFAULT_ALPHA_S
    kernel: str = "potts"
    mrf_enabled: bool = True
    bp_eps: float = mrf.DEFAULT_EPS
    bp_max_sweeps: int = mrf.DEFAULT_MAX_SWEEPS
    bp_damping: float = 0.0
    out_dir: str | None = None
    rng_seed: int = 0

    def __post_init__(self):
        have_paths = self.coherency_path is not None and self.labels_path is not None
        if have_paths == (self.scene is not None):
            raise ValueError("exactly one of (coherency_path, labels_path) "
                             "or scene must be provided")
        if self.feature_mode not in FEATURE_MODES:
            raise ValueError(f"feature_mode must be one of {FEATURE_MODES}")
        if self.kernel not in mrf.KERNELS:
            raise ValueError(f"kernel must be one of {mrf.KERNELS}")
        if self.alpha_s < 0:
            raise ValueError("alpha_s must be >= 0")
        if self.levels < 1:
            raise ValueError("levels must be >= 1")


@dataclass
class EvalReport:
    """Confusion-matrix accuracies over the evaluation pixels.

    per_class_ca maps class name to percentage, or None for classes
    with no evaluation pixels.  timing holds per-stage seconds and is
    filled in by the pipeline.
    """

    per_class_ca: dict
    overall_ca: float
    confusion: np.ndarray  # (K, K) int64, rows = truth, cols = prediction
    class_names: tuple
    timing: dict = field(default_factory=dict)


@dataclass
class PipelineResult:
    report: EvalReport
    labels: LabelMap
    probabilities: ProbabilityField
    bp: mrf.BpDiagnostics | None
    train_set: classifier.TrainingSet
    model: classifier.LinearModel
    paths: dict


def default_class_names(n_classes: int) -> tuple:
    return tuple(f"class_{k}" for k in range(1, n_classes + 1))


def evaluate(pred: LabelMap, truth: LabelMap, exclude=None,
             class_names=None) -> EvalReport:
    """Accuracy over labeled, non-excluded pixels.

    exclude: flat row-major pixel indices (the training set) left out of
    the evaluation.  Unlabeled truth pixels are skipped.  Raises when no
    evaluation pixel remains or a counted prediction is unlabeled.
    """
    if pred.labels.shape != truth.labels.shape:
        raise ValueError("prediction and truth differ in shape")
    k = truth.n_classes
    mask = truth.labeled_mask().ravel()
    if exclude is not None and len(exclude):
        mask = mask.copy()
        mask[np.asarray(exclude, dtype=np.int64)] = False
    t = truth.labels.ravel()[mask]
    p = pred.labels.ravel()[mask]
    if t.size == 0:
        raise ValueError("empty evaluation set")
    if np.any(p == 0):
        raise ValueError("prediction is unlabeled on an evaluation pixel")
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (t.astype(np.int64) - 1, p.astype(np.int64) - 1), 1)
    names = tuple(class_names) if class_names else default_class_names(k)
    if len(names) != k:
        raise ValueError("class_names length does not match n_classes")
    row_sums = confusion.sum(axis=1)
    per_class = {
        names[i]: (float(100.0 * confusion[i, i] / row_sums[i])
                   if row_sums[i] else None)
        for i in range(k)}
    overall = 100.0 * np.trace(confusion) / confusion.sum()
    return EvalReport(per_class, float(overall), confusion, names)


def export_label_png(labels: LabelMap, palette, path) -> None:
    """Render a label map to an indexed PNG; class k takes palette[k],
    the unlabeled sentinel 0 renders black."""
    if len(palette) < labels.n_classes + 1:
        raise ValueError(f"palette needs at least {labels.n_classes + 1} entries "
                         f"(sentinel + {labels.n_classes} classes)")
    fileio.write_indexed_png(path, labels.labels, palette)


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode()


def metrics_json_dict(report: EvalReport, bp: mrf.BpDiagnostics | None) -> dict:
    bp_obj = None
    if bp is not None:
        bp_obj = {"iterations": bp.iterations, "final_delta": bp.final_delta,
                  "energy": bp.energy, "converged": bp.converged}
    return {"per_class_ca": dict(report.per_class_ca),
            "overall_ca": report.overall_ca,
            "confusion": report.confusion.tolist(),
            "bp": bp_obj}


@contextmanager
def _stage(name: str, timing: dict):
    t0 = time.perf_counter()
    try:
        yield
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(f"stage '{name}': {exc}") from exc
    finally:
        timing[name] = time.perf_counter() - t0


def _extract_features(raw: FeatureCube, mode: str, levels: int) -> FeatureCube:
    if mode == "raw":
        return raw
    if mode == "dwt2d":
        return dwt.dwt2d_features(raw, levels)
    return dwt.dwt_features(raw, levels)


def run_pipeline(cfg: PipelineConfig) -> PipelineResult:
    """Execute the full pipeline; see the module docstring for stages.

    Writes artifacts under cfg.out_dir when it is set; otherwise the run
    stays in memory.  Fully deterministic for a fixed cfg.rng_seed.
    """
    timing = {}
    class_names = None

    if cfg.scene is not None:
        scene = replace(cfg.scene, rng_seed=cfg.rng_seed)
        with _stage("generate", timing):
            image, truth = synth.generate_scene(scene)
        class_names = tuple(cm.name for cm in scene.classes)
    else:
        with _stage("load", timing):
            image = fileio.load_coherency(cfg.coherency_path)
            truth = fileio.load_labels(cfg.labels_path)
            if truth.labels.shape != (image.height, image.width):
                raise ValueError("coherency and label rasters differ in shape")

    with _stage("raw_features", timing):
        raw = extract_raw_features(image)
    with _stage("features", timing):
        features = _extract_features(raw, cfg.feature_mode, cfg.levels)

    train_cfg = replace(cfg.train, rng_seed=cfg.rng_seed)
    with _stage("sample", timing):
        train_set = classifier.sample_training_set(truth, train_cfg)
    with _stage("train", timing):
        model = classifier.train(features, train_set, train_cfg)
    with _stage("predict", timing):
        probs = classifier.predict_probabilities(model, features)

    bp_diag = None
    if cfg.mrf_enabled:
        with _stage("mrf", timing):
            problem = mrf.problem_from_probabilities(
                probs, extract_pauli(image), cfg.alpha_s, cfg.kernel)
            labels, bp_diag = mrf.bp_solve(problem, cfg.bp_max_sweeps,
                                           cfg.bp_eps, cfg.bp_damping)
    else:
        labels = argmax_labels(probs)

    with _stage("evaluate", timing):
        report = evaluate(labels, truth, exclude=train_set.indices,
                          class_names=class_names)
        # training pixels must be invisible to the metrics: the confusion
        # total must equal labeled pixels minus the training set
        labeled_total = int(truth.labeled_mask().sum())
        assert int(report.confusion.sum()) == labeled_total - train_set.indices.size

    paths = {}
    if cfg.out_dir is not None:
        with _stage("export", timing):
            out = Path(cfg.out_dir)
            out.mkdir(parents=True, exist_ok=True)
            paths["labels_png"] = str(out / "labels.png")
            export_label_png(labels, DEFAULT_PALETTE, paths["labels_png"])
            paths["pred_plb"] = str(out / "pred.plb")
            fileio.save_labels(labels, paths["pred_plb"])
            paths["metrics_json"] = str(out / "metrics.json")
            with open(paths["metrics_json"], "wb") as fh:
                fh.write(_json_bytes(metrics_json_dict(report, bp_diag)))
            paths["model_plm"] = str(out / "model.plm")
            classifier.save_model(model, paths["model_plm"])
            paths["train_indices_json"] = str(out / "train_indices.json")
            with open(paths["train_indices_json"], "wb") as fh:
                fh.write(_json_bytes({"digest": train_set.digest(),
                                      "indices": train_set.indices.tolist()}))
            if cfg.scene is not None:
                paths["truth_plb"] = str(out / "truth.plb")
                fileio.save_labels(truth, paths["truth_plb"])
            paths["timing_json"] = str(out / "timing.json")
            timing_obj = {"stages": dict(timing)}
            if bp_diag is not None:
                timing_obj["bp_sweep_seconds"] = dict(bp_diag.sweep_seconds)
            with open(paths["timing_json"], "wb") as fh:
                fh.write(_json_bytes(timing_obj))

    report.timing = dict(timing)
    return PipelineResult(report, labels, probs, bp_diag, train_set, model, paths)


@dataclass
class AblationResult:
    """Overall CA of the four standard configurations on one scene."""

    entries: list  # [(config name, EvalReport)]
    train_digest: str
    bp: mrf.BpDiagnostics | None

    def overall(self) -> dict:
        return {name: rep.overall_ca for name, rep in self.entries}

    def to_table(self) -> str:
        lines = [f"{'config':<12} overall_ca"]
        lines += [f"{name:<12} {rep.overall_ca:10.2f}" for name, rep in self.entries]
        lines.append(f"training index digest: {self.train_digest}")
        return "\n".join(lines)

    def to_json_dict(self) -> dict:
        return {"overall_ca": self.overall(), "train_digest": self.train_digest}


ABLATION_CONFIGS = ("raw", "dwt2d", "dwt3d", "dwt3d+mrf")


def ablation_harness(base_cfg: PipelineConfig) -> AblationResult:
    """Run the four feature/smoothing configurations on one scene with a
    single shared training index set and report Overall CA for each."""
    timing = {}
    if base_cfg.scene is not None:
        scene = replace(base_cfg.scene, rng_seed=base_cfg.rng_seed)
        image, truth = synth.generate_scene(scene)
        class_names = tuple(cm.name for cm in scene.classes)
    else:
        image = fileio.load_coherency(base_cfg.coherency_path)
        truth = fileio.load_labels(base_cfg.labels_path)
        class_names = None

    raw = extract_raw_features(image)
    feature_sets = {
        "raw": raw,
        "dwt2d": dwt.dwt2d_features(raw, base_cfg.levels),
        "dwt3d": dwt.dwt_features(raw, base_cfg.levels),
    }
    train_cfg = replace(base_cfg.train, rng_seed=base_cfg.rng_seed)
    train_set = classifier.sample_training_set(truth, train_cfg)

    entries = []
    bp_diag = None
    for name in ABLATION_CONFIGS:
        feats = feature_sets["dwt3d" if name == "dwt3d+mrf" else name]
        model = classifier.train(feats, train_set, train_cfg)
        probs = classifier.predict_probabilities(model, feats)
        if name == "dwt3d+mrf":
            problem = mrf.problem_from_probabilities(
                probs, extract_pauli(image), base_cfg.alpha_s, base_cfg.kernel)
            labels, bp_diag = mrf.bp_solve(problem, base_cfg.bp_max_sweeps,
                                           base_cfg.bp_eps, base_cfg.bp_damping)
        else:
            labels = argmax_labels(probs)
        entries.append((name, evaluate(labels, truth, exclude=train_set.indices,
                                       class_names=class_names)))
    return AblationResult(entries, train_set.digest(), bp_diag)
