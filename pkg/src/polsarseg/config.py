"""Flat key/value run configuration.

Config files hold one `key = value` pair per line; `#` starts a
comment.  Values are coerced to bool/int/float when they parse as such,
otherwise kept as strings.  Every key can also be supplied as a CLI
flag, and flags win over the file.
"""

from __future__ import annotations

from .classifier import TrainConfig
from .pipeline import PipelineConfig
from .synth import SceneSpec, default_class_bank

# keys that configure a synthesized scene rather than input files
SCENE_KEYS = ("height", "width", "classes", "looks", "layout", "voronoi_sites")

_INT_KEYS = ("seed", "levels", "bp_max_sweeps", "cv_samples", "cv_folds",
             "max_epochs", "height", "width", "classes", "looks",
             "voronoi_sites")
_FLOAT_KEYS = ("alpha_s", "bp_eps", "bp_damping", "train_fraction", "tol")
_BOOL_KEYS = ("mrf",)
_STR_KEYS = ("coherency", "labels", "out_dir", "feature_mode", "kernel",
             "layout")

KNOWN_KEYS = frozenset(_INT_KEYS + _FLOAT_KEYS + _BOOL_KEYS + _STR_KEYS
                       + ("reg_grid",))


def _coerce(text: str):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_config_file(path) -> dict:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if not sep or not key or not val:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            values[key] = _coerce(val)
    return values


def _typed(key: str, value):
    try:
        if key in _BOOL_KEYS:
            if isinstance(value, bool):
                return value
            raise ValueError("expected true or false")
        if key in _INT_KEYS:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ValueError("expected an integer")
            return value
        if key in _FLOAT_KEYS:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValueError("expected a number")
            return float(value)
        if key == "reg_grid":
            parts = str(value).split(",")
            return tuple(float(p) for p in parts)
        return str(value)
    except ValueError as exc:
        raise ValueError(f"config key '{key}': {exc}") from None


def build_pipeline_config(values: dict) -> PipelineConfig:
    """Assemble a PipelineConfig from merged file/flag key-value pairs."""
    unknown = set(values) - KNOWN_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    v = {key: _typed(key, val) for key, val in values.items()}

    have_paths = "coherency" in v or "labels" in v
    have_scene = any(k in v for k in SCENE_KEYS)
    if have_paths and have_scene:
        raise ValueError("give either input files or scene keys, not both")
    scene = None
    if have_scene or not have_paths:
        k = v.get("classes", 4)
        layout = v.get("layout", "voronoi")
        sites = v.get("voronoi_sites", 3 * k if layout == "voronoi" else 0)
        scene = SceneSpec(height=v.get("height", 256), width=v.get("width", 256),
                          classes=default_class_bank(k), looks=v.get("looks", 4),
                          layout=layout, voronoi_sites=sites,
                          rng_seed=v.get("seed", 0))

    train_kwargs = {}
    for src, dst in (("train_fraction", "train_fraction"),
                     ("cv_samples", "cv_samples"), ("cv_folds", "cv_folds"),
                     ("reg_grid", "reg_grid"), ("max_epochs", "max_epochs"),
                     ("tol", "tol")):
        if src in v:
            train_kwargs[dst] = v[src]
    train = TrainConfig(rng_seed=v.get("seed", 0), **train_kwargs)

    kwargs = dict(feature_mode=v.get("feature_mode", "dwt3d"),
                  levels=v.get("levels", 2), train=train,
                  alpha_s=v.get("alpha_s", 5.0), kernel=v.get("kernel", "potts"),
                  mrf_enabled=v.get("mrf", True), bp_eps=v.get("bp_eps", 1e-4),
                  bp_max_sweeps=v.get("bp_max_sweeps", 50),
                  bp_damping=v.get("bp_damping", 0.0),
                  out_dir=v.get("out_dir"), rng_seed=v.get("seed", 0))
    if scene is not None:
        return PipelineConfig(scene=scene, **kwargs)
    if "coherency" not in v or "labels" not in v:
        raise ValueError("file input needs both 'coherency' and 'labels'")
    return PipelineConfig(coherency_path=v["coherency"], labels_path=v["labels"],
                          **kwargs)
