"""Command line interface.

Subcommands: synth (write a synthetic scene), features (extract a
feature cube to .npz), train, predict, segment (end-to-end pipeline),
eval (compare two label rasters), ablate (four-configuration
comparison).  segment and ablate read an optional flat key/value config
file; any flag given on the command line overrides the file.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import classifier, fileio
from .config import build_pipeline_config, parse_config_file
from .core import FeatureCube, argmax_labels
from .pipeline import (DEFAULT_PALETTE, PipelineError, ablation_harness,
                       evaluate, export_label_png, metrics_json_dict,
                       run_pipeline)


def _pipeline_flags(parser):
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--seed", type=int, help="master RNG seed")
    parser.add_argument("--alpha-s", type=float, dest="alpha_s",
                        help="smoothness factor")
    parser.add_argument("--feature-mode", choices=("raw", "dwt2d", "dwt3d"))
    parser.add_argument("--no-mrf", action="store_true",
                        help="skip the label refinement stage")
    parser.add_argument("--out-dir")
    parser.add_argument("--kernel", choices=("potts", "linear-label"))
    parser.add_argument("--train-frac", type=float, dest="train_fraction",
                        help="fraction of labeled pixels used for training")
    parser.add_argument("--levels", type=int, help="decomposition levels (debug)")
    parser.add_argument("--coherency", help="input coherency raster (.pt3)")
    parser.add_argument("--labels", help="input label raster (.plb)")
    parser.add_argument("--height", type=int)
    parser.add_argument("--width", type=int)
    parser.add_argument("--classes", type=int)
    parser.add_argument("--looks", type=int)
    parser.add_argument("--layout", choices=("rectangles", "voronoi"))
    parser.add_argument("--voronoi-sites", type=int, dest="voronoi_sites")


def _merged_config(args):
    values = parse_config_file(args.config) if args.config else {}
    for key in ("seed", "alpha_s", "feature_mode", "out_dir", "kernel",
                "train_fraction", "levels", "coherency", "labels", "height",
                "width", "classes", "looks", "layout", "voronoi_sites"):
        val = getattr(args, key, None)
        if val is not None:
            values[key] = val
    if args.no_mrf:
        values["mrf"] = False
    return build_pipeline_config(values)


def _cmd_synth(args):
    values = {k: getattr(args, k) for k in
              ("height", "width", "classes", "looks", "layout",
               "voronoi_sites", "seed") if getattr(args, k) is not None}
    values["out_dir"] = args.out_dir
    cfg = build_pipeline_config(values)
    from . import synth
    from dataclasses import replace
    from pathlib import Path
    scene = replace(cfg.scene, rng_seed=cfg.rng_seed)
    image, truth = synth.generate_scene(scene)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fileio.save_coherency(image, out / "scene.pt3")
    fileio.save_labels(truth, out / "truth.plb")
    export_label_png(truth, DEFAULT_PALETTE, out / "truth.png")
    print(f"wrote {out / 'scene.pt3'} ({image.height}x{image.width}, "
          f"{truth.n_classes} classes)")
    return 0


def _cmd_features(args):
    from .core import extract_raw_features
    from . import dwt
    image = fileio.load_coherency(args.coherency)
    raw = extract_raw_features(image)
    mode = args.feature_mode or "dwt3d"
    levels = args.levels or 2
    if mode == "raw":
        feats = raw
    elif mode == "dwt2d":
        feats = dwt.dwt2d_features(raw, levels)
    else:
        feats = dwt.dwt_features(raw, levels)
    np.savez(args.out, data=feats.data, mode=mode)
    print(f"wrote {args.out} ({feats.height}x{feats.width}x{feats.channels})")
    return 0


def _load_feature_npz(path) -> FeatureCube:
    with np.load(path) as archive:
        return FeatureCube(archive["data"])


def _cmd_train(args):
    feats = _load_feature_npz(args.features)
    truth = fileio.load_labels(args.labels)
    cfg = classifier.TrainConfig(
        train_fraction=args.train_fraction or 0.01,
        rng_seed=args.seed or 0)
    train_set = classifier.sample_training_set(truth, cfg)
    model = classifier.train(feats, train_set, cfg)
    classifier.save_model(model, args.model)
    print(f"wrote {args.model} ({model.n_classes} classes, "
          f"{model.n_features} features, {train_set.indices.size} samples, "
          f"index digest {train_set.digest()[:16]})")
    return 0


def _cmd_predict(args):
    from pathlib import Path
    model = classifier.load_model(args.model)
    feats = _load_feature_npz(args.features)
    probs = classifier.predict_probabilities(model, feats)
    labels = argmax_labels(probs)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fileio.save_labels(labels, out / "pred.plb")
    export_label_png(labels, DEFAULT_PALETTE, out / "pred.png")
    print(f"wrote {out / 'pred.plb'} and {out / 'pred.png'}")
    return 0


def _cmd_segment(args):
    cfg = _merged_config(args)
    result = run_pipeline(cfg)
    print(json.dumps(metrics_json_dict(result.report, result.bp),
                     indent=2, sort_keys=True))
    if cfg.out_dir:
        print(f"artifacts in {cfg.out_dir}", file=sys.stderr)
    return 0


def _cmd_eval(args):
    pred = fileio.load_labels(args.pred)
    truth = fileio.load_labels(args.truth)
    exclude = None
    if args.exclude_indices:
        with open(args.exclude_indices, "r", encoding="utf-8") as fh:
            exclude = json.load(fh)["indices"]
    report = evaluate(pred, truth, exclude=exclude)
    print(json.dumps(metrics_json_dict(report, None), indent=2, sort_keys=True))
    return 0


def _cmd_ablate(args):
    cfg = _merged_config(args)
    result = ablation_harness(cfg)
    print(result.to_table())
    if cfg.out_dir:
        from pathlib import Path
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "ablation.json", "w", encoding="utf-8") as fh:
            json.dump(result.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polsarseg",
        description="PolSAR segmentation with 3D wavelet texture features "
                    "and MRF label refinement")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic multilook scene")
    p.add_argument("--out-dir", required=True)
    for flag, typ in (("--height", int), ("--width", int), ("--classes", int),
                      ("--looks", int), ("--seed", int),
                      ("--voronoi-sites", int)):
        p.add_argument(flag, type=typ, dest=flag[2:].replace("-", "_"))
    p.add_argument("--layout", choices=("rectangles", "voronoi"))
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("features", help="extract a feature cube to .npz")
    p.add_argument("--coherency", required=True)
    p.add_argument("--feature-mode", choices=("raw", "dwt2d", "dwt3d"))
    p.add_argument("--levels", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_features)

    p = sub.add_parser("train", help="fit the linear classifier")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--train-frac", type=float, dest="train_fraction")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="classify a feature cube")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("segment", help="run the full pipeline")
    _pipeline_flags(p)
    p.set_defaults(func=_cmd_segment)

    p = sub.add_parser("eval", help="score a prediction against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--exclude-indices",
                   help="JSON file with {\"indices\": [...]} to leave out")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ablate", help="compare the four standard configurations")
    _pipeline_flags(p)
    p.set_defaults(func=_cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, PipelineError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
