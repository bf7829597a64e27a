"""Command-line driver: synth | extract | train | eval | predict | visualize.

Every subcommand takes ``--config PATH``; ``--seed``, ``--jobs`` and ``--out``
override the config. Outputs are staged in a scratch directory and only moved
into place when the stage succeeds. On failure a single line
``<ErrorClass>: <message>`` goes to stderr and the exit code is non-zero.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import shutil
import sys
import tempfile
from pathlib import Path

from .classify import Dataset, SegmentModel
from .config import PipelineConfig, load_config
from .errors import ConfigError, FidgetError, SchemaError
from .features import config_dict, read_features, write_features
from .fusion import FusionModel, write_scores, write_verdicts
from .io import (load_keypoints, read_segment_predictions, write_cohort,
                 write_segment_predictions)
from .pipeline import extract_dataset, loso_evaluate, predict_subject, train_models
from .synth import generate_cohort
from .viz import fit_to_frame, render_sequence

log = logging.getLogger("fidget")

SEGMENT_MODEL = "segment_model.json"
FUSION_MODEL = "fusion_model.json"


@contextlib.contextmanager
def staged_output(out: Path):
    """Yield a scratch dir; on success its contents replace same-named entries in ``out``."""
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    out.mkdir(parents=True, exist_ok=True)
    for item in sorted(tmp.iterdir()):
        target = out / item.name
        if target.is_dir():
            shutil.rmtree(target)
        elif target.exists():
            target.unlink()
        shutil.move(str(item), str(target))
    shutil.rmtree(tmp, ignore_errors=True)


def _require_dir(path: str | None, what: str) -> Path:
    if not path:
        raise ConfigError(f"no {what} directory configured")
    p = Path(path)
    if not p.is_dir():
        raise ConfigError(f"{what} directory {p} does not exist")
    return p


def _require_file(path: str | Path | None, what: str) -> Path:
    if not path:
        raise ConfigError(f"no {what} given")
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} {p} does not exist")
    return p


def _out_dir(args, cfg: PipelineConfig, default: str | None) -> Path:
    out = args.out or default or cfg.paths.out
    if not out:
        raise ConfigError("no output directory (use --out)")
    return Path(out)


def _echo_config(dst: Path, cfg: PipelineConfig) -> None:
    (dst / "config.json").write_text(cfg.to_json())


def _write(path: Path, text: str) -> None:
    path.write_text(text + ("" if text.endswith("\n") else "\n"))


def cmd_synth(args, cfg: PipelineConfig) -> int:
    out = _out_dir(args, cfg, cfg.paths.data)
    topology = cfg.load_topology()
    s = cfg.synth
    cohort = generate_cohort(s.n_normal, s.n_abnormal, s.n_frames, cfg.seed, topology,
                             cfg.segmentation, cfg.histogram, s.noise)
    with staged_output(out) as tmp:
        write_cohort(tmp, cohort)
        _echo_config(tmp, cfg)
    print(f"wrote {len(cohort.sequences)} subjects to {out} (fingerprint {cohort.fingerprint()[:16]})")
    return 0


def cmd_extract(args, cfg: PipelineConfig) -> int:
    data = _require_dir(args.data or cfg.paths.data, "data")
    out = _out_dir(args, cfg, cfg.paths.features)
    ds = extract_dataset(data, cfg.load_topology(), cfg.segmentation, cfg.histogram)
    with staged_output(out) as tmp:
        sidecar = {**config_dict(cfg.segmentation, cfg.histogram), "fingerprint": cfg.fingerprint()}
        write_features(tmp / "features.csv", ds.features, sidecar=sidecar)
        _echo_config(tmp, cfg)
    print(f"wrote {len(ds.features)} fused features for {len(ds.subjects)} subjects to {out}")
    return 0


def _dataset_from_features(path: Path) -> Dataset:
    feats = read_features(path)
    labels = {}
    for f in feats:
        if labels.setdefault(f.subject_id, f.label) != f.label:
            raise SchemaError(f"{path}: subject {f.subject_id} has mixed labels")
    return Dataset(tuple(feats), labels)


def _check_sidecar(features_csv: Path, cfg: PipelineConfig) -> None:
    sidecar = features_csv.with_suffix(".json")
    if sidecar.exists():
        fp = json.loads(sidecar.read_text()).get("fingerprint")
        if fp and fp != cfg.fingerprint():
            raise ConfigError(f"{features_csv} was extracted with a different topology/histogram config")


def cmd_train(args, cfg: PipelineConfig) -> int:
    features_csv = _require_file(args.features or (Path(cfg.paths.features) / "features.csv"
                                                   if cfg.paths.features else None), "feature file")
    _check_sidecar(features_csv, cfg)
    out = _out_dir(args, cfg, cfg.paths.models)
    ds = _dataset_from_features(features_csv)
    models = train_models(ds, cfg.segment_ensemble, cfg.fusion_ensemble, fingerprint=cfg.fingerprint())
    with staged_output(out) as tmp:
        _write(tmp / SEGMENT_MODEL, models.segment.to_json())
        write_scores(tmp / "scores.csv", models.train_vectors)
        _write(tmp / FUSION_MODEL, models.fusion.to_json())
        _echo_config(tmp, cfg)
    print(f"trained on {len(ds.subjects)} subjects; models in {out}")
    return 0


def cmd_eval(args, cfg: PipelineConfig) -> int:
    out = _out_dir(args, cfg, None)
    if args.features:
        features_csv = _require_file(args.features, "feature file")
        _check_sidecar(features_csv, cfg)
        ds = _dataset_from_features(features_csv)
    else:
        ds = extract_dataset(_require_dir(args.data or cfg.paths.data, "data"), cfg.load_topology(),
                             cfg.segmentation, cfg.histogram)
    res = loso_evaluate(ds, cfg.segment_ensemble, cfg.fusion_ensemble, jobs=args.jobs,
                        fingerprint=cfg.fingerprint())
    with staged_output(out) as tmp:
        _write(tmp / "metrics.json", json.dumps(res.metrics_dict(), indent=2, sort_keys=True))
        write_segment_predictions(tmp / "segment_predictions.csv", res.segment_predictions())
        write_scores(tmp / "scores.csv", [f.prediction.vector for f in res.folds])
        write_verdicts(tmp / "video_predictions.csv", [f.prediction.verdict for f in res.folds])
        for f in res.folds:
            fold_dir = tmp / "folds" / f.held_out
            fold_dir.mkdir(parents=True)
            _write(fold_dir / SEGMENT_MODEL, f.models.segment.to_json())
            _write(fold_dir / FUSION_MODEL, f.models.fusion.to_json())
        _echo_config(tmp, cfg)
    m = res.video
    print(f"LOSO over {len(res.folds)} subjects: accuracy {m.accuracy:.2%}, "
          f"sensitivity {_pct(m.sensitivity)}, specificity {_pct(m.specificity)}")
    return 0


def _pct(x):
    return "n/a" if x is None else f"{x:.2%}"


def _load_models(models_dir: Path, cfg: PipelineConfig) -> tuple[SegmentModel, FusionModel]:
    seg = SegmentModel.from_json(_require_file(models_dir / SEGMENT_MODEL, "segment model").read_text())
    fus = FusionModel.from_json(_require_file(models_dir / FUSION_MODEL, "fusion model").read_text())
    for m in (seg, fus):
        if m.fingerprint and m.fingerprint != cfg.fingerprint():
            raise ConfigError(f"model in {models_dir} was trained with a different topology/histogram config")
    return seg, fus


def cmd_predict(args, cfg: PipelineConfig) -> int:
    models_dir = _require_dir(args.models or cfg.paths.models, "models")
    kp = _require_file(args.keypoints, "keypoint file")
    out = _out_dir(args, cfg, None)
    seg, fus = _load_models(models_dir, cfg)
    seq = load_keypoints(kp, cfg.load_topology())
    pred = predict_subject(seg, fus, seq, cfg.segmentation, cfg.histogram)
    with staged_output(out) as tmp:
        write_segment_predictions(tmp / "segment_predictions.csv", pred.segments)
        write_scores(tmp / "scores.csv", [pred.vector])
        write_verdicts(tmp / "verdict.csv", [pred.verdict])
        _echo_config(tmp, cfg)
    scores = ", ".join(f"{s:.2f}" for s in pred.vector.scores)
    print(f"{seq.subject_id}: {pred.verdict.verdict} (vote {pred.verdict.vote_fraction:.2f}; part scores {scores})")
    return 0


def cmd_visualize(args, cfg: PipelineConfig) -> int:
    kp = _require_file(args.keypoints, "keypoint file")
    preds_csv = _require_file(args.predictions, "segment prediction file")
    frames = args.frames or cfg.paths.frames
    masks = args.masks or cfg.paths.masks
    if frames:
        _require_dir(frames, "frames")
    if masks:
        _require_dir(masks, "masks")
    out = _out_dir(args, cfg, None)
    seq = load_keypoints(kp, cfg.load_topology())
    preds = [p for p in read_segment_predictions(preds_csv) if p.subject_id == seq.subject_id]
    if not preds:
        raise SchemaError(f"{preds_csv} has no predictions for subject {seq.subject_id}")
    if not args.pixel_space:
        if frames:
            raise ConfigError("--frames requires pixel-space keypoints (pass --pixel-space)")
        seq = fit_to_frame(seq, *cfg.viz.canvas)
    with staged_output(out) as tmp:
        written = render_sequence(tmp, seq, preds, cfg.segmentation, frames_dir=frames, masks_dir=masks,
                                  canvas=cfg.viz.canvas, spec=cfg.viz.overlay(), radii=cfg.viz.radii(),
                                  jobs=args.jobs)
        _echo_config(tmp, cfg)
    print(f"rendered {len(written)} frames to {out}")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "extract": cmd_extract,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "visualize": cmd_visualize,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="pipeline config JSON")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--jobs", type=int, default=1, help="worker threads")
    common.add_argument("--out", help="output directory")

    parser = argparse.ArgumentParser(prog="fidget", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="write a synthetic cohort")
    p = sub.add_parser("extract", parents=[common], help="keypoints + annotations -> feature CSV")
    p.add_argument("--data")
    p = sub.add_parser("train", parents=[common], help="features -> segment and fusion models")
    p.add_argument("--features")
    p = sub.add_parser("eval", parents=[common], help="leave-one-subject-out evaluation")
    p.add_argument("--data")
    p.add_argument("--features")
    p = sub.add_parser("predict", parents=[common], help="score one subject")
    p.add_argument("--models")
    p.add_argument("--keypoints", required=True)
    p = sub.add_parser("visualize", parents=[common], help="render FM- overlays")
    p.add_argument("--keypoints", required=True)
    p.add_argument("--predictions", required=True, help="segment_predictions.csv from predict or eval")
    p.add_argument("--frames", help="directory of input PNG frames (default: blank canvas)")
    p.add_argument("--masks", help="directory of {frame:06}_{class}.png masks (default: capsules)")
    p.add_argument("--pixel-space", action="store_true", help="keypoints are already in pixel coordinates")
    return parser


def _setup_logging() -> None:
    level = os.environ.get("FIDGET_LOG", "error").upper()
    if level not in {"ERROR", "INFO", "DEBUG"}:
        level = "ERROR"
    logging.basicConfig(level=getattr(logging, level), format="%(levelname)s %(name)s: %(message)s")


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        return COMMANDS[args.command](args, cfg)
    except FidgetError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"IOError: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
