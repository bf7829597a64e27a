"""Keypoint JSON, annotation and prediction CSVs, and synthetic cohort persistence."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .classify import SegmentPrediction
from .errors import JointMismatch, ParseError, SchemaError
from .skeleton import FMLabel, Part, PoseSequence, SkeletonTopology, VideoAnnotation
from .synth import Cohort


def load_keypoints(path: str | Path, topology: SkeletonTopology,
                   remap: Mapping[str, str] | None = None) -> PoseSequence:
    """Parse ``{"subject", "fps", "joints", "frames"}`` and reorder joints to match ``topology``.

    ``remap`` renames file joints onto topology joints. File joints mapped to
    ``None`` or absent from the topology are rejected unless remapped.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: top level must be an object")
    for key in ("subject", "joints", "frames"):
        if key not in doc:
            raise SchemaError(f"{path}: missing field {key!r}")
    names = [remap.get(n, n) if remap else n for n in doc["joints"]]
    for n in names:
        if n not in topology.joints:
            raise JointMismatch(f"{path}: joint {n!r} is not in the topology")
    missing = [n for n in topology.joints if n not in names]
    if missing:
        raise JointMismatch(f"{path}: topology joints missing from file: {missing}")
    frames = doc["frames"]
    if not isinstance(frames, list) or not frames:
        raise SchemaError(f"{path}: frames must be a non-empty list")
    for t, frame in enumerate(frames):
        if not isinstance(frame, list) or len(frame) != len(names):
            got = len(frame) if isinstance(frame, list) else type(frame).__name__
            raise SchemaError(f"{path}: frame {t} has {got} points, expected {len(names)}")
        for j, pt in enumerate(frame):
            if not isinstance(pt, list) or len(pt) != 2:
                raise SchemaError(f"{path}: frame {t} joint {names[j]!r} is not an [x, y] pair")
    try:
        arr = np.array(frames, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: non-numeric coordinate: {exc}") from None
    order = [names.index(n) for n in topology.joints]
    return PoseSequence(str(doc["subject"]), arr[:, order], topology, float(doc.get("fps", 30.0)))


def save_keypoints(path: str | Path, seq: PoseSequence) -> None:
    doc = {
        "subject": seq.subject_id,
        "fps": seq.fps,
        "joints": list(seq.topology.joints),
        "frames": seq.frames.tolist(),
    }
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n")


def write_annotations(path: str | Path, annotations: Iterable[VideoAnnotation]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "label"])
        for a in sorted(annotations, key=lambda a: a.subject_id):
            w.writerow([a.subject_id, a.label.text])


def read_annotations(path: str | Path) -> dict[str, FMLabel]:
    out: dict[str, FMLabel] = {}
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                sid = row["subject_id"]
                label = FMLabel.parse(row["label"])
            except KeyError as exc:
                raise SchemaError(f"{path}: missing column {exc}") from None
            if sid in out:
                raise SchemaError(f"{path}: duplicate annotation for {sid}")
            out[sid] = label
    return out


def write_segment_predictions(path: str | Path, preds: Iterable[SegmentPrediction]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "part", "segment_index", "predicted", "votes_fm_minus"])
        for p in preds:
            w.writerow([p.subject_id, p.part.value, p.segment_index, p.predicted.text, f"{p.votes_fm_minus:.4f}"])


def read_segment_predictions(path: str | Path) -> list[SegmentPrediction]:
    out = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                out.append(SegmentPrediction(row["subject_id"], Part(row["part"]), int(row["segment_index"]),
                                             FMLabel.parse(row["predicted"]), float(row["votes_fm_minus"])))
            except (KeyError, ValueError) as exc:
                raise SchemaError(f"{path}: bad prediction row {row}: {exc}") from None
    return out


def write_cohort(data_dir: str | Path, cohort: Cohort) -> None:
    data_dir = Path(data_dir)
    (data_dir / "keypoints").mkdir(parents=True, exist_ok=True)
    for seq in cohort.sequences:
        save_keypoints(data_dir / "keypoints" / f"{seq.subject_id}.json", seq)
    write_annotations(data_dir / "annotations.csv", cohort.annotations)
    with (data_dir / "ground_truth.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "part", "segment_index", "behavior"])
        for sid, part, k, behavior in cohort.ground_truth():
            w.writerow([sid, part.value, k, behavior.value])


def keypoint_files(data_dir: str | Path) -> list[Path]:
    kp = Path(data_dir) / "keypoints"
    if not kp.is_dir():
        raise SchemaError(f"{data_dir}: no keypoints/ directory")
    return sorted(kp.glob("*.json"))
