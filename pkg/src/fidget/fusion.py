"""Per-part scores from segment decisions and the video-level late-fusion classifier."""
from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .classify import (MODEL_VERSION, Ensemble, EnsembleConfig, SegmentPrediction, _load_model,
                       decide, fit_ensemble)
from .errors import DimensionMismatch, EmptyDataset, MissingPart, SchemaError
from .skeleton import PARTS, FMLabel, Part

SCORE_COLUMNS = ("left_arm", "right_arm", "left_leg", "right_leg", "head_torso")


@dataclass(frozen=True)
class BodyPartScore:
    subject_id: str
    part: Part
    s: float
    n_segments: int


@dataclass(frozen=True)
class ScoreVector:
    subject_id: str
    scores: tuple[float, ...]  # ordered as PARTS
    label: FMLabel | None = None

    def __post_init__(self):
        if len(self.scores) != len(PARTS):
            raise DimensionMismatch(f"score vector needs {len(PARTS)} entries, got {len(self.scores)}")


def part_scores(preds: Iterable[SegmentPrediction]) -> list[BodyPartScore]:
    """Mean of the 0/1-coded decided labels per (subject, part), ordered by subject then part."""
    counts: dict[tuple[str, Part], list[int]] = defaultdict(lambda: [0, 0])
    for p in preds:
        c = counts[(p.subject_id, p.part)]
        c[0] += int(p.predicted)
        c[1] += 1
    subjects = sorted({s for s, _ in counts})
    out = []
    for subject in subjects:
        for part in PARTS:
            if (subject, part) not in counts:
                raise MissingPart(f"{subject}: no segment predictions for {part.value}")
            ones, n = counts[(subject, part)]
            out.append(BodyPartScore(subject, part, ones / n, n))
    return out


def score_vectors(scores: Sequence[BodyPartScore], labels: dict[str, FMLabel] | None = None) -> list[ScoreVector]:
    by_subject: dict[str, dict[Part, float]] = defaultdict(dict)
    for s in scores:
        by_subject[s.subject_id][s.part] = s.s
    out = []
    for subject in sorted(by_subject):
        row = by_subject[subject]
        missing = [p.value for p in PARTS if p not in row]
        if missing:
            raise MissingPart(f"{subject}: missing scores for {missing}")
        label = labels.get(subject) if labels else None
        out.append(ScoreVector(subject, tuple(row[p] for p in PARTS), label))
    return out


@dataclass(frozen=True)
class FusionModel:
    config: EnsembleConfig
    ensemble: Ensemble
    fingerprint: str = ""

    def to_json(self) -> str:
        return json.dumps({
            "version": MODEL_VERSION,
            "kind": "fusion",
            "config": asdict(self.config),
            "topology_fingerprint": self.fingerprint,
            **self.ensemble.to_dict(),
        }, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "FusionModel":
        d = _load_model(text, "fusion")
        return cls(EnsembleConfig(**d["config"]), Ensemble.from_dict(d), d.get("topology_fingerprint", ""))


def train_late_fusion(vectors: Sequence[ScoreVector], cfg: EnsembleConfig, stream: Sequence[int] = (),
                      fingerprint: str = "") -> FusionModel:
    if not vectors:
        raise EmptyDataset("no score vectors")
    if any(v.label is None for v in vectors):
        raise SchemaError("every training score vector needs a label")
    X = np.array([v.scores for v in vectors], dtype=np.float64)
    y = np.array([int(v.label) for v in vectors], dtype=np.int64)
    return FusionModel(cfg, fit_ensemble(X, y, cfg, stream), fingerprint)


@dataclass(frozen=True)
class Verdict:
    subject_id: str
    label: FMLabel
    vote_fraction: float  # fraction of trees voting abnormal

    @property
    def verdict(self) -> str:
        return self.label.verdict


def predict_video(model: FusionModel, v: ScoreVector) -> Verdict:
    vote = float(model.ensemble.votes(np.array(v.scores))[0])
    return Verdict(v.subject_id, decide(vote), vote)


def write_scores(path: str | Path, vectors: Iterable[ScoreVector]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", *SCORE_COLUMNS, "label"])
        for v in vectors:
            w.writerow([v.subject_id, *(repr(float(s)) for s in v.scores), v.label.text if v.label is not None else ""])


def read_scores(path: str | Path) -> list[ScoreVector]:
    out = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            try:
                label = FMLabel.parse(row["label"]) if row.get("label") else None
                out.append(ScoreVector(row["subject_id"], tuple(float(row[c]) for c in SCORE_COLUMNS), label))
            except (KeyError, ValueError) as exc:
                raise SchemaError(f"{path}: bad score row {row}: {exc}") from None
    return out


def write_verdicts(path: str | Path, verdicts: Iterable[Verdict]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "verdict", "vote_fraction"])
        for v in verdicts:
            w.writerow([v.subject_id, v.verdict, f"{v.vote_fraction:.4f}"])
