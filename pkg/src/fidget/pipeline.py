"""End-to-end stages: feature extraction, two-stage training, LOSO evaluation, prediction."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .classify import (Dataset, EnsembleConfig, Metrics, SegmentModel, SegmentPrediction, compute_metrics,
                       loso_folds, predict_segments, train_segment_classifier)
from .errors import SchemaError
from .features import HistogramConfig, SegmentationScheme, extract_features
from .fusion import FusionModel, ScoreVector, Verdict, part_scores, predict_video, score_vectors, train_late_fusion
from .io import keypoint_files, load_keypoints, read_annotations
from .skeleton import FMLabel, PoseSequence, SkeletonTopology, VideoAnnotation, normalize_sequence

log = logging.getLogger(__name__)

SEGMENT_STAGE = 0
FUSION_STAGE = 1


def load_sequences(data_dir: str | Path, topology: SkeletonTopology) -> list[PoseSequence]:
    return [load_keypoints(p, topology) for p in keypoint_files(data_dir)]


def build_dataset(sequences: Sequence[PoseSequence], annotations: dict[str, FMLabel],
                  scheme: SegmentationScheme, hist: HistogramConfig) -> Dataset:
    feats = []
    for seq in sequences:
        if seq.subject_id not in annotations:
            raise SchemaError(f"no annotation for subject {seq.subject_id}")
        ann = VideoAnnotation(seq.subject_id, annotations[seq.subject_id])
        feats.extend(extract_features(normalize_sequence(seq), ann, scheme, hist))
    present = {s.subject_id for s in sequences}
    return Dataset(tuple(feats), {s: lab for s, lab in annotations.items() if s in present})


def extract_dataset(data_dir: str | Path, topology: SkeletonTopology, scheme: SegmentationScheme,
                    hist: HistogramConfig) -> Dataset:
    annotations = read_annotations(Path(data_dir) / "annotations.csv")
    return build_dataset(load_sequences(data_dir, topology), annotations, scheme, hist)


@dataclass(frozen=True)
class TrainedModels:
    segment: SegmentModel
    fusion: FusionModel
    train_vectors: tuple[ScoreVector, ...]


def train_models(ds: Dataset, seg_cfg: EnsembleConfig, fus_cfg: EnsembleConfig, stream: Sequence[int] = (),
                 fingerprint: str = "") -> TrainedModels:
    """Segment model on all windows, then the fusion model on score vectors from that same segment model."""
    seg = train_segment_classifier(ds, seg_cfg, (*stream, SEGMENT_STAGE), fingerprint)
    vectors = score_vectors(part_scores(predict_segments(seg, ds.features)), ds.annotations)
    fus = train_late_fusion(vectors, fus_cfg, (*stream, FUSION_STAGE), fingerprint)
    return TrainedModels(seg, fus, tuple(vectors))


@dataclass(frozen=True)
class SubjectPrediction:
    segments: tuple[SegmentPrediction, ...]
    vector: ScoreVector
    verdict: Verdict


def predict_features(models: TrainedModels | tuple[SegmentModel, FusionModel], features, label=None
                     ) -> SubjectPrediction:
    seg, fus = (models.segment, models.fusion) if isinstance(models, TrainedModels) else models
    preds = predict_segments(seg, features)
    (vector,) = score_vectors(part_scores(preds))
    if label is not None:
        vector = ScoreVector(vector.subject_id, vector.scores, label)
    return SubjectPrediction(tuple(preds), vector, predict_video(fus, vector))


def predict_subject(seg: SegmentModel, fus: FusionModel, seq: PoseSequence, scheme: SegmentationScheme,
                    hist: HistogramConfig) -> SubjectPrediction:
    # the label is a placeholder; extract_features needs one but prediction ignores it
    feats = extract_features(normalize_sequence(seq), VideoAnnotation(seq.subject_id, FMLabel.FM_PLUS), scheme, hist)
    return predict_features((seg, fus), feats)


@dataclass(frozen=True)
class FoldResult:
    index: int
    held_out: str
    true_label: FMLabel
    models: TrainedModels
    prediction: SubjectPrediction
    train_feature_subjects: frozenset[str]
    train_vector_subjects: frozenset[str]


@dataclass(frozen=True)
class EvalResult:
    folds: tuple[FoldResult, ...]
    video: Metrics
    segment: Metrics

    def segment_predictions(self) -> list[SegmentPrediction]:
        return [p for f in self.folds for p in f.prediction.segments]

    def metrics_dict(self) -> dict:
        d = self.video.to_dict()
        d["per_fold"] = [{
            "fold": f.index,
            "subject": f.held_out,
            "true": f.true_label.verdict,
            "predicted": f.prediction.verdict.verdict,
            "vote_fraction": round(f.prediction.verdict.vote_fraction, 4),
            "scores": [round(s, 4) for s in f.prediction.vector.scores],
            "n_train_subjects": len(f.train_feature_subjects),
        } for f in self.folds]
        d["segment_level"] = self.segment.to_dict()
        return d


def run_fold(ds: Dataset, index: int, train_subjects: Sequence[str], held_out: str, seg_cfg: EnsembleConfig,
             fus_cfg: EnsembleConfig, fingerprint: str = "") -> FoldResult:
    train = ds.subset(train_subjects)
    test = [f for f in ds.features if f.subject_id == held_out]
    models = train_models(train, seg_cfg, fus_cfg, (index,), fingerprint)
    feat_subjects = frozenset(f.subject_id for f in train.features)
    vec_subjects = frozenset(v.subject_id for v in models.train_vectors)
    if held_out in feat_subjects or held_out in vec_subjects:
        raise AssertionError(f"fold {index}: held-out subject {held_out} leaked into training")
    label = ds.annotations[held_out]
    pred = predict_features(models, test, label)
    log.info("fold %d held out %s: %s (vote %.2f)", index, held_out, pred.verdict.verdict,
             pred.verdict.vote_fraction)
    return FoldResult(index, held_out, label, models, pred, feat_subjects, vec_subjects)


def loso_evaluate(ds: Dataset, seg_cfg: EnsembleConfig, fus_cfg: EnsembleConfig, jobs: int = 1,
                  fingerprint: str = "") -> EvalResult:
    """Leave-one-subject-out; both classifiers are retrained per fold without the held-out subject."""
    folds = loso_folds(ds)

    def job(k):
        train_subjects, held = folds[k]
        return run_fold(ds, k, train_subjects, held, seg_cfg, fus_cfg, fingerprint)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(job, range(len(folds))))
    else:
        results = [job(k) for k in range(len(folds))]
    video = compute_metrics((r.prediction.verdict.label, r.true_label) for r in results)
    segment = compute_metrics((p.predicted, ds.annotations[p.subject_id])
                              for r in results for p in r.prediction.segments)
    return EvalResult(tuple(results), video, segment)
