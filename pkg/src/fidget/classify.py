"""Seeded bagged decision-tree ensemble, segment-level model, LOSO folds and metrics."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyDataset, EmptyInput, SchemaError, SingleClass, TooFewSubjects
from .features import FusedFeature
from .skeleton import PARTS, FMLabel, Part

MODEL_VERSION = 1


@dataclass(frozen=True)
class EnsembleConfig:
    n_trees: int = 25
    max_depth: int = 4
    min_samples_leaf: int = 2
    bootstrap_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if not self.bootstrap_fraction > 0:
            raise ValueError("bootstrap_fraction must be > 0")

    def features_per_split(self, dim: int) -> int:
        return min(dim, math.ceil(math.sqrt(dim)))


@dataclass(frozen=True)
class Tree:
    """Flat node arrays. ``feature == -1`` marks a leaf; ``x[f] <= threshold`` goes left."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_label: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            feat = self.feature[node]
            inner = feat >= 0
            if not inner.any():
                return self.leaf_label[node]
            go_left = X[rows[inner], feat[inner]] <= self.threshold[node[inner]]
            node[inner] = np.where(go_left, self.left[node[inner]], self.right[node[inner]])

    def to_dict(self) -> dict:
        nodes = []
        for k in range(self.feature.size):
            if self.feature[k] < 0:
                nodes.append({"leaf_label": int(self.leaf_label[k])})
            else:
                nodes.append({
                    "feature_idx": int(self.feature[k]),
                    "threshold": float(self.threshold[k]),
                    "left": int(self.left[k]),
                    "right": int(self.right[k]),
                })
        return {"nodes": nodes}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        nodes = d["nodes"]
        n = len(nodes)
        feature = np.full(n, -1, dtype=np.int64)
        threshold = np.zeros(n)
        left = np.full(n, -1, dtype=np.int64)
        right = np.full(n, -1, dtype=np.int64)
        leaf = np.full(n, -1, dtype=np.int64)
        for k, node in enumerate(nodes):
            if "leaf_label" in node:
                leaf[k] = int(node["leaf_label"])
            else:
                feature[k] = int(node["feature_idx"])
                threshold[k] = float(node["threshold"])
                left[k] = int(node["left"])
                right[k] = int(node["right"])
        return cls(feature, threshold, left, right, leaf)


def _gini(n1: np.ndarray, n: np.ndarray) -> np.ndarray:
    p = n1 / n
    return 2.0 * p * (1.0 - p)


def _best_split(X: np.ndarray, y: np.ndarray, features: np.ndarray, min_leaf: int):
    n = y.size
    parent = float(_gini(np.array(y.sum()), np.array(n)))
    best = None
    best_score = parent
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        v = X[order, f]
        ys = y[order]
        n_left = np.arange(1, n)
        ones_left = np.cumsum(ys)[:-1]
        ones_right = ys.sum() - ones_left
        n_right = n - n_left
        ok = (v[:-1] < v[1:]) & (n_left >= min_leaf) & (n_right >= min_leaf)
        if not ok.any():
            continue
        score = (n_left * _gini(ones_left, n_left) + n_right * _gini(ones_right, n_right)) / n
        score = np.where(ok, score, np.inf)
        i = int(np.argmin(score))
        if score[i] < best_score:
            thr = 0.5 * (v[i] + v[i + 1])
            if not (v[i] <= thr < v[i + 1]):
                thr = v[i]
            best_score = float(score[i])
            best = (int(f), float(thr))
    return best


def _majority(y: np.ndarray) -> int:
    ones = int(y.sum())
    return 1 if 2 * ones >= y.size else 0


def grow_tree(X: np.ndarray, y: np.ndarray, cfg: EnsembleConfig, rng: np.random.Generator) -> Tree:
    dim = X.shape[1]
    m = cfg.features_per_split(dim)
    feature, threshold, left, right, leaf = [], [], [], [], []

    def new_node():
        for arr, val in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1), (leaf, -1)):
            arr.append(val)
        return len(feature) - 1

    def build(rows: np.ndarray, depth: int) -> int:
        k = new_node()
        ys = y[rows]
        pure = ys.min() == ys.max()
        if pure or depth >= cfg.max_depth or rows.size < 2 * cfg.min_samples_leaf:
            leaf[k] = _majority(ys)
            return k
        # sampled order is kept: among equally good splits the first sampled wins
        feats = rng.choice(dim, size=m, replace=False)
        split = _best_split(X[rows], ys, feats, cfg.min_samples_leaf)
        if split is None:
            leaf[k] = _majority(ys)
            return k
        f, thr = split
        mask = X[rows, f] <= thr
        feature[k], threshold[k] = f, thr
        left[k] = build(rows[mask], depth + 1)
        right[k] = build(rows[~mask], depth + 1)
        return k

    build(np.arange(y.size), 0)
    return Tree(np.array(feature, dtype=np.int64), np.array(threshold, dtype=np.float64),
                np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                np.array(leaf, dtype=np.int64))


@dataclass(frozen=True)
class Ensemble:
    dim: int
    trees: tuple[Tree, ...]

    def votes(self, X: np.ndarray) -> np.ndarray:
        """Fraction of trees voting FM- for each row."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise DimensionMismatch(f"expected {self.dim} features, got {X.shape[1]}")
        ones = np.zeros(X.shape[0], dtype=np.int64)
        for t in self.trees:
            ones += t.predict(X)
        return ones / len(self.trees)

    def to_dict(self) -> dict:
        return {"dim": self.dim, "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "Ensemble":
        return cls(int(d["dim"]), tuple(Tree.from_dict(t) for t in d["trees"]))


def decide(vote_fm_minus: float) -> FMLabel:
    # ties go to FM- (abnormal)
    return FMLabel.FM_MINUS if vote_fm_minus >= 0.5 else FMLabel.FM_PLUS


def fit_ensemble(X: np.ndarray, y: np.ndarray, cfg: EnsembleConfig, stream: Sequence[int] = ()) -> Ensemble:
    """Bagged trees; tree ``i`` draws from a generator seeded by ``(cfg.seed, *stream, i)``."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if y.size == 0:
        raise EmptyDataset("no training samples")
    if y.min() == y.max():
        raise SingleClass(f"training set contains only {FMLabel(int(y[0])).text}")
    n_boot = max(1, int(round(cfg.bootstrap_fraction * y.size)))
    trees = []
    for i in range(cfg.n_trees):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, *stream, i]))
        rows = rng.integers(0, y.size, size=n_boot)
        trees.append(grow_tree(X[rows], y[rows], cfg, rng))
    return Ensemble(X.shape[1], tuple(trees))


@dataclass(frozen=True)
class Dataset:
    features: tuple[FusedFeature, ...]
    annotations: dict[str, FMLabel]

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        missing = {f.subject_id for f in self.features} - set(self.annotations)
        if missing:
            raise SchemaError(f"features without annotation: {sorted(missing)}")

    @property
    def subjects(self) -> list[str]:
        return sorted(self.annotations)

    def subset(self, subjects: Iterable[str]) -> "Dataset":
        keep = set(subjects)
        return Dataset(tuple(f for f in self.features if f.subject_id in keep),
                       {s: lab for s, lab in self.annotations.items() if s in keep})


@dataclass(frozen=True)
class SegmentModel:
    """One ensemble per body part; all parts are trained on temporally pooled windows."""

    config: EnsembleConfig
    parts: dict[Part, Ensemble]
    fingerprint: str = ""

    def to_json(self) -> str:
        return json.dumps({
            "version": MODEL_VERSION,
            "kind": "segment",
            "config": asdict(self.config),
            "topology_fingerprint": self.fingerprint,
            "parts": {p.value: self.parts[p].to_dict() for p in PARTS if p in self.parts},
        }, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "SegmentModel":
        d = _load_model(text, "segment")
        return cls(EnsembleConfig(**d["config"]),
                   {Part(k): Ensemble.from_dict(v) for k, v in d["parts"].items()},
                   d.get("topology_fingerprint", ""))


def _load_model(text: str, kind: str) -> dict:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"model file is not JSON: {exc}") from None
    if d.get("version") != MODEL_VERSION or d.get("kind") != kind:
        raise SchemaError(f"expected {kind} model version {MODEL_VERSION}, got {d.get('kind')} v{d.get('version')}")
    return d


@dataclass(frozen=True)
class SegmentPrediction:
    subject_id: str
    part: Part
    segment_index: int
    predicted: FMLabel
    votes_fm_minus: float


def _stack(features: Sequence[FusedFeature]) -> tuple[np.ndarray, np.ndarray]:
    dims = {f.vector.size for f in features}
    if len(dims) != 1:
        raise DimensionMismatch(f"mixed feature lengths {sorted(dims)} within one part")
    return (np.vstack([f.vector for f in features]),
            np.array([int(f.label) for f in features], dtype=np.int64))


def train_segment_classifier(train: Dataset, cfg: EnsembleConfig, stream: Sequence[int] = (),
                             fingerprint: str = "") -> SegmentModel:
    if not train.features:
        raise EmptyDataset("no training features")
    labels = {f.label for f in train.features}
    if len(labels) < 2:
        raise SingleClass(f"training features are all {labels.pop().text}")
    parts = {}
    for k, part in enumerate(PARTS):
        feats = [f for f in train.features if f.part is part]
        if not feats:
            continue
        X, y = _stack(feats)
        parts[part] = fit_ensemble(X, y, cfg, (*stream, k))
    return SegmentModel(cfg, parts, fingerprint)


def predict_segments(model: SegmentModel, features: Sequence[FusedFeature]) -> list[SegmentPrediction]:
    votes: dict[int, float] = {}
    for part in PARTS:
        idx = [i for i, f in enumerate(features) if f.part is part]
        if not idx:
            continue
        if part not in model.parts:
            raise DimensionMismatch(f"model has no ensemble for {part.value}")
        ens = model.parts[part]
        for i in idx:
            if features[i].vector.size != ens.dim:
                raise DimensionMismatch(
                    f"{part.value} expects {ens.dim} features, got {features[i].vector.size}")
        v = ens.votes(np.vstack([features[i].vector for i in idx]))
        votes.update(zip(idx, v.tolist()))
    return [SegmentPrediction(f.subject_id, f.part, f.segment_index, decide(votes[i]), votes[i])
            for i, f in enumerate(features)]


def predict_segment(model: SegmentModel, f: FusedFeature) -> SegmentPrediction:
    return predict_segments(model, [f])[0]


def loso_folds(ds: Dataset) -> list[tuple[tuple[str, ...], str]]:
    subjects = ds.subjects
    if len(subjects) < 2:
        raise TooFewSubjects(f"leave-one-subject-out needs >= 2 subjects, got {len(subjects)}")
    return [(tuple(s for s in subjects if s != held), held) for held in subjects]


@dataclass(frozen=True)
class Metrics:
    """Confusion counts with FM- (abnormal) as the positive class. Undefined ratios are None."""

    tp: int
    fn: int
    tn: int
    fp: int
    accuracy: float | None = field(init=False)
    sensitivity: float | None = field(init=False)
    specificity: float | None = field(init=False)

    def __post_init__(self):
        total = self.tp + self.fn + self.tn + self.fp
        object.__setattr__(self, "accuracy", _ratio(self.tp + self.tn, total))
        object.__setattr__(self, "sensitivity", _ratio(self.tp, self.tp + self.fn))
        object.__setattr__(self, "specificity", _ratio(self.tn, self.tn + self.fp))

    def to_dict(self, places: int = 4) -> dict:
        def r(x):
            return None if x is None else round(x, places)

        return {"accuracy": r(self.accuracy), "sensitivity": r(self.sensitivity),
                "specificity": r(self.specificity),
                "tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def compute_metrics(preds: Iterable[tuple[FMLabel, FMLabel]]) -> Metrics:
    """``preds`` is a sequence of ``(predicted, true)`` pairs."""
    tp = fn = tn = fp = 0
    n = 0
    for predicted, true in preds:
        n += 1
        if true == FMLabel.FM_MINUS:
            if predicted == FMLabel.FM_MINUS:
                tp += 1
            else:
                fn += 1
        else:
            if predicted == FMLabel.FM_PLUS:
                tn += 1
            else:
                fp += 1
    if n == 0:
        raise EmptyInput("no predictions to score")
    return Metrics(tp, fn, tn, fp)
