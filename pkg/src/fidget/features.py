"""Per-part, per-window orientation and displacement histograms.

Orientation histograms bin the direction of each bone (proximal to distal)
per frame; displacement histograms bin the direction of each joint's
frame-to-frame motion. Both use ``bins`` half-open sectors starting at angle 0
and running counter-clockwise, and both are L1-normalised per bone/joint.
The fused vector for one (part, window) is all bone blocks followed by all
joint blocks.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import SchemaError, TooShort
from .skeleton import PARTS, FMLabel, Part, PoseSequence, SkeletonTopology, VideoAnnotation

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class HistogramConfig:
    bins: int = 8
    displacement_epsilon: float = 1e-6

    def __post_init__(self):
        if self.bins < 2:
            raise ValueError("bins must be >= 2")
        if not self.displacement_epsilon > 0:
            raise ValueError("displacement_epsilon must be > 0")


@dataclass(frozen=True)
class SegmentationScheme:
    window_len: int = 100

    def __post_init__(self):
        if self.window_len < 2:
            raise ValueError("window_len must be >= 2")


@dataclass(frozen=True)
class FusedFeature:
    subject_id: str
    part: Part
    segment_index: int
    vector: np.ndarray
    label: FMLabel


def segment_windows(seq: PoseSequence, scheme: SegmentationScheme) -> list[range]:
    """Consecutive non-overlapping windows; a trailing partial window is dropped."""
    w = scheme.window_len
    if seq.n_frames < w:
        raise TooShort(f"{seq.subject_id}: {seq.n_frames} frames, window needs {w}")
    return [range(k * w, (k + 1) * w) for k in range(seq.n_frames // w)]


def bin_edges(bins: int) -> np.ndarray:
    return np.arange(bins + 1) * TWO_PI / bins


def direction_bins(dx, dy, bins: int) -> np.ndarray:
    """Sector index of each direction: edges[k] <= theta < edges[k + 1], theta in [0, 2*pi)."""
    theta = np.arctan2(dy, dx)
    theta = np.where(theta < 0, theta + TWO_PI, theta)
    idx = np.searchsorted(bin_edges(bins), theta, side="right") - 1
    # theta == 2*pi (a tiny negative angle wrapped) belongs to bin 0
    return np.where(theta >= TWO_PI, 0, np.minimum(idx, bins - 1))


def _normalised_counts(idx: np.ndarray, valid: np.ndarray, bins: int) -> np.ndarray:
    """idx, valid: (n_items, n_samples) -> (n_items, bins) L1-normalised, uniform when empty."""
    out = np.zeros((idx.shape[0], bins))
    for k in range(idx.shape[0]):
        counts = np.bincount(idx[k][valid[k]], minlength=bins).astype(np.float64)
        total = counts.sum()
        out[k] = counts / total if total > 0 else 1.0 / bins
    return out


def orientation_histograms(frames: np.ndarray, bones: Sequence[tuple[int, int]], window: range,
                           cfg: HistogramConfig) -> np.ndarray:
    if len(bones) == 0:
        return np.zeros((0, cfg.bins))
    w = frames[window.start:window.stop]
    prox = np.array([b[0] for b in bones])
    dist = np.array([b[1] for b in bones])
    vec = w[:, dist] - w[:, prox]  # (T, B, 2)
    dx, dy = vec[..., 0].T, vec[..., 1].T
    valid = (dx != 0) | (dy != 0)
    return _normalised_counts(direction_bins(dx, dy, cfg.bins), valid, cfg.bins)


def displacement_histograms(frames: np.ndarray, joints: Sequence[int], window: range,
                            cfg: HistogramConfig) -> np.ndarray:
    if len(joints) == 0:
        return np.zeros((0, cfg.bins))
    w = frames[window.start:window.stop][:, list(joints)]
    d = np.diff(w, axis=0)  # (T-1, J, 2)
    dx, dy = d[..., 0].T, d[..., 1].T
    valid = np.hypot(dx, dy) >= cfg.displacement_epsilon
    return _normalised_counts(direction_bins(dx, dy, cfg.bins), valid, cfg.bins)


def hojo2d(seq: PoseSequence, window: range, part: Part, cfg: HistogramConfig) -> np.ndarray:
    """Per-bone orientation histograms for one part, shape (n_bones, bins)."""
    bones = seq.topology.part_bones(part)
    if not bones:
        raise ValueError(f"part {part.value} has no bones")
    _check_window(seq, window, 1)
    return orientation_histograms(seq.frames, bones, window, cfg)


def hojd2d(seq: PoseSequence, window: range, part: Part, cfg: HistogramConfig) -> np.ndarray:
    """Per-joint displacement-direction histograms for one part, shape (n_joints, bins)."""
    joints = seq.topology.part_joints(part)
    if not joints:
        raise ValueError(f"part {part.value} has no joints")
    _check_window(seq, window, 2)
    return displacement_histograms(seq.frames, joints, window, cfg)


def _check_window(seq: PoseSequence, window: range, min_len: int) -> None:
    if window.start < 0 or window.stop > seq.n_frames or len(window) < min_len:
        raise ValueError(f"window {window} invalid for {seq.n_frames} frames")


def fuse(orientation: np.ndarray, displacement: np.ndarray) -> np.ndarray:
    return np.concatenate([orientation.ravel(), displacement.ravel()])


def feature_dim(topology: SkeletonTopology, part: Part, cfg: HistogramConfig) -> int:
    spec = topology.parts[part]
    return cfg.bins * (len(spec.bones) + len(spec.joints))


def extract_features(seq: PoseSequence, annotation: VideoAnnotation, scheme: SegmentationScheme,
                     cfg: HistogramConfig) -> list[FusedFeature]:
    """Fused features ordered by segment index, then part. Expects a normalised sequence."""
    topo = seq.topology
    out = []
    for k, window in enumerate(segment_windows(seq, scheme)):
        for part in PARTS:
            vec = fuse(
                orientation_histograms(seq.frames, topo.part_bones(part), window, cfg),
                displacement_histograms(seq.frames, topo.part_joints(part), window, cfg),
            )
            vec.setflags(write=False)
            out.append(FusedFeature(seq.subject_id, part, k, vec, annotation.label))
    return out


def write_features(path: str | Path, features: Iterable[FusedFeature], *,
                   sidecar: dict | None = None) -> None:
    features = list(features)
    width = max((f.vector.size for f in features), default=0)
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["subject_id", "part", "segment_index", "label"] + [f"v{i}" for i in range(width)])
        for f in features:
            cells = [repr(float(v)) for v in f.vector]
            cells += [""] * (width - len(cells))
            writer.writerow([f.subject_id, f.part.value, f.segment_index, f.label.text] + cells)
    if sidecar is not None:
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def read_features(path: str | Path) -> list[FusedFeature]:
    out = []
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:4] != ["subject_id", "part", "segment_index", "label"]:
            raise SchemaError(f"{path}: bad feature header")
        for lineno, row in enumerate(reader, start=2):
            try:
                values = np.array([float(v) for v in row[4:] if v != ""])
                values.setflags(write=False)
                out.append(FusedFeature(row[0], Part(row[1]), int(row[2]), values, FMLabel.parse(row[3])))
            except (ValueError, IndexError) as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from None
    return out


def config_dict(scheme: SegmentationScheme, cfg: HistogramConfig) -> dict:
    return {"segmentation": asdict(scheme), "histogram": asdict(cfg)}
