"""Seeded synthetic infant pose sequences with known per-part movement behaviour.

Fidgety parts take small steps in uniformly random directions, monotonous
parts oscillate along one fixed axis, still parts only carry sub-threshold
jitter. Any non-fidgety part makes the video FM-.
"""
from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidProfile
from .features import HistogramConfig, SegmentationScheme, direction_bins, displacement_histograms, segment_windows
from .skeleton import PARTS, FMLabel, Part, PoseSequence, SkeletonTopology, VideoAnnotation, default_topology

FIDGETY_STEP = 0.02
MONOTONOUS_AMPLITUDE = 0.05
# Accept a fidgety window only if its direction histogram is this flat. Leaves
# headroom below the 0.15 range bound for bin flips caused by rescaling.
FIDGETY_MAX_RANGE = 0.12

# Supine infant seen from above, image axes (y grows downwards), subject's
# left on the +x side. Neck to pelvis is one unit long.
BASE_POSE = {
    "head": (0.0, -1.35), "neck": (0.0, -1.0), "pelvis": (0.0, 0.0),
    "shoulder_l": (0.35, -0.95), "elbow_l": (0.65, -0.7), "wrist_l": (0.75, -0.4),
    "shoulder_r": (-0.35, -0.95), "elbow_r": (-0.65, -0.7), "wrist_r": (-0.75, -0.4),
    "hip_l": (0.2, 0.05), "knee_l": (0.35, 0.5), "ankle_l": (0.35, 0.95),
    "hip_r": (-0.2, 0.05), "knee_r": (-0.35, 0.5), "ankle_r": (-0.35, 0.95),
}


class Behavior(str, enum.Enum):
    FIDGETY = "Fidgety"
    MONOTONOUS = "Monotonous"
    STILL = "Still"


@dataclass(frozen=True)
class SubjectProfile:
    subject_id: str
    behaviors: dict[Part, Behavior]
    n_frames: int = 1000
    noise: float = 0.0
    seed: int = 0
    scheme: SegmentationScheme = field(default_factory=SegmentationScheme)
    histogram: HistogramConfig = field(default_factory=HistogramConfig)

    def __post_init__(self):
        if set(self.behaviors) != set(PARTS):
            raise InvalidProfile(f"{self.subject_id}: behaviours must cover all five parts")
        if self.n_frames < self.scheme.window_len:
            raise InvalidProfile(f"{self.subject_id}: {self.n_frames} frames is shorter than one window")
        if not self.noise >= 0:
            raise InvalidProfile(f"{self.subject_id}: noise must be >= 0")

    @property
    def label(self) -> FMLabel:
        normal = all(b is Behavior.FIDGETY for b in self.behaviors.values())
        return FMLabel.FM_PLUS if normal else FMLabel.FM_MINUS

    @classmethod
    def uniform(cls, subject_id: str, behavior: Behavior, **kw) -> "SubjectProfile":
        return cls(subject_id, {p: behavior for p in PARTS}, **kw)


def base_pose(topology: SkeletonTopology) -> np.ndarray:
    pose = np.zeros((topology.n_joints, 2))
    for j, name in enumerate(topology.joints):
        if name in BASE_POSE:
            pose[j] = BASE_POSE[name]
        else:
            # unknown joints go on a ring so every bone keeps a non-zero length
            a = 2 * math.pi * j / topology.n_joints
            pose[j] = (0.8 * math.cos(a), 0.8 * math.sin(a))
    return pose


def _fidgety_directions(n_frames: int, windows: list[range], rng: np.random.Generator,
                        hist: HistogramConfig) -> np.ndarray:
    angles = rng.uniform(0.0, 2 * math.pi, n_frames - 1)
    for w in windows:
        # the step into frame t is angles[t - 1]; steps inside the window are t in (start, stop)
        lo, hi = w.start, w.stop - 1
        while True:
            counts = np.bincount(direction_bins(np.cos(angles[lo:hi]), np.sin(angles[lo:hi]), hist.bins),
                                 minlength=hist.bins) / (hi - lo)
            if counts.max() - counts.min() < FIDGETY_MAX_RANGE:
                break
            angles[lo:hi] = rng.uniform(0.0, 2 * math.pi, hi - lo)
    return angles


def monotonous_axis(bins: int) -> float:
    # centre of the first sector, so both travel directions sit mid-sector
    return math.pi / bins


def generate_subject(profile: SubjectProfile, topology: SkeletonTopology | None = None
                     ) -> tuple[PoseSequence, VideoAnnotation]:
    topology = topology or default_topology()
    T = profile.n_frames
    hist = profile.histogram
    rng = np.random.default_rng(profile.seed)
    windows = [range(k * profile.scheme.window_len, (k + 1) * profile.scheme.window_len)
               for k in range(T // profile.scheme.window_len)]
    frames = np.repeat(base_pose(topology)[None], T, axis=0)

    for part in PARTS:
        behavior = profile.behaviors[part]
        joints = topology.part_joints(part)
        if behavior is Behavior.FIDGETY:
            for j in joints:
                a = _fidgety_directions(T, windows, rng, hist)
                steps = FIDGETY_STEP * np.stack([np.cos(a), np.sin(a)], axis=1)
                frames[1:, j] += np.cumsum(steps, axis=0)
        elif behavior is Behavior.MONOTONOUS:
            a = monotonous_axis(hist.bins)
            period = rng.uniform(16.0, 40.0)
            phase = rng.uniform(0.0, 2 * math.pi)
            wave = MONOTONOUS_AMPLITUDE * np.sin(2 * math.pi * np.arange(T) / period + phase)
            for j in joints:
                frames[:, j] += wave[:, None] * np.array([math.cos(a), math.sin(a)])
        else:
            # per-axis jitter bounded by 0.2*eps keeps every step below 0.57*eps
            bound = 0.2 * hist.displacement_epsilon
            for j in joints:
                frames[:, j] += np.clip(rng.normal(0.0, 0.25 * bound, (T, 2)), -bound, bound)
        if profile.noise > 0 and behavior is not Behavior.STILL:
            frames[:, joints] += rng.normal(0.0, profile.noise, (T, len(joints), 2))

    seq = PoseSequence(profile.subject_id, frames, topology)
    return seq, VideoAnnotation(profile.subject_id, profile.label)


def separability_report(seq: PoseSequence, profile: SubjectProfile) -> dict[Part, list[float]]:
    """Per part, the worst-case per-window statistic backing the generator's guarantees.

    Fidgety parts: max - min bin of the flattest-failing joint (should be < 0.15).
    Monotonous parts: smallest L1 distance of any joint's histogram from uniform (should be > 0.5).
    Still parts: largest deviation from the uniform histogram (should be 0).
    """
    hist = profile.histogram
    uniform = np.full(hist.bins, 1.0 / hist.bins)
    out: dict[Part, list[float]] = {}
    for part in PARTS:
        joints = seq.topology.part_joints(part)
        vals = []
        for w in segment_windows(seq, profile.scheme):
            h = displacement_histograms(seq.frames, joints, w, hist)
            behavior = profile.behaviors[part]
            if behavior is Behavior.FIDGETY:
                vals.append(float((h.max(axis=1) - h.min(axis=1)).max()))
            elif behavior is Behavior.MONOTONOUS:
                vals.append(float(np.abs(h - uniform).sum(axis=1).min()))
            else:
                vals.append(float(np.abs(h - uniform).max()))
        out[part] = vals
    return out


@dataclass(frozen=True)
class Cohort:
    profiles: tuple[SubjectProfile, ...]
    sequences: tuple[PoseSequence, ...]
    annotations: tuple[VideoAnnotation, ...]

    def ground_truth(self) -> list[tuple[str, Part, int, Behavior]]:
        rows = []
        for prof, seq in zip(self.profiles, self.sequences):
            for k in range(seq.n_frames // prof.scheme.window_len):
                for part in PARTS:
                    rows.append((prof.subject_id, part, k, prof.behaviors[part]))
        return rows

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for seq, ann in zip(self.sequences, self.annotations):
            h.update(seq.subject_id.encode())
            h.update(np.ascontiguousarray(seq.frames).tobytes())
            h.update(bytes([int(ann.label)]))
        return h.hexdigest()


def generate_cohort(n_normal: int = 8, n_abnormal: int = 4, n_frames: int = 1000, seed: int = 0,
                    topology: SkeletonTopology | None = None,
                    scheme: SegmentationScheme | None = None,
                    histogram: HistogramConfig | None = None, noise: float = 0.0) -> Cohort:
    """Normal subjects fidget on every part; abnormal subjects are monotonous or still on every part.

    For each part the abnormal subjects are split as evenly as possible between
    monotonous and still, so with >= 3 abnormal subjects every leave-one-out
    training set still sees both behaviours on every part. Class membership is
    shuffled across the ``s01``.. ids so the id order leaks nothing.
    """
    if n_normal < 0 or n_abnormal < 0 or n_normal + n_abnormal < 2:
        raise InvalidProfile("a cohort needs at least two subjects")
    topology = topology or default_topology()
    scheme = scheme or SegmentationScheme()
    histogram = histogram or HistogramConfig()
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    n = n_normal + n_abnormal
    abnormal = np.zeros(n, dtype=bool)
    abnormal[rng.permutation(n)[:n_abnormal]] = True
    balanced = [Behavior.MONOTONOUS if a % 2 == 0 else Behavior.STILL for a in range(n_abnormal)]
    per_part = {p: [balanced[i] for i in rng.permutation(n_abnormal)] for p in PARTS}
    width = max(2, len(str(n)))
    a = 0
    profiles, seqs, anns = [], [], []
    for i in range(n):
        sid = f"s{i + 1:0{width}d}"
        if abnormal[i]:
            behaviors = {p: per_part[p][a] for p in PARTS}
            a += 1
        else:
            behaviors = {p: Behavior.FIDGETY for p in PARTS}
        sub_seed = int(np.random.SeedSequence([seed, 1, i]).generate_state(1, np.uint64)[0])
        prof = SubjectProfile(sid, behaviors, n_frames, noise, sub_seed, scheme, histogram)
        seq, ann = generate_subject(prof, topology)
        profiles.append(prof)
        seqs.append(seq)
        anns.append(ann)
    return Cohort(tuple(profiles), tuple(seqs), tuple(anns))
