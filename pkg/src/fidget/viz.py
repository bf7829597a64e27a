"""Overlay rendering: body parts predicted FM- are tinted red.

Part masks come either from per-frame segmentation PNGs (six body classes,
with limb classes split into left/right by 2-means) or from capsules drawn
around the skeleton bones.
"""
from __future__ import annotations

import enum
import json
import logging
import math
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from PIL import Image

from .classify import SegmentPrediction
from .errors import DimensionMismatch, EmptyMask, SchemaError
from .features import SegmentationScheme
from .skeleton import PARTS, FMLabel, Part, PoseSequence, SkeletonTopology

log = logging.getLogger(__name__)


SILHOUETTE = (200, 200, 200)


class MaskClass(str, enum.Enum):
    HEAD = "head"
    TORSO = "torso"
    UPPER_ARMS = "upper_arms"
    LOWER_ARMS = "lower_arms"
    PELVIS_UPPER_LEGS = "pelvis_upper_legs"
    LOWER_LEGS = "lower_legs"


# limb class -> (left part, right part, joint stems whose _l/_r variants seed the split)
LIMB_CLASSES = {
    MaskClass.UPPER_ARMS: (Part.LEFT_ARM, Part.RIGHT_ARM, ("shoulder", "elbow")),
    MaskClass.LOWER_ARMS: (Part.LEFT_ARM, Part.RIGHT_ARM, ("elbow", "wrist")),
    MaskClass.PELVIS_UPPER_LEGS: (Part.LEFT_LEG, Part.RIGHT_LEG, ("hip", "knee")),
    MaskClass.LOWER_LEGS: (Part.LEFT_LEG, Part.RIGHT_LEG, ("knee", "ankle")),
}


@dataclass(frozen=True)
class PartMask:
    part: Part
    mask: np.ndarray  # (H, W) bool


@dataclass(frozen=True)
class RawSegmentMask:
    cls: MaskClass
    mask: np.ndarray  # (H, W) bool


@dataclass(frozen=True)
class OverlaySpec:
    color: tuple[int, int, int] = (255, 0, 0)
    alpha: float = 0.45

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")


@dataclass(frozen=True)
class CapsuleRadii:
    """Capsule radii as fractions of the frame diagonal, times ``scale``."""

    limb: float = 0.06
    torso: float = 0.14
    head: float = 0.10
    scale: float = 0.25


def lloyd_2means(points: np.ndarray, seeds: np.ndarray, tol: float = 0.5, max_iter: int = 100
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd iterations from fixed seeds. Returns (labels, centroids); ties go to cluster 0."""
    centroids = np.asarray(seeds, dtype=np.float64).copy()
    pts = np.asarray(points, dtype=np.float64)

    def assign(c):
        d = ((pts[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)
        return np.argmin(d, axis=1)

    for _ in range(max_iter):
        labels = assign(centroids)
        new = centroids.copy()
        for k in range(centroids.shape[0]):
            members = pts[labels == k]
            if len(members):
                new[k] = members.mean(axis=0)
        moved = float(np.max(np.linalg.norm(new - centroids, axis=1)))
        centroids = new
        if moved < tol:
            break
    return assign(centroids), centroids


def split_mask_lr(mask: RawSegmentMask, frame_pose: np.ndarray, topology: SkeletonTopology
                  ) -> tuple[PartMask, PartMask]:
    if mask.cls not in LIMB_CLASSES:
        raise ValueError(f"{mask.cls.value} is not a limb class")
    left_part, right_part, stems = LIMB_CLASSES[mask.cls]
    try:
        lj = [topology.index(f"{s}_l") for s in stems]
        rj = [topology.index(f"{s}_r") for s in stems]
    except ValueError as exc:
        raise SchemaError(f"topology lacks joints needed to split {mask.cls.value}: {exc}") from None
    rows, cols = np.nonzero(mask.mask)
    if rows.size == 0:
        raise EmptyMask(f"{mask.cls.value} mask is empty")
    pts = np.stack([cols, rows], axis=1).astype(np.float64)
    left_ref = frame_pose[lj].mean(axis=0)
    right_ref = frame_pose[rj].mean(axis=0)
    if np.all(pts == pts[0]):
        log.warning("%s mask pixels all coincide; assigning the whole mask to the nearer side", mask.cls.value)
    labels, c = lloyd_2means(pts, np.stack([left_ref, right_ref]))
    straight = np.linalg.norm(c[0] - left_ref) + np.linalg.norm(c[1] - right_ref)
    swapped = np.linalg.norm(c[0] - right_ref) + np.linalg.norm(c[1] - left_ref)
    left_cluster = 0 if straight <= swapped else 1
    left = np.zeros_like(mask.mask, dtype=bool)
    right = np.zeros_like(mask.mask, dtype=bool)
    is_left = labels == left_cluster
    left[rows[is_left], cols[is_left]] = True
    right[rows[~is_left], cols[~is_left]] = True
    return PartMask(left_part, left), PartMask(right_part, right)


def segment_distance(px: np.ndarray, py: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0:
        return np.hypot(px - a[0], py - a[1])
    t = np.clip(((px - a[0]) * ab[0] + (py - a[1]) * ab[1]) / denom, 0.0, 1.0)
    return np.hypot(px - (a[0] + t * ab[0]), py - (a[1] + t * ab[1]))


def capsule(shape: tuple[int, int], a, b, radius: float) -> np.ndarray:
    h, w = shape
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = np.zeros(shape, dtype=bool)
    # only pixels inside the capsule's bounding box can be within ``radius``
    x0 = max(0, math.floor(min(a[0], b[0]) - radius))
    x1 = min(w, math.ceil(max(a[0], b[0]) + radius) + 1)
    y0 = max(0, math.floor(min(a[1], b[1]) - radius))
    y1 = min(h, math.ceil(max(a[1], b[1]) + radius) + 1)
    if x0 >= x1 or y0 >= y1:
        return out
    ys, xs = np.mgrid[y0:y1, x0:x1]
    out[y0:y1, x0:x1] = segment_distance(xs.astype(np.float64), ys.astype(np.float64), a, b) <= radius
    return out


def resolve_precedence(masks: Sequence[PartMask]) -> list[PartMask]:
    """Make masks disjoint; parts earlier in PARTS keep contested pixels."""
    by_part = {m.part: m.mask for m in masks}
    claimed = None
    out = []
    for part in PARTS:
        if part not in by_part:
            continue
        m = by_part[part]
        if claimed is None:
            claimed = np.zeros_like(m, dtype=bool)
        out.append(PartMask(part, m & ~claimed))
        claimed |= m
    return out


def capsule_masks(frame_pose: np.ndarray, topology: SkeletonTopology, shape: tuple[int, int],
                  radii: CapsuleRadii = CapsuleRadii(), resolve: bool = True) -> list[PartMask]:
    h, w = shape
    diag = math.hypot(h, w) * radii.scale
    head = topology.joints.index("head") if "head" in topology.joints else -1
    out = []
    for part in PARTS:
        m = np.zeros(shape, dtype=bool)
        for i, j in topology.part_bones(part):
            if part is not Part.HEAD_TORSO:
                r = radii.limb
            elif head in (i, j):
                r = radii.head
            else:
                r = radii.torso
            m |= capsule(shape, frame_pose[i], frame_pose[j], r * diag)
        out.append(PartMask(part, m))
    return resolve_precedence(out) if resolve else out


def _flagged(flag) -> bool:
    if isinstance(flag, FMLabel):
        return flag is FMLabel.FM_MINUS
    return bool(flag)


def render_overlay(frame: np.ndarray, masks: Sequence[PartMask], flags: Mapping[Part, FMLabel | bool],
                   spec: OverlaySpec = OverlaySpec()) -> np.ndarray:
    """Blend ``spec.color`` into every pixel of a flagged part, rounding half up.

    The blend is done in exact rational arithmetic so results do not depend on
    float rounding of alpha. Unflagged pixels are copied bit for bit.
    """
    frame = np.asarray(frame)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise DimensionMismatch(f"expected an RGB frame, got shape {frame.shape}")
    sel = np.zeros(frame.shape[:2], dtype=bool)
    for m in masks:
        if m.mask.shape != frame.shape[:2]:
            raise DimensionMismatch(f"{m.part.value} mask {m.mask.shape} vs frame {frame.shape[:2]}")
        if _flagged(flags.get(m.part, False)):
            sel |= m.mask
    out = frame.copy()
    if not sel.any():
        return out
    a = Fraction(str(spec.alpha)).limit_denominator(1_000_000)
    num, den = a.numerator, a.denominator
    src = frame[sel].astype(np.int64)
    color = np.array(spec.color, dtype=np.int64)
    # floor(x + 1/2) with x = ((den - num) * src + num * color) / den
    blended = (2 * ((den - num) * src + num * color) + den) // (2 * den)
    out[sel] = np.clip(blended, 0, 255).astype(frame.dtype)
    return out


def fit_to_frame(seq: PoseSequence, width: int, height: int, margin: float = 0.12) -> PoseSequence:
    """Map a pose sequence into pixel space so its overall bounding box fills the frame."""
    pts = seq.frames.reshape(-1, 2)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    s = min(width * (1 - 2 * margin) / span[0], height * (1 - 2 * margin) / span[1])
    centre = (lo + hi) / 2
    out = (seq.frames - centre) * s + np.array([width / 2, height / 2])
    return seq.with_frames(out)


def read_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.array(im.convert("RGB"))


def write_png(path: str | Path, rgb: np.ndarray) -> None:
    Image.fromarray(np.ascontiguousarray(rgb, dtype=np.uint8), mode="RGB").save(path, format="PNG")


def read_mask_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.array(im.convert("L")) > 127


def load_frame_masks(masks_dir: Path, t: int, pose: np.ndarray, topology: SkeletonTopology,
                     shape: tuple[int, int]) -> list[PartMask]:
    """Read ``{t:06}_{class}.png`` files for one frame and map them onto the five parts."""
    acc = {p: np.zeros(shape, dtype=bool) for p in PARTS}
    for cls in MaskClass:
        path = masks_dir / f"{t:06d}_{cls.value}.png"
        if not path.exists():
            continue
        m = read_mask_png(path)
        if m.shape != shape:
            raise DimensionMismatch(f"{path.name}: mask {m.shape} vs frame {shape}")
        if not m.any():
            continue
        if cls in LIMB_CLASSES:
            left, right = split_mask_lr(RawSegmentMask(cls, m), pose, topology)
            acc[left.part] |= left.mask
            acc[right.part] |= right.mask
        else:
            acc[Part.HEAD_TORSO] |= m
    return resolve_precedence([PartMask(p, acc[p]) for p in PARTS])


def segment_flags(preds: Sequence[SegmentPrediction]) -> list[dict[Part, FMLabel]]:
    """Per segment index, the predicted label of every part present."""
    if not preds:
        return []
    n = max(p.segment_index for p in preds) + 1
    out: list[dict[Part, FMLabel]] = [dict() for _ in range(n)]
    for p in preds:
        out[p.segment_index][p.part] = p.predicted
    return out


def frame_segment(t: int, window_len: int, n_segments: int) -> int:
    # frames after the last full window reuse its flags
    return min(t // window_len, n_segments - 1)


def render_sequence(out_dir: str | Path, poses: PoseSequence, preds: Sequence[SegmentPrediction],
                    scheme: SegmentationScheme, *, frames_dir: str | Path | None = None,
                    masks_dir: str | Path | None = None, canvas: tuple[int, int] = (320, 320),
                    spec: OverlaySpec = OverlaySpec(), radii: CapsuleRadii = CapsuleRadii(),
                    jobs: int = 1) -> list[Path]:
    """Write ``{t:06}.png`` overlays plus a ``flags.json`` audit trail into ``out_dir``.

    Without ``frames_dir`` each frame is a white ``canvas`` (width, height)
    with the part masks painted grey. ``poses`` must already be in pixel
    coordinates.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    flags = segment_flags(preds)
    if not flags:
        raise SchemaError("no segment predictions to visualise")
    if frames_dir is not None:
        frame_paths = sorted(Path(frames_dir).glob("*.png"))
        n_frames = len(frame_paths)
    else:
        frame_paths = None
        n_frames = poses.n_frames
    covered = len(flags) * scheme.window_len
    if n_frames < covered:
        raise SchemaError(f"{n_frames} frames cannot cover {len(flags)} segments of {scheme.window_len}")
    if poses.n_frames < n_frames:
        raise SchemaError(f"{poses.n_frames} poses for {n_frames} frames")

    def render(t: int):
        k = frame_segment(t, scheme.window_len, len(flags))
        path = out_dir / f"{t:06d}.png"
        if frame_paths is not None and not any(_flagged(f) for f in flags[k].values()):
            # nothing to tint: keep the input file byte for byte
            shutil.copyfile(frame_paths[t], path)
            return path, k
        if frame_paths is not None:
            frame = read_png(frame_paths[t])
        else:
            frame = np.full((canvas[1], canvas[0], 3), 255, dtype=np.uint8)
        shape = frame.shape[:2]
        pose = poses.frames[t]
        if masks_dir is not None:
            masks = load_frame_masks(Path(masks_dir), t, pose, poses.topology, shape)
        else:
            masks = capsule_masks(pose, poses.topology, shape, radii)
        if frame_paths is None:
            # blank canvas: draw the body in grey so unflagged parts stay visible
            for m in masks:
                frame[m.mask] = SILHOUETTE
        write_png(path, render_overlay(frame, masks, flags[k], spec))
        return path, k

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(pool.map(render, range(n_frames)))

    audit = {
        "window_len": scheme.window_len,
        "segments": [{p.value: flags[k][p].text for p in PARTS if p in flags[k]} for k in range(len(flags))],
        "frames": [k for _, k in results],
    }
    (out_dir / "flags.json").write_text(json.dumps(audit, indent=1) + "\n")
    return [p for p, _ in results]
