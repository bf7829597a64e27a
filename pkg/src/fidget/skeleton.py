"""Skeleton topology, the five-part body partition, pose sequences and labels."""
from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateScale, InvalidTopology, SchemaError


class Part(str, enum.Enum):
    LEFT_ARM = "LeftArm"
    RIGHT_ARM = "RightArm"
    LEFT_LEG = "LeftLeg"
    RIGHT_LEG = "RightLeg"
    HEAD_TORSO = "HeadTorso"


# Canonical ordering used for feature emission, score vectors and mask precedence
# (earlier parts win overlapping pixels, so limbs are drawn over HeadTorso).
PARTS: tuple[Part, ...] = tuple(Part)


class FMLabel(enum.IntEnum):
    """Fidgety-movement label. The integer value is the numeric coding."""

    FM_PLUS = 0
    FM_MINUS = 1

    @property
    def text(self) -> str:
        return "FM+" if self is FMLabel.FM_PLUS else "FM-"

    @property
    def verdict(self) -> str:
        return "normal" if self is FMLabel.FM_PLUS else "abnormal"

    @classmethod
    def parse(cls, value: str | int) -> "FMLabel":
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        text = str(value).strip()
        lookup = {
            "FM+": cls.FM_PLUS, "FMPLUS": cls.FM_PLUS, "0": cls.FM_PLUS, "NORMAL": cls.FM_PLUS,
            "FM-": cls.FM_MINUS, "FMMINUS": cls.FM_MINUS, "1": cls.FM_MINUS, "ABNORMAL": cls.FM_MINUS,
        }
        try:
            return lookup[text.upper().replace("_", "")]
        except KeyError:
            raise SchemaError(f"unrecognised FM label {value!r}") from None


@dataclass(frozen=True)
class PartSpec:
    joints: tuple[int, ...]
    bones: tuple[int, ...]  # indices into SkeletonTopology.bones


@dataclass(frozen=True)
class SkeletonTopology:
    """Named joints, directed bones, and a partition of both into the five parts.

    Bones are ``(proximal, distal)`` joint index pairs. ``scale_bone`` must be
    one of them; its mean length is the unit used by :func:`normalize_sequence`.
    """

    joints: tuple[str, ...]
    bones: tuple[tuple[int, int], ...]
    parts: dict[Part, PartSpec]
    scale_bone: tuple[int, int]

    def __post_init__(self):
        n = len(self.joints)
        if len(set(self.joints)) != n:
            raise InvalidTopology("duplicate joint names")
        for b, (i, j) in enumerate(self.bones):
            if not (0 <= i < n and 0 <= j < n):
                raise InvalidTopology(f"bone {b} ({i}, {j}) references a missing joint")
        if set(self.parts) != set(PARTS) or len(self.parts) != 5:
            raise InvalidTopology(f"parts must be exactly {[p.value for p in PARTS]}")
        seen_j: list[int] = []
        seen_b: list[int] = []
        for spec in self.parts.values():
            seen_j.extend(spec.joints)
            seen_b.extend(spec.bones)
        if sorted(seen_j) != list(range(n)):
            raise InvalidTopology("parts must partition the joints (disjoint and covering)")
        if sorted(seen_b) != list(range(len(self.bones))):
            raise InvalidTopology("parts must partition the bones (disjoint and covering)")
        if tuple(self.scale_bone) not in self.bones:
            raise InvalidTopology(f"scale_bone {self.scale_bone} is not a bone")

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    def index(self, name: str) -> int:
        return self.joints.index(name)

    def part_of_joint(self, joint: int | str) -> Part:
        if isinstance(joint, str):
            joint = self.index(joint)
        for part, spec in self.parts.items():
            if joint in spec.joints:
                return part
        raise KeyError(joint)

    def part_of_bone(self, bone: tuple[int, int]) -> Part:
        b = self.bones.index(tuple(bone))
        for part, spec in self.parts.items():
            if b in spec.bones:
                return part
        raise KeyError(bone)

    def part_bones(self, part: Part) -> list[tuple[int, int]]:
        return [self.bones[b] for b in self.parts[part].bones]

    def part_joints(self, part: Part) -> list[int]:
        return list(self.parts[part].joints)

    def to_dict(self) -> dict:
        return {
            "joints": list(self.joints),
            "bones": [list(b) for b in self.bones],
            "parts": {
                p.value: {"joints": list(self.parts[p].joints), "bones": list(self.parts[p].bones)}
                for p in PARTS
            },
            "scale_bone": list(self.scale_bone),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SkeletonTopology":
        try:
            joints = tuple(d["joints"])
            bones = tuple((int(i), int(j)) for i, j in d["bones"])
            parts = {}
            for name, spec in d["parts"].items():
                try:
                    part = Part(name)
                except ValueError:
                    raise InvalidTopology(f"unknown part {name!r}") from None
                parts[part] = PartSpec(tuple(int(j) for j in spec["joints"]), _bone_refs(spec["bones"], bones))
            scale_bone = tuple(int(v) for v in d["scale_bone"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidTopology(f"malformed topology: {exc}") from None
        return cls(joints, bones, parts, scale_bone)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _bone_refs(refs, bones) -> tuple[int, ...]:
    # A part's bones may be listed by index or as [i, j] pairs.
    out = []
    for r in refs:
        if isinstance(r, (list, tuple)):
            out.append(bones.index((int(r[0]), int(r[1]))))
        else:
            out.append(int(r))
    return tuple(out)


def load_topology(path: str | Path) -> SkeletonTopology:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidTopology(f"{path}: {exc}") from None
    return SkeletonTopology.from_dict(data)


def save_topology(topology: SkeletonTopology, path: str | Path) -> None:
    Path(path).write_text(json.dumps(topology.to_dict(), indent=2) + "\n")


def default_topology() -> SkeletonTopology:
    """Head, neck, pelvis and per side shoulder/elbow/wrist/hip/knee/ankle (15 joints, 12 bones)."""
    joints = (
        "head", "neck", "pelvis",
        "shoulder_l", "elbow_l", "wrist_l",
        "shoulder_r", "elbow_r", "wrist_r",
        "hip_l", "knee_l", "ankle_l",
        "hip_r", "knee_r", "ankle_r",
    )
    ix = {name: i for i, name in enumerate(joints)}

    def bone(a, b):
        return (ix[a], ix[b])

    bones = (
        bone("shoulder_l", "elbow_l"), bone("elbow_l", "wrist_l"),
        bone("shoulder_r", "elbow_r"), bone("elbow_r", "wrist_r"),
        bone("hip_l", "knee_l"), bone("knee_l", "ankle_l"),
        bone("hip_r", "knee_r"), bone("knee_r", "ankle_r"),
        bone("head", "neck"), bone("neck", "pelvis"),
        bone("pelvis", "hip_l"), bone("pelvis", "hip_r"),
    )
    parts = {
        Part.LEFT_ARM: PartSpec((ix["shoulder_l"], ix["elbow_l"], ix["wrist_l"]), (0, 1)),
        Part.RIGHT_ARM: PartSpec((ix["shoulder_r"], ix["elbow_r"], ix["wrist_r"]), (2, 3)),
        Part.LEFT_LEG: PartSpec((ix["hip_l"], ix["knee_l"], ix["ankle_l"]), (4, 5)),
        Part.RIGHT_LEG: PartSpec((ix["hip_r"], ix["knee_r"], ix["ankle_r"]), (6, 7)),
        Part.HEAD_TORSO: PartSpec((ix["head"], ix["neck"], ix["pelvis"]), (8, 9, 10, 11)),
    }
    return SkeletonTopology(joints, bones, parts, bone("neck", "pelvis"))


@dataclass(frozen=True)
class PoseSequence:
    subject_id: str
    frames: np.ndarray  # (T, J, 2), read-only
    topology: SkeletonTopology
    fps: float = 30.0

    def __post_init__(self):
        frames = np.array(self.frames, dtype=np.float64)
        if frames.ndim != 3 or frames.shape[2] != 2:
            raise SchemaError(f"{self.subject_id}: frames must have shape (T, J, 2), got {frames.shape}")
        if frames.shape[0] < 1:
            raise SchemaError(f"{self.subject_id}: sequence has no frames")
        if frames.shape[1] != self.topology.n_joints:
            raise SchemaError(
                f"{self.subject_id}: frames have {frames.shape[1]} joints, topology has {self.topology.n_joints}"
            )
        if not np.all(np.isfinite(frames)):
            t = int(np.argwhere(~np.isfinite(frames))[0, 0])
            raise SchemaError(f"{self.subject_id}: non-finite coordinate in frame {t}")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    def with_frames(self, frames: np.ndarray) -> "PoseSequence":
        return PoseSequence(self.subject_id, frames, self.topology, self.fps)


@dataclass(frozen=True)
class VideoAnnotation:
    subject_id: str
    label: FMLabel


def scale_bone_lengths(seq: PoseSequence) -> np.ndarray:
    i, j = seq.topology.scale_bone
    return np.linalg.norm(seq.frames[:, j] - seq.frames[:, i], axis=1)


def normalize_sequence(seq: PoseSequence) -> PoseSequence:
    """Divide every coordinate by the mean scale-bone length. No translation is applied."""
    scale = float(np.mean(scale_bone_lengths(seq)))
    if not scale > 1e-9:
        raise DegenerateScale(f"{seq.subject_id}: mean scale-bone length {scale:g} is degenerate")
    return seq.with_frames(seq.frames / scale)
