import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fidget.errors import DegenerateScale, InvalidTopology, SchemaError
from fidget.skeleton import (PARTS, FMLabel, Part, PartSpec, PoseSequence, SkeletonTopology, load_topology,
                             normalize_sequence, save_topology, scale_bone_lengths)


def test_default_topology_shape(topology):
    assert len(topology.joints) == 15
    assert len(topology.bones) == 12
    assert sum(len(topology.parts[p].joints) for p in PARTS) == topology.n_joints
    assert sum(len(topology.parts[p].bones) for p in PARTS) == len(topology.bones)
    assert topology.scale_bone == (topology.index("neck"), topology.index("pelvis"))


def test_default_topology_part_lookup(topology):
    assert topology.part_of_joint("wrist_l") is Part.LEFT_ARM
    assert topology.part_of_joint("pelvis") is Part.HEAD_TORSO
    assert topology.part_of_joint("hip_r") is Part.RIGHT_LEG
    neck, pelvis = topology.index("neck"), topology.index("pelvis")
    assert topology.part_of_bone((neck, pelvis)) is Part.HEAD_TORSO
    assert topology.part_of_bone((pelvis, topology.index("hip_l"))) is Part.HEAD_TORSO


def test_default_part_sizes(topology):
    for part in (Part.LEFT_ARM, Part.RIGHT_ARM, Part.LEFT_LEG, Part.RIGHT_LEG):
        assert len(topology.part_bones(part)) == 2
        assert len(topology.part_joints(part)) == 3
    assert len(topology.part_bones(Part.HEAD_TORSO)) == 4
    assert len(topology.part_joints(Part.HEAD_TORSO)) == 3


def test_shoulders_are_not_attached_to_the_torso(topology):
    neck = topology.index("neck")
    for side in "lr":
        sh = topology.index(f"shoulder_{side}")
        assert (neck, sh) not in topology.bones and (sh, neck) not in topology.bones


def test_topology_roundtrip(tmp_path, topology):
    path = tmp_path / "topo.json"
    save_topology(topology, path)
    again = load_topology(path)
    assert again == topology
    assert again.fingerprint() == topology.fingerprint()


def test_topology_file_accepts_bone_pairs(tmp_path, topology):
    d = topology.to_dict()
    d["parts"]["LeftArm"]["bones"] = [list(topology.bones[b]) for b in topology.parts[Part.LEFT_ARM].bones]
    path = tmp_path / "t.json"
    path.write_text(json.dumps(d))
    assert load_topology(path) == topology


def test_topology_rejects_overlapping_parts(topology):
    parts = dict(topology.parts)
    parts[Part.RIGHT_ARM] = PartSpec(parts[Part.RIGHT_ARM].joints + (0,), parts[Part.RIGHT_ARM].bones)
    with pytest.raises(InvalidTopology):
        SkeletonTopology(topology.joints, topology.bones, parts, topology.scale_bone)


def test_topology_rejects_bad_bone_and_scale(topology):
    with pytest.raises(InvalidTopology):
        SkeletonTopology(topology.joints, topology.bones + ((0, 99),), topology.parts, topology.scale_bone)
    with pytest.raises(InvalidTopology):
        SkeletonTopology(topology.joints, topology.bones, topology.parts, (0, 2))


def test_topology_rejects_missing_part(topology):
    parts = {p: s for p, s in topology.parts.items() if p is not Part.HEAD_TORSO}
    with pytest.raises(InvalidTopology):
        SkeletonTopology(topology.joints, topology.bones, parts, topology.scale_bone)


def test_fm_label_coding():
    assert int(FMLabel.FM_PLUS) == 0 and int(FMLabel.FM_MINUS) == 1
    assert FMLabel.parse("FM-") is FMLabel.FM_MINUS
    assert FMLabel.parse("fm+") is FMLabel.FM_PLUS
    assert FMLabel.FM_MINUS.verdict == "abnormal"
    with pytest.raises(SchemaError):
        FMLabel.parse("maybe")


def test_pose_sequence_validation(topology):
    with pytest.raises(SchemaError):
        PoseSequence("x", np.zeros((3, 14, 2)), topology)
    bad = np.zeros((3, 15, 2))
    bad[1, 2, 0] = np.nan
    with pytest.raises(SchemaError, match="frame 1"):
        PoseSequence("x", bad, topology)
    seq = PoseSequence("x", np.zeros((3, 15, 2)), topology)
    with pytest.raises(ValueError):
        seq.frames[0, 0, 0] = 1.0


def _seq_with_scale(topology, length, T=5):
    from fidget.synth import base_pose
    frames = np.repeat(base_pose(topology)[None], T, axis=0) * length
    return PoseSequence("s", frames, topology)


def test_normalize_halves_coordinates(topology):
    seq = _seq_with_scale(topology, 2.0)
    out = normalize_sequence(seq)
    np.testing.assert_allclose(out.frames, seq.frames / 2.0, rtol=0, atol=1e-15)
    assert abs(scale_bone_lengths(out).mean() - 1.0) < 1e-9


def test_normalize_degenerate(topology):
    seq = PoseSequence("s", np.ones((4, 15, 2)), topology)
    with pytest.raises(DegenerateScale):
        normalize_sequence(seq)


coords = arrays(np.float64, (6, 15, 2), elements=st.floats(-50, 50, allow_nan=False, width=64))


@settings(max_examples=60, deadline=None)
@given(coords)
def test_normalize_idempotent(frames, ):
    from fidget.skeleton import default_topology
    topo = default_topology()
    seq = PoseSequence("h", frames, topo)
    if scale_bone_lengths(seq).mean() <= 1e-3:
        return
    once = normalize_sequence(seq)
    twice = normalize_sequence(once)
    scale = max(1.0, float(np.abs(once.frames).max()))
    assert np.abs(twice.frames - once.frames).max() <= 1e-9 * scale
    assert abs(scale_bone_lengths(once).mean() - 1.0) < 1e-9


@settings(max_examples=60, deadline=None)
@given(coords, st.floats(-100, 100), st.floats(-100, 100))
def test_normalize_commutes_with_translation(frames, cx, cy):
    from fidget.skeleton import default_topology
    topo = default_topology()
    seq = PoseSequence("h", frames, topo)
    scale = scale_bone_lengths(seq).mean()
    if scale <= 1e-3:
        return
    shifted = seq.with_frames(frames + np.array([cx, cy]))
    lhs = normalize_sequence(shifted).frames
    rhs = normalize_sequence(seq).frames + np.array([cx, cy]) / scale
    tol = 1e-9 * max(1.0, float(np.abs(lhs).max()))
    assert np.abs(lhs - rhs).max() <= tol
