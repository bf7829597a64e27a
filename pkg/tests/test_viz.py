import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from fidget.classify import SegmentPrediction
from fidget.errors import DimensionMismatch, EmptyMask
from fidget.features import SegmentationScheme
from fidget.skeleton import PARTS, FMLabel, Part, PoseSequence
from fidget.synth import base_pose
from fidget.viz import (CapsuleRadii, MaskClass, OverlaySpec, PartMask, RawSegmentMask, capsule, capsule_masks,
                        fit_to_frame, frame_segment, lloyd_2means, load_frame_masks, read_png, render_overlay,
                        render_sequence, resolve_precedence, split_mask_lr, write_png)

PLUS, MINUS = FMLabel.FM_PLUS, FMLabel.FM_MINUS


def test_white_pixel_tint():
    frame = np.full((1, 1, 3), 255, dtype=np.uint8)
    out = render_overlay(frame, [PartMask(Part.LEFT_ARM, np.ones((1, 1), bool))], {Part.LEFT_ARM: MINUS})
    assert out[0, 0].tolist() == [255, 140, 140]


def test_blend_rounds_half_up():
    # 0.55 * 10 = 5.5 -> 6; 0.55 * 30 = 16.5 -> 17
    frame = np.array([[[10, 30, 0]]], dtype=np.uint8)
    out = render_overlay(frame, [PartMask(Part.HEAD_TORSO, np.ones((1, 1), bool))], {Part.HEAD_TORSO: True},
                         OverlaySpec((0, 0, 0), 0.45))
    assert out[0, 0].tolist() == [6, 17, 0]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 255), st.integers(0, 255), st.integers(0, 255))
def test_blend_matches_rational_formula(r, g, b):
    from fractions import Fraction
    frame = np.array([[[r, g, b]]], dtype=np.uint8)
    out = render_overlay(frame, [PartMask(Part.LEFT_LEG, np.ones((1, 1), bool))], {Part.LEFT_LEG: MINUS})
    a = Fraction(45, 100)
    expect = [math.floor((1 - a) * c + a * k + Fraction(1, 2)) for c, k in zip((r, g, b), (255, 0, 0))]
    assert out[0, 0].tolist() == expect


def test_unflagged_parts_untouched(rng):
    frame = rng.integers(0, 256, (20, 30, 3), dtype=np.uint8)
    masks = [PartMask(p, rng.random((20, 30)) < 0.3) for p in PARTS]
    out = render_overlay(frame, masks, {p: PLUS for p in PARTS})
    assert out.tobytes() == frame.tobytes()
    out = render_overlay(frame, masks, {Part.RIGHT_ARM: MINUS})
    untouched = ~masks[1].mask
    assert np.array_equal(out[untouched], frame[untouched])


def test_overlay_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        render_overlay(np.zeros((4, 4, 3), np.uint8), [PartMask(Part.LEFT_ARM, np.ones((3, 4), bool))],
                       {Part.LEFT_ARM: MINUS})


def _blob(centre, n, rng, spread=3.0):
    return rng.normal(centre, spread, (n, 2))


def test_lloyd_matches_oracle(rng):
    for _ in range(20):
        pts = np.vstack([_blob((20, 30), 40, rng), _blob((70, 35), 50, rng)])
        seeds = np.array([[25.0, 25.0], [60.0, 40.0]])
        labels, cents = lloyd_2means(pts, seeds)
        o_labels, o_cents = oracles.lloyd_oracle(pts.tolist(), seeds.tolist())
        assert labels.tolist() == o_labels
        np.testing.assert_allclose(cents, o_cents, rtol=0, atol=1e-9)


def _split_pose(topology, left_xy, right_xy):
    pose = np.zeros((topology.n_joints, 2))
    for side, xy in (("l", left_xy), ("r", right_xy)):
        for stem in ("shoulder", "elbow"):
            pose[topology.index(f"{stem}_{side}")] = xy
    return pose


def test_split_mask_lr_matches_oracle(topology, rng):
    mask = np.zeros((60, 100), bool)
    mask[20:35, 10:25] = True
    mask[25:45, 70:90] = True
    pose = _split_pose(topology, (20.0, 30.0), (75.0, 32.0))
    left, right = split_mask_lr(RawSegmentMask(MaskClass.UPPER_ARMS, mask), pose, topology)
    assert left.part is Part.LEFT_ARM and right.part is Part.RIGHT_ARM
    rows, cols = np.nonzero(mask)
    pts = [[float(c), float(r)] for r, c in zip(rows, cols)]
    o_labels, _ = oracles.lloyd_oracle(pts, [[20.0, 30.0], [75.0, 32.0]])
    expect_left = np.zeros_like(mask)
    for (r, c), lab in zip(zip(rows, cols), o_labels):
        expect_left[r, c] = lab == 0
    assert np.array_equal(left.mask, expect_left)
    assert np.array_equal(right.mask, mask & ~expect_left)
    assert not (left.mask & right.mask).any()


def test_split_mask_single_pixel(topology):
    mask = np.zeros((10, 10), bool)
    mask[4, 6] = True
    pose = _split_pose(topology, (6.0, 4.0), (1.0, 1.0))
    left, right = split_mask_lr(RawSegmentMask(MaskClass.UPPER_ARMS, mask), pose, topology)
    assert left.mask.sum() + right.mask.sum() == 1
    assert left.mask[4, 6]


def test_split_mask_empty(topology):
    with pytest.raises(EmptyMask):
        split_mask_lr(RawSegmentMask(MaskClass.LOWER_LEGS, np.zeros((5, 5), bool)),
                      np.zeros((topology.n_joints, 2)), topology)


def test_capsule_area():
    # endpoints off the pixel lattice so no boundary row lands exactly at distance r
    r, length = 9.3, 40.0
    m = capsule((100, 100), (30.37, 50.41), (30.37 + length, 50.41), r)
    expected = 2 * r * length + math.pi * r * r
    assert abs(m.sum() - expected) / expected < 0.05


def test_zero_length_capsule_is_disc():
    m = capsule((50, 50), (25.0, 25.0), (25.0, 25.0), 5.0)
    ys, xs = np.mgrid[0:50, 0:50]
    assert np.array_equal(m, np.hypot(xs - 25.0, ys - 25.0) <= 5.0)


def test_capsule_masks_precedence(topology):
    seq = PoseSequence("p", base_pose(topology)[None], topology)
    pose = fit_to_frame(seq, 200, 200).frames[0]
    raw = capsule_masks(pose, topology, (200, 200), resolve=False)
    resolved = capsule_masks(pose, topology, (200, 200))
    assert [m.part for m in resolved] == list(PARTS)
    total = np.zeros((200, 200), int)
    for m in resolved:
        total += m.mask
    assert total.max() == 1
    union = np.logical_or.reduce([m.mask for m in raw])
    assert np.array_equal(total.astype(bool), union)
    # limbs keep contested pixels over the torso
    assert np.array_equal(resolved[0].mask, raw[0].mask)


def test_capsule_radius_monotone(topology):
    seq = PoseSequence("p", base_pose(topology)[None], topology)
    pose = fit_to_frame(seq, 120, 120).frames[0]
    small = capsule_masks(pose, topology, (120, 120), CapsuleRadii(scale=0.2), resolve=False)
    big = capsule_masks(pose, topology, (120, 120), CapsuleRadii(scale=0.3), resolve=False)
    for a, b in zip(small, big):
        assert not (a.mask & ~b.mask).any()


def test_resolve_precedence_disjoint(rng):
    masks = [PartMask(p, rng.random((10, 10)) < 0.5) for p in PARTS]
    out = resolve_precedence(masks)
    stacked = np.stack([m.mask for m in out]).sum(axis=0)
    assert stacked.max() <= 1


@pytest.mark.parametrize("t,expected", [(0, 0), (99, 0), (100, 1), (299, 2), (300, 2), (350, 2)])
def test_frame_segment(t, expected):
    assert frame_segment(t, 100, 3) == expected


def _preds(flags_per_segment, subject="v"):
    return [SegmentPrediction(subject, p, k, lab, float(lab))
            for k, flags in enumerate(flags_per_segment) for p, lab in zip(PARTS, flags)]


def _static_seq(topology, T, size):
    seq = PoseSequence("v", np.repeat(base_pose(topology)[None], T, axis=0), topology)
    return fit_to_frame(seq, size, size)


def test_render_sequence_no_flags_is_byte_identical(tmp_path, topology, rng):
    frames_dir = tmp_path / "frames"
    frames_dir.mkdir()
    for t in range(6):
        write_png(frames_dir / f"{t:06d}.png", rng.integers(0, 256, (40, 40, 3), dtype=np.uint8))
    seq = _static_seq(topology, 6, 40)
    out = render_sequence(tmp_path / "out", seq, _preds([[PLUS] * 5] * 2), SegmentationScheme(3),
                          frames_dir=frames_dir)
    for t, path in enumerate(out):
        assert path.read_bytes() == (frames_dir / f"{t:06d}.png").read_bytes()


def test_render_sequence_routes_flags(tmp_path, topology):
    frames_dir = tmp_path / "frames"
    frames_dir.mkdir()
    white = np.full((60, 60, 3), 255, dtype=np.uint8)
    for t in range(7):
        write_png(frames_dir / f"{t:06d}.png", white)
    seq = _static_seq(topology, 7, 60)
    flags = [[PLUS] * 5, [MINUS] + [PLUS] * 4]
    render_sequence(tmp_path / "out", seq, _preds(flags), SegmentationScheme(3), frames_dir=frames_dir)
    masks = capsule_masks(seq.frames[0], topology, (60, 60))
    left_arm = masks[0].mask
    for t in range(7):
        img = read_png(tmp_path / "out" / f"{t:06d}.png")
        tinted = (img == [255, 140, 140]).all(axis=2)
        if t < 3:
            assert not tinted.any()
        else:
            # frames 3..5 are segment 1; frame 6 is past the last window and reuses it
            assert np.array_equal(tinted, left_arm)
    audit = json.loads((tmp_path / "out" / "flags.json").read_text())
    assert audit["frames"] == [0, 0, 0, 1, 1, 1, 1]
    assert audit["segments"][1]["LeftArm"] == "FM-"


def test_render_with_mask_files(tmp_path, topology):
    masks_dir = tmp_path / "masks"
    masks_dir.mkdir()
    pose = np.zeros((topology.n_joints, 2))
    for stem in ("shoulder", "elbow", "wrist"):
        pose[topology.index(f"{stem}_l")] = (10.0, 10.0)
        pose[topology.index(f"{stem}_r")] = (30.0, 10.0)
    m = np.zeros((20, 40), bool)
    m[8:12, 8:12] = True
    m[8:12, 28:32] = True
    write_png(masks_dir / "000000_upper_arms.png", np.repeat(m[..., None] * 255, 3, axis=2).astype(np.uint8))
    torso = np.zeros((20, 40), bool)
    torso[15:18, 18:22] = True
    write_png(masks_dir / "000000_torso.png", np.repeat(torso[..., None] * 255, 3, axis=2).astype(np.uint8))
    parts = {pm.part: pm.mask for pm in load_frame_masks(masks_dir, 0, pose, topology, (20, 40))}
    assert parts[Part.LEFT_ARM][8:12, 8:12].all() and parts[Part.LEFT_ARM].sum() == 16
    assert parts[Part.RIGHT_ARM][8:12, 28:32].all() and parts[Part.RIGHT_ARM].sum() == 16
    assert np.array_equal(parts[Part.HEAD_TORSO], torso)
    assert not parts[Part.LEFT_LEG].any()


def test_blank_canvas_render_all_flagged(tmp_path, topology):
    seq = _static_seq(topology, 4, 80)
    render_sequence(tmp_path / "o", seq, _preds([[MINUS] * 5] * 2), SegmentationScheme(2), canvas=(80, 80))
    masks = capsule_masks(seq.frames[0], topology, (80, 80))
    for t in range(4):
        img = read_png(tmp_path / "o" / f"{t:06d}.png")
        for m in masks:
            assert m.mask.any()
            assert (img[m.mask] == [225, 110, 110]).all()  # grey 200 under the red tint


@settings(max_examples=100, deadline=None)
@given(st.floats(-20, 70), st.floats(-20, 70), st.floats(-20, 70), st.floats(-20, 70), st.floats(0, 15))
def test_capsule_matches_full_distance_field(ax, ay, bx, by, r):
    ys, xs = np.mgrid[0:40, 0:50]
    a, b = np.array([ax, ay]), np.array([bx, by])
    full = np.zeros((40, 50), bool)
    for y in range(40):
        for x in range(50):
            ab = b - a
            den = ab @ ab
            t = 0.0 if den == 0 else min(1.0, max(0.0, ((x - ax) * ab[0] + (y - ay) * ab[1]) / den))
            full[y, x] = math.hypot(x - (ax + t * ab[0]), y - (ay + t * ab[1])) <= r
    assert np.array_equal(capsule((40, 50), a, b, r), full)
