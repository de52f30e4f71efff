import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from relocbench.change import (
    DEGENERATE_VISUAL,
    EMPTY_DEPTH,
    EMPTY_SEMANTIC,
    ChangeScores,
    frame_change,
    geometric_change,
    scene_change_stats,
    semantic_change,
    to_gray,
    visual_change,
)
from relocbench.synthetic import look_at, make_room_with_moved_box, default_intrinsics

from .oracles import naive_geometric, naive_semantic, naive_visual

images = arrays(np.uint8, (6, 8, 3))


def test_gray_uses_rec601():
    img = np.zeros((1, 3, 3), np.uint8)
    img[0, 0] = (255, 0, 0)
    img[0, 1] = (0, 255, 0)
    img[0, 2] = (0, 0, 255)
    assert np.allclose(to_gray(img)[0], [0.299 * 255, 0.587 * 255, 0.114 * 255])


def test_visual_against_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        a = rng.integers(0, 256, (12, 16, 3), dtype=np.uint8)
        b = rng.integers(0, 256, (12, 16, 3), dtype=np.uint8)
        mask = rng.random((12, 16)) < 0.7
        rho, zeta = naive_visual(a, b, mask)
        got = visual_change(a, b, mask)
        assert abs(got.rho_v - rho) <= 1e-12
        assert abs(got.zeta_v - zeta) <= 1e-12


@given(images)
def test_identical_images(a):
    v = visual_change(a, a)
    if v.degenerate:
        return
    assert v.rho_v == 0.0
    assert math.isclose(v.zeta_v, 1.0, abs_tol=1e-12)


@given(images, images)
def test_visual_ranges_and_symmetry(a, b):
    v = visual_change(a, b)
    w = visual_change(b, a)
    assert -1.0 <= v.zeta_v <= 1.0
    assert v.rho_v >= 0.0
    assert math.isclose(v.rho_v, w.rho_v, rel_tol=1e-12, abs_tol=1e-15)
    assert math.isclose(v.zeta_v, w.zeta_v, rel_tol=1e-12, abs_tol=1e-15)


@given(images, st.floats(0.1, 0.9), st.floats(-20, 20))
def test_correlation_affine_invariance(a, gain, offset):
    g = to_gray(a)
    b = gain * g + offset + 30
    v = visual_change(g, b)
    if not v.degenerate:
        assert math.isclose(v.zeta_v, 1.0, abs_tol=1e-9)


def test_inverted_image_correlation_is_minus_one():
    g = np.arange(48, dtype=float).reshape(6, 8)
    assert math.isclose(visual_change(g, 100 - g).zeta_v, -1.0, abs_tol=1e-12)


def test_constant_image_is_degenerate():
    a = np.full((4, 4, 3), 50, np.uint8)
    b = np.random.default_rng(0).integers(0, 255, (4, 4, 3), dtype=np.uint8)
    v = visual_change(a, b)
    assert v.degenerate and v.zeta_v == 0.0
    z = np.zeros((4, 4, 3), np.uint8)
    v = visual_change(z, b)
    assert v.degenerate and v.rho_v == 0.0


def test_empty_mask_is_degenerate():
    a = np.ones((4, 4, 3), np.uint8)
    assert visual_change(a, a, mask=np.zeros((4, 4), bool)).degenerate


def test_shape_mismatch():
    with pytest.raises(ValueError):
        visual_change(np.zeros((2, 2)), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        semantic_change(np.zeros((2, 2)), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        geometric_change(np.zeros((2, 2)), np.zeros((3, 3)))


@given(arrays(np.int32, (6, 8), elements=st.integers(0, 3)), arrays(np.int32, (6, 8), elements=st.integers(0, 3)))
def test_semantic_against_oracle(a, b):
    z, empty = semantic_change(a, b)
    assert z == naive_semantic(a, b)
    assert empty == (not np.any((a != 0) & (b != 0)))
    assert 0.0 <= z <= 1.0


@given(arrays(np.float64, (6, 8), elements=st.floats(0, 5)), arrays(np.float64, (6, 8), elements=st.floats(0, 5)))
def test_geometric_against_oracle(a, b):
    z, empty = geometric_change(a, b)
    assert math.isclose(z, naive_geometric(a, b), rel_tol=1e-12, abs_tol=1e-9)
    assert z >= 0


def test_geometric_constant_offset_in_mm():
    d = np.full((4, 4), 2.0)
    z, _ = geometric_change(d + 0.010, d)
    assert math.isclose(z, 10.0, abs_tol=1e-9)


def test_unchanged_scene_scores():
    ref, _, _, _ = make_room_with_moved_box()
    pose = look_at((2.5, 2.0, 1.4), (0.5, 0.5, 0.5))
    s = frame_change(ref, ref, pose, default_intrinsics(80, 60, 62.5))
    assert s.rho_v == 0.0 and s.zeta_s == 0.0 and s.zeta_g == 0.0
    assert math.isclose(s.zeta_v, 1.0, abs_tol=1e-12)
    assert s.valid_overlap == 1.0 and not s.flags


def test_moved_box_changes_all_measures():
    ref, rescan, _, _ = make_room_with_moved_box()
    pose = look_at((2.5, 2.5, 1.6), (1.0, 1.0, 0.4))
    s = frame_change(rescan, ref, pose, default_intrinsics(80, 60, 62.5))
    assert s.rho_v > 0 and s.zeta_v < 1 and s.zeta_s > 0 and s.zeta_g > 0


def _cs(rho=0.1, zs=0.2, zg=5.0, flags=()):
    return ChangeScores(rho, 0.9, zs, zg, 1.0, frozenset(flags))


def test_scene_stats_skip_undefined_measures():
    stats = scene_change_stats([_cs(0.1, 0.2, 5.0), _cs(0.3, 0.0, 0.0, {EMPTY_SEMANTIC}),
                                _cs(0.0, 0.4, 9.0, {DEGENERATE_VISUAL, EMPTY_DEPTH})])
    assert math.isclose(stats["rho_v"], 0.2)
    assert math.isclose(stats["zeta_s"], 0.3)
    assert math.isclose(stats["zeta_g"], 2.5)
    assert stats["frames"] == 3


def test_scene_stats_all_flagged_is_nan():
    stats = scene_change_stats([_cs(flags={EMPTY_SEMANTIC})])
    assert math.isnan(stats["zeta_s"])


def test_scene_stats_empty_raises():
    with pytest.raises(ValueError):
        scene_change_stats([])
