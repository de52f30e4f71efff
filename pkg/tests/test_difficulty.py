import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis.extra.numpy import arrays
from hypothesis import strategies as st

from relocbench.difficulty import (
    PRESETS,
    Bound,
    apply_filter,
    fov_context,
    get_preset,
    laplacian,
    pose_novelty,
    variance_of_laplacian,
)
from relocbench.geometry import Intrinsics, Pose, axis_angle
from relocbench.synthetic import look_at, room_trajectory

from .conftest import poses
from .oracles import naive_vol

K = Intrinsics(640, 480, 500, 500, 320, 240)


def test_vol_against_oracle():
    rng = np.random.default_rng(2)
    for _ in range(10):
        img = rng.integers(0, 256, (20, 24, 3), dtype=np.uint8)
        assert abs(variance_of_laplacian(img) - naive_vol(img)) <= 1e-9


def test_vol_flat_and_ramp_are_zero():
    assert variance_of_laplacian(np.full((10, 10, 3), 77, np.uint8)) == 0.0
    ramp = np.add.outer(np.arange(10.0), 2 * np.arange(12.0))
    assert variance_of_laplacian(ramp) == 0.0


def test_vol_checkerboard():
    # the Laplacian of a +-1 checkerboard is +-8 everywhere
    cb = np.indices((9, 9)).sum(axis=0) % 2 * 2.0 - 1.0
    assert np.all(np.abs(laplacian(cb)) == 8.0)
    assert variance_of_laplacian(cb) == pytest.approx(64.0 - (8.0 / 49) ** 2, rel=1e-12)


def test_vol_rejects_tiny_images():
    with pytest.raises(ValueError, match="3x3"):
        variance_of_laplacian(np.zeros((2, 5)))


@given(arrays(np.float64, (8, 9), elements=st.floats(0, 255)), st.floats(-100, 100))
def test_vol_shift_invariant(img, c):
    assert math.isclose(variance_of_laplacian(img), variance_of_laplacian(img + c), rel_tol=1e-6, abs_tol=1e-6)


def test_hull_of_plane_is_pyramid():
    pyramid = (640 / 500) * (480 / 500) * 4 * 2 / 3
    # pixel centres span (w - 1) / f, not w / f, so the sampled frustum is slightly smaller
    sampled = (639 / 500) * (479 / 500) * 4 * 2 / 3
    ctx = fov_context(np.full((480, 640), 2.0), K)
    assert not ctx.degenerate
    assert math.isclose(ctx.volume, sampled, rel_tol=1e-9)
    assert abs(ctx.volume - pyramid) / pyramid < 0.01


@given(poses())
def test_hull_invariant_under_pose(p):
    depth = np.full((48, 64), 3.0)
    depth[10:30, 20:40] = 1.5
    k = Intrinsics(64, 48, 50, 50, 32, 24)
    assert math.isclose(fov_context(depth, k, p, stride=4).volume, fov_context(depth, k, Pose(), stride=4).volume,
                        rel_tol=1e-9)


def test_hull_degenerate_cases():
    k = Intrinsics(64, 48, 50, 50, 32, 24)
    assert fov_context(np.zeros((48, 64)), k).degenerate
    single = np.zeros((48, 64))
    single[0, 0] = 1.0
    assert fov_context(single, k).degenerate
    with pytest.raises(ValueError):
        fov_context(np.zeros((10, 10)), k)


def test_novelty_of_training_pose_is_zero(room):
    k = Intrinsics(64, 48, 50, 50, 31.5, 23.5)
    train = room_trajectory(6)
    nov = pose_novelty(train[3], train, room, k)
    assert nov.nearest == 3 and nov.eta <= 1e-9


def test_novelty_ties_lowest_index(room):
    k = Intrinsics(64, 48, 50, 50, 31.5, 23.5)
    train = room_trajectory(4)
    nov = pose_novelty(train[2], [train[0], train[2], train[2]], room, k)
    assert nov.nearest == 1


def test_novelty_grows_with_offset(room):
    k = Intrinsics(64, 48, 50, 50, 31.5, 23.5)
    q = look_at((2.5, 2.0, 1.4), (0.0, 1.0, 1.0))
    etas = [pose_novelty(q, [q @ Pose(axis_angle((0, 1, 0), a), (0, 0, 0))], room, k).eta for a in (1, 3, 9)]
    assert etas[0] < etas[1] < etas[2]
    with pytest.raises(ValueError):
        pose_novelty(q, [], room, k)


def test_bounds():
    b = Bound(lo=1.0, lo_inclusive=False)
    assert 1.0 not in b and 1.0000001 in b
    c = Bound(0.2, 8.0)
    assert 0.2 in c and 8.0 in c and 8.01 not in c
    assert str(c) == "[0.2, 8]"


def test_presets_exist():
    assert len(PRESETS) == 11
    assert get_preset("default") is PRESETS["default filter"]
    assert get_preset("None") is PRESETS["no filter"]
    assert get_preset("hard_changes") is PRESETS["hard changes"]
    assert get_preset("Texture-less") is PRESETS["texture-less"]
    with pytest.raises(KeyError):
        get_preset("extreme")


def test_missing_score_names_frame():
    with pytest.raises(KeyError, match="frame-7.*sigma"):
        PRESETS["default filter"].passes({"nu": 1.0, "eta": 1.0}, "frame-7")


def test_no_filter_accepts_everything():
    kept, n = apply_filter([{"a": 1}, {}], "no filter", key=lambda f: f)
    assert n == 2
