import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarmdensity.geometry import CameraIntrinsics, GridSpec, Scene
from swarmdensity.labeling import (
    LabelSpec,
    gaussian_kernel,
    raw_histogram,
    smooth_labels,
    stack_cells,
    unstack_cells,
)

CAM = CameraIntrinsics()
SPEC = LabelSpec()
ONE = GridSpec(1, 1)
THREE = GridSpec(3, 3)

# discrete unit-sum Gaussian, sigma = 1, radius 4, evaluated by hand
G1 = [0.00013383062461474175, 0.0044318616200312655, 0.05399112742070441,
      0.24197144565660073, 0.39894346935609776, 0.24197144565660073,
      0.05399112742070441, 0.0044318616200312655, 0.00013383062461474175]


def on_axis(*norms):
    return Scene.from_poses([(0.0, 0.0, d) for d in norms])


def brute_force_raw(scene, cam, grid, spec):
    out = np.zeros((grid.h_out, grid.w_out, spec.n_bin))
    cw, ch = cam.width // grid.w_out, cam.height // grid.h_out
    for (x, y, z) in scene.positions:
        if z <= 0:
            continue
        u = cam.fx * x / z + cam.cx
        v = cam.fy * y / z + cam.cy
        if not (0 <= u < cam.width and 0 <= v < cam.height):
            continue
        col = min(int(math.floor(u / cw)), grid.w_out - 1)
        row = min(int(math.floor(v / ch)), grid.h_out - 1)
        dist = math.sqrt(x * x + y * y + z * z)
        b = int(math.floor(dist / spec.delta_d))
        if b > spec.n_bin - 1:
            b = spec.n_bin - 1
        out[row, col, b] += 1
    return out


def convolve_oracle(hist, spec, mode):
    """Explicit per-source-bin convolution loop."""
    n = spec.n_bin
    r = int(math.ceil(4 * spec.sigma))
    out = [0.0] * n
    for j, mass in enumerate(hist):
        if mass == 0:
            continue
        if mode == "raw" or (mode == "partial" and j < spec.k):
            out[j] += mass
            continue
        weights = {}
        for off in range(-r, r + 1):
            t = j + off
            if 0 <= t < n:
                weights[t] = math.exp(-0.5 * (off / spec.sigma) ** 2)
        total = sum(weights.values())
        for t, w in weights.items():
            out[t] += mass * w / total
    return np.array(out)


def test_labelspec_invariants():
    assert SPEC.d_max == 49.0
    with pytest.raises(ValueError):
        LabelSpec(delta_d=0)
    with pytest.raises(ValueError):
        LabelSpec(k=51)
    with pytest.raises(ValueError):
        LabelSpec(sigma=-1)


def test_raw_empty_scene():
    assert not raw_histogram(Scene(), CAM, THREE, SPEC).any()


def test_raw_first_bin():
    h = raw_histogram(on_axis(0.5), CAM, THREE, SPEC)
    assert h[1, 1, 0] == 1 and h.sum() == 1


def test_raw_clamps_far_uavs():
    h = raw_histogram(on_axis(1.2, 1.9, 55.0), CAM, ONE, SPEC)[0, 0]
    assert h[1] == 2 and h[49] == 1 and h.sum() == 3


def test_raw_excludes_behind_and_outside():
    scene = Scene.from_poses([(0, 0, -3), (100, 0, 5), (0, 0, 3)])
    h = raw_histogram(scene, CAM, ONE, SPEC)
    assert h.sum() == 1 and h[0, 0, 3] == 1


def test_raw_matches_brute_force_random():
    rng = np.random.default_rng(11)
    for _ in range(200):
        n = rng.integers(0, 30)
        pos = np.column_stack([rng.uniform(-30, 30, n), rng.uniform(-30, 30, n), rng.uniform(-5, 70, n)])
        scene = Scene.from_poses(pos)
        for grid in (ONE, THREE, GridSpec(4, 2)):
            np.testing.assert_array_equal(raw_histogram(scene, CAM, grid, SPEC),
                                          brute_force_raw(scene, CAM, grid, SPEC))


def test_gaussian_kernel_values():
    np.testing.assert_allclose(gaussian_kernel(1.0), G1, rtol=0, atol=1e-15)


def test_partial_identity_when_k_is_n_bin():
    spec = LabelSpec(k=50)
    rng = np.random.default_rng(0)
    raw = rng.integers(0, 4, size=(3, 3, 50)).astype(float)
    np.testing.assert_array_equal(smooth_labels(raw, spec, "partial"), raw)


def test_partial_keeps_close_bins():
    raw = np.zeros(50)
    raw[0] = 1
    np.testing.assert_array_equal(smooth_labels(raw, LabelSpec(k=5), "partial"), raw)


def test_single_count_bin10():
    spec = LabelSpec(sigma=1.0, k=3)
    raw = np.zeros(50)
    raw[10] = 1
    out = smooth_labels(raw, spec, "partial")
    expected = np.zeros(50)
    expected[6:15] = G1
    np.testing.assert_allclose(out, expected, rtol=0, atol=1e-15)
    assert out.argmax() == 10 and out.sum() == pytest.approx(1.0, abs=1e-12)


def test_sigma_zero_is_identity():
    raw = np.arange(50, dtype=float)
    for mode in ("partial", "full"):
        np.testing.assert_array_equal(smooth_labels(raw, LabelSpec(sigma=0.0), mode), raw)


def test_unknown_mode():
    with pytest.raises(ValueError):
        smooth_labels(np.zeros(50), SPEC, "median")


hist_strategy = st.lists(st.integers(0, 5), min_size=50, max_size=50).map(
    lambda x: np.array(x, dtype=float))


@settings(max_examples=150, deadline=None)
@given(h=hist_strategy, sigma=st.one_of(st.just(0.0), st.floats(0.05, 6.0)), k=st.integers(0, 50),
       mode=st.sampled_from(["raw", "partial", "full"]))
def test_smoothing_matches_convolution_oracle_and_conserves_mass(h, sigma, k, mode):
    spec = LabelSpec(sigma=sigma, k=k)
    out = smooth_labels(h, spec, mode)
    if sigma > 0:
        np.testing.assert_allclose(out, convolve_oracle(h, spec, mode), rtol=0, atol=1e-9)
    assert abs(out.sum() - h.sum()) <= 1e-9
    assert (out >= 0).all()


@settings(max_examples=100, deadline=None)
@given(src=st.integers(14, 35), sigma=st.floats(0.3, 3.0))
def test_unit_mass_is_unimodal(src, sigma):
    spec = LabelSpec(sigma=sigma, k=5)
    raw = np.zeros(50)
    raw[src] = 1
    out = smooth_labels(raw, spec, "partial")
    assert out.argmax() == src
    d = np.diff(out)
    assert (d[:src] >= 0).all() and (d[src:] <= 0).all()


@settings(max_examples=100, deadline=None)
@given(a=hist_strategy, b=hist_strategy)
def test_linearity_above_k(a, b):
    spec = LabelSpec(k=5)
    a[:5] = 0
    b[:5] = 0
    lhs = smooth_labels(a + b, spec, "partial")
    rhs = smooth_labels(a, spec, "partial") + smooth_labels(b, spec, "partial")
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12)


def test_stack_cells():
    rng = np.random.default_rng(1)
    single = rng.random((1, 1, 50))
    np.testing.assert_array_equal(stack_cells(single), single[0, 0])
    g = rng.random((3, 3, 50))
    v = stack_cells(g)
    assert v.shape == (450,)
    # row-major cells, bins contiguous
    np.testing.assert_array_equal(v[50:100], g[0, 1])
    np.testing.assert_array_equal(v[150:200], g[1, 0])
    np.testing.assert_array_equal(unstack_cells(v, THREE, 50), g)
    with pytest.raises(ValueError):
        unstack_cells(v[:-1], THREE, 50)
