import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from filter_oracle import brute_force_predict, random_volume
from floorloc.errors import NoFreeCells, ShapeMismatch, ZeroPosterior
from floorloc.geometry import EgoMotion, motion_inverse
from floorloc.hfilter import (
    MotionNoise,
    ProbabilityVolume,
    _conv_orientation,
    _conv_separable,
    build_transition_kernel,
    init_uniform,
    posterior_readout,
    predict,
    read_volume,
    update,
    write_volume,
)
from floorloc.observation import LikelihoodVolume

TINY = MotionNoise(0.001, 0.001, 0.001)


def delta_volume(h, w, n_bins, at):
    p = np.zeros((n_bins, h, w))
    p[at] = 1.0
    return ProbabilityVolume(p, np.ones((h, w), bool), 0.1)


def test_init_uniform():
    free = np.zeros((3, 3), bool)
    free[0, 0] = free[2, 1] = True
    v = init_uniform(free, 2)
    assert np.all(v.p[:, free] == 0.25) and np.all(v.p[:, ~free] == 0)
    v = init_uniform(np.ones((10, 10), bool), 36)
    assert np.allclose(v.p, 1 / 3600) and v.p.sum() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(NoFreeCells):
        init_uniform(np.zeros((2, 2), bool), 4)


def test_motion_noise_positive():
    with pytest.raises(ValueError):
        MotionNoise(0.0, 0.1, 0.1)


def test_kernel_zero_motion_is_delta():
    k = build_transition_kernel(EgoMotion(0, 0, 0), TINY, 0.1, 36)
    h = k.half_width
    assert np.allclose(k.translational[:, h, h], 1.0)
    assert k.rotational[0] == pytest.approx(1.0)


def test_kernel_peaks_follow_heading():
    k = build_transition_kernel(EgoMotion(0.1, 0, 0), MotionNoise(0.02, 0.02, 0.02), 0.1, 36)
    h = k.half_width
    peak = lambda f: np.subtract(np.unravel_index(np.argmax(f), f.shape), h)  # noqa: E731  (dy, dx)
    assert tuple(peak(k.translational[0])) == (0, 1)
    assert tuple(peak(k.translational[9])) == (1, 0)
    assert tuple(peak(k.translational[18])) == (0, -1)
    r = build_transition_kernel(EgoMotion(0, 0, math.radians(10)), MotionNoise(0.02, 0.02, 0.02), 0.1, 36).rotational
    assert int(np.argmax(r)) == 1


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.6, 0.6), st.floats(-0.6, 0.6), st.floats(-math.pi, math.pi),
       st.floats(0.01, 0.2), st.floats(0.01, 0.2), st.floats(0.005, 0.5), st.sampled_from([4, 12, 36]))
def test_kernel_invariants(tx, ty, tphi, sx, sy, sphi, n_bins):
    k = build_transition_kernel(EgoMotion(tx, ty, tphi), MotionNoise(sx, sy, sphi), 0.1, n_bins)
    assert k.translational.shape[0] == n_bins and k.translational.shape[1] % 2 == 1
    assert np.all(k.translational >= 0) and np.all(k.rotational >= 0)
    assert np.allclose(k.translational.sum(axis=(1, 2)), 1.0, atol=1e-9)
    assert abs(k.rotational.sum() - 1.0) < 1e-9
    assert k.half_width <= 25
    if k.factors_x is not None:
        outer = k.factors_y[:, :, None] * k.factors_x[:, None, :]
        assert np.allclose(outer, k.translational, atol=1e-12)


def test_kernel_support_capped():
    k = build_transition_kernel(EgoMotion(5.0, 0, 0), MotionNoise(0.05, 0.05, 0.05), 0.1, 8)
    assert k.half_width == 25
    k = build_transition_kernel(EgoMotion(5.0, 0, 0), MotionNoise(0.05, 0.05, 0.05), 0.1, 8, max_half_width=60)
    assert k.half_width == 52


def test_predict_identity_kernel():
    rng = np.random.default_rng(0)
    p, free = random_volume(rng, 12, 9, 36, occupied=0.0)
    v = ProbabilityVolume(p, free, 0.1)
    out = predict(v, build_transition_kernel(EgoMotion(0, 0, 0), TINY, 0.1, 36))
    assert np.abs(out.p - p).max() < 1e-9


@pytest.mark.parametrize("bin_,expected", [(0, (0, 5, 6)), (9, (9, 6, 5))])
def test_predict_moves_delta(bin_, expected):
    v = delta_volume(11, 11, 36, (bin_, 5, 5))
    out = predict(v, build_transition_kernel(EgoMotion(0.1, 0, 0), TINY, 0.1, 36))
    assert posterior_readout(out).index == expected
    assert out.p[expected] > 0.999


def test_predict_shape_mismatch():
    v = delta_volume(5, 5, 8, (0, 2, 2))
    with pytest.raises(ShapeMismatch):
        predict(v, build_transition_kernel(EgoMotion(0, 0, 0), TINY, 0.1, 36))


def test_predict_all_mass_leaves_map():
    v = delta_volume(3, 3, 4, (0, 1, 2))
    with pytest.raises(ZeroPosterior):
        predict(v, build_transition_kernel(EgoMotion(1.0, 0, 0), TINY, 0.1, 4))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.booleans())
def test_predict_matches_brute_force(seed, isotropic):
    rng = np.random.default_rng(seed)
    n_bins = int(rng.choice([4, 12, 36]))
    h, w = (int(v) for v in rng.integers(4, 14, size=2))
    p, free = random_volume(rng, h, w, n_bins)
    sx = rng.uniform(0.02, 0.15)
    noise = MotionNoise(sx, sx if isotropic else rng.uniform(0.02, 0.15), rng.uniform(0.02, 0.5))
    t = EgoMotion(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), rng.uniform(-math.pi, math.pi))
    got = predict(ProbabilityVolume(p, free, 0.1), build_transition_kernel(t, noise, 0.1, n_bins)).p
    want = brute_force_predict(p, free, t, noise, 0.1)
    assert np.abs(got - want).max() <= 1e-6 * np.abs(want).max()


def test_mass_conserved_in_interior():
    p = np.zeros((36, 30, 30))
    p[:, 10:20, 10:20] = np.random.default_rng(1).random((36, 10, 10))
    p /= p.sum()
    k = build_transition_kernel(EgoMotion(0.2, -0.1, 0.3), MotionNoise(0.05, 0.05, 0.05), 0.1, 36)
    moved = np.empty_like(p)
    _conv_separable(p, k.factors_x, k.factors_y, moved)
    out = np.empty_like(p)
    _conv_orientation(moved, np.arange(36), np.asarray(k.rotational), np.ones((30, 30), bool), out)
    assert abs(out.sum() - 1.0) < 1e-9


def test_predict_renormalises_with_walls():
    rng = np.random.default_rng(3)
    p, free = random_volume(rng, 15, 15, 12, occupied=0.3)
    out = predict(ProbabilityVolume(p, free, 0.1),
                  build_transition_kernel(EgoMotion(0.3, 0.1, 0.5), MotionNoise(0.1, 0.1, 0.2), 0.1, 12))
    assert abs(out.p.sum() - 1.0) < 1e-6 and np.all(out.p[:, ~free] == 0)


def test_inverse_motion_restores_delta():
    t = EgoMotion(0.3, 0.2, math.radians(40))
    noise = MotionNoise(0.01, 0.01, 0.01)
    v = delta_volume(21, 21, 36, (4, 10, 10))
    fwd = predict(v, build_transition_kernel(t, noise, 0.1, 36))
    k, iy, ix = posterior_readout(fwd).index
    # undo the translation from the reached heading bin
    back = predict(fwd, build_transition_kernel(motion_inverse(t), noise, 0.1, 36))
    assert posterior_readout(back).index[1:] == (10, 10)


def lik(ll, free=None):
    free = np.ones(ll.shape[1:], bool) if free is None else free
    return LikelihoodVolume(ll, free)


def test_update_examples():
    rng = np.random.default_rng(4)
    ll = -rng.random((2, 4, 4)) * 5
    u = update(init_uniform(np.ones((4, 4), bool), 2), lik(ll))
    assert np.allclose(u.p, np.exp(ll) / np.exp(ll).sum(), atol=1e-15)
    d = delta_volume(4, 4, 2, (1, 2, 3))
    assert np.array_equal(update(d, lik(ll)).p, d.p)


def test_update_extended_precision_oracle():
    rng = np.random.default_rng(5)
    p = rng.random((2, 4, 4))
    p /= p.sum()
    ll = -rng.random((2, 4, 4)) * 30
    ll[0, 1, 1] = -np.inf
    want = p.astype(np.longdouble) * np.exp(ll.astype(np.longdouble))
    want /= want.sum()
    got = update(ProbabilityVolume(p, np.ones((4, 4), bool)), lik(ll)).p
    assert np.abs(got - want.astype(np.float64)).max() < 1e-12
    assert got[0, 1, 1] == 0.0


def test_update_zero_posterior():
    d = delta_volume(3, 3, 2, (0, 1, 1))
    ll = np.zeros((2, 3, 3))
    ll[0, 1, 1] = -np.inf
    with pytest.raises(ZeroPosterior):
        update(d, lik(ll))
    with pytest.raises(ShapeMismatch):
        update(d, lik(np.zeros((2, 3, 4))))


def test_update_underflow_falls_back_to_log_domain():
    p = np.zeros((1, 1, 3))
    p[0, 0, 0] = 1e-300
    p[0, 0, 1] = 1.0 - 1e-300
    ll = np.array([[[0.0, -1e4, -np.inf]]])
    out = update(ProbabilityVolume(p, np.ones((1, 3), bool)), lik(ll))
    assert out.p[0, 0, 0] == 1.0


@settings(max_examples=30)
@given(st.integers(0, 2**31))
def test_update_commutes(seed):
    rng = np.random.default_rng(seed)
    p, free = random_volume(rng, 5, 6, 4, occupied=0.0)
    v = ProbabilityVolume(p, free)
    l1, l2 = lik(-rng.random((4, 5, 6)) * 20), lik(-rng.random((4, 5, 6)) * 20)
    a = update(update(v, l1), l2).p
    b = update(update(v, l2), l1).p
    assert np.abs(a - b).max() < 1e-12


def test_readout():
    d = delta_volume(3, 4, 4, (2, 1, 3))
    r = posterior_readout(d)
    assert r.index == (2, 1, 3) and r.probability == 1.0
    assert r.pose.x == pytest.approx(0.35) and r.pose.phi == pytest.approx(math.pi)
    p = np.zeros((4, 3, 4))
    p[1, 0, 0] = p[0, 2, 2] = 0.5
    r = posterior_readout(ProbabilityVolume(p, np.ones((3, 4), bool)))
    assert r.index == (0, 2, 2) and r.probability == 0.5
    assert np.allclose(r.marginal, p.sum(axis=0))


@settings(max_examples=30)
@given(st.integers(0, 2**31))
def test_readout_matches_exhaustive(seed):
    rng = np.random.default_rng(seed)
    p = rng.integers(0, 4, size=(3, 4, 5)).astype(float) + 1
    p /= p.sum()
    r = posterior_readout(ProbabilityVolume(p, np.ones((4, 5), bool)))
    best = max(p[i] for i in np.ndindex(p.shape))
    assert r.index == min(i for i in np.ndindex(p.shape) if p[i] == best)


def test_volume_file_roundtrip(tmp_path):
    rng = np.random.default_rng(6)
    p, free = random_volume(rng, 7, 9, 6)
    v = ProbabilityVolume(p, free, 0.1, (-0.1, 2.5))
    write_volume(v, tmp_path / "v.flpv")
    back = read_volume(tmp_path / "v.flpv")
    assert back.resolution == 0.1 and back.origin == (-0.1, 2.5)
    assert np.array_equal(back.free_mask, free)
    assert np.allclose(back.p, p, rtol=1e-6, atol=0)


def test_rotating_the_world_rotates_the_posterior():
    from floorloc import maps
    from floorloc.database import build_ray_database
    from floorloc.floorplan import OccupancyGrid
    from floorloc.sim import NoiseModel, random_free_pose, run_tracking, simulate_trajectory

    rng = np.random.default_rng(21)
    grid = maps.random_floorplan(rng, 5.0, 5.0)
    n = grid.width
    assert grid.height == n
    # +90 degrees about the map: cell (ix, iy) -> (n - 1 - iy, ix)
    turned = OccupancyGrid(grid.cells.T[:, ::-1].copy(), grid.resolution, grid.origin)
    traj = simulate_trajectory(grid, random_free_pose(grid, rng), 8, "general",
                               NoiseModel(0.05, 0.0, 0.01, 0.01, seed=3))
    noise = MotionNoise(0.05, 0.08, math.radians(5))
    snaps_a, snaps_b = [], []
    run_tracking(traj, build_ray_database(grid, 120, 15.0), noise, 36, on_step=lambda i, v: snaps_a.append(v.p))
    run_tracking(traj, build_ray_database(turned, 120, 15.0), noise, 36, on_step=lambda i, v: snaps_b.append(v.p))
    for a, b in zip(snaps_a, snaps_b):
        expected = np.roll(a.transpose(0, 2, 1)[:, :, ::-1], 9, axis=0)
        assert np.abs(b - expected).max() <= 1e-6 * a.max()
