import json
import math

import numpy as np
import pytest

from floorloc import maps
from floorloc.database import build_ray_database
from floorloc.errors import LengthMismatch, StartOccupied, Stuck, TooShort, ZeroPosterior
from floorloc.floorplan import OccupancyGrid, render_fov_scan
from floorloc.geometry import EgoMotion, Pose, angle_diff, pose_compose
from floorloc.hfilter import MotionNoise
from floorloc.metrics import evaluate_runs, position_errors, recall_at, success_and_rmse, success_vs_history
from floorloc.observation import argmax_pose, likelihood_volume
from floorloc.scan import RayScan
from floorloc.sim import (
    NoiseModel,
    Trajectory,
    TrajectoryStep,
    perturb_scan,
    random_free_pose,
    read_trajectory,
    run_tracking,
    simulate_trajectory,
    write_trajectory,
)

FILTER_NOISE = MotionNoise(0.05, 0.05, math.radians(3))


def scan_of(n, r=5.0):
    return RayScan(0.0, 2 * math.pi / n, np.full(n, r), 15.0)


# --- noise ---------------------------------------------------------------------------

def test_perturb_identity_and_dropout():
    s = scan_of(50)
    same = perturb_scan(s, NoiseModel(0.0, 0.0, seed=1))
    assert np.array_equal(same.ranges, s.ranges) and np.array_equal(same.valid, s.valid)
    assert not perturb_scan(s, NoiseModel(0.0, 1.0, seed=1)).valid.any()


def test_perturb_statistics():
    s = scan_of(100_000)
    out = perturb_scan(s, NoiseModel(0.1, 0.0, seed=7))
    err = out.ranges - s.ranges
    assert abs(err.mean()) < 0.002 and abs(err.std() - 0.1) < 0.005


def test_perturb_clamps_and_is_seeded():
    s = scan_of(1000, 0.05)
    out = perturb_scan(s, NoiseModel(0.5, 0.2, seed=3))
    assert out.ranges.min() >= 0.0 and out.ranges.max() <= 15.0
    again = perturb_scan(s, NoiseModel(0.5, 0.2, seed=3))
    assert np.array_equal(out.ranges, again.ranges) and np.array_equal(out.valid, again.valid)
    assert 0.15 < 1 - out.valid.mean() < 0.25


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(-0.1)
    with pytest.raises(ValueError):
        NoiseModel(dropout_prob=1.5)


# --- simulation -----------------------------------------------------------------------

def test_zero_steps(two_room):
    t = simulate_trajectory(two_room, Pose(2.05, 2.05, 0.0), 0)
    assert len(t) == 1 and t.steps[0].pose == Pose(2.05, 2.05, 0.0)
    assert t.steps[0].ego == EgoMotion(0, 0, 0)


@pytest.mark.parametrize("profile", ["forward", "general"])
def test_noiseless_replay(two_room, profile):
    t = simulate_trajectory(two_room, Pose(2.05, 2.05, 0.3), 60, profile, NoiseModel(seed=4))
    pose = t.steps[0].pose
    for step in t.steps[1:]:
        pose = pose_compose(pose, step.ego)
        assert pose == step.pose
        assert two_room.is_free(pose.x, pose.y)
    if profile == "forward":
        assert all(s.ego.translation > 0 for s in t.steps[1:])
    else:
        assert any(s.ego.translation == 0 for s in t.steps[1:])


def test_seeded_trajectories_identical(two_room, tmp_path):
    noise = NoiseModel(0.1, 0.05, 0.02, 0.01, seed=9)
    a = simulate_trajectory(two_room, Pose(2.05, 2.05, 0.0), 30, "general", noise)
    b = simulate_trajectory(two_room, Pose(2.05, 2.05, 0.0), 30, "general", noise)
    write_trajectory(a, tmp_path / "a.jsonl")
    write_trajectory(b, tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_noisy_ego_differs_from_truth(two_room):
    t = simulate_trajectory(two_room, Pose(2.05, 2.05, 0.0), 20, "forward", NoiseModel(ego_sigma_xy=0.05, seed=2))
    assert any(s.ego != m for s, m in zip(t.steps[1:], t.true_motions[1:]))


def test_start_errors():
    g = maps.two_room()
    with pytest.raises(StartOccupied):
        simulate_trajectory(g, Pose(0.05, 0.05, 0.0), 5)
    pocket = np.ones((5, 5), bool)
    pocket[2, 2] = False
    with pytest.raises(Stuck):
        simulate_trajectory(OccupancyGrid(pocket, 0.1), Pose(0.25, 0.25, 0.0), 3)


def test_trajectory_file_format(two_room, tmp_path):
    t = simulate_trajectory(two_room, Pose(2.05, 2.05, 0.0), 5, "general", NoiseModel(0.1, 0.1, seed=1))
    write_trajectory(t, tmp_path / "t.jsonl")
    lines = (tmp_path / "t.jsonl").read_text().splitlines()
    rec = json.loads(lines[2])
    assert set(rec) == {"pose", "ego", "scan"}
    assert set(rec["scan"]) == {"start_angle", "step", "max_range", "ranges", "valid"}
    back = read_trajectory(tmp_path / "t.jsonl")
    assert [s.pose for s in back.steps] == t.poses
    assert np.array_equal(back.steps[3].scan.valid, t.steps[3].scan.valid)


def test_random_free_pose_clearance(two_room):
    rng = np.random.default_rng(0)
    for _ in range(20):
        p = random_free_pose(two_room, rng, clearance=3)
        ix, iy = two_room.world_to_cell(p.x, p.y)
        assert not two_room.cells[iy - 3:iy + 4, ix - 3:ix + 4].any()


# --- tracking -------------------------------------------------------------------------

def grid_aligned_trajectory(grid, start, motions):
    pose = start
    steps = [TrajectoryStep(pose, EgoMotion(), render_fov_scan(grid, pose, math.radians(108), 40, 15.0))]
    for m in motions:
        pose = pose_compose(pose, m)
        assert grid.is_free(pose.x, pose.y)
        steps.append(TrajectoryStep(pose, m, render_fov_scan(grid, pose, math.radians(108), 40, 15.0)))
    return Trajectory(steps)


def test_noiseless_tracking_converges(two_room, two_room_db):
    fwd, left, right = EgoMotion(0.2, 0, 0), EgoMotion(0, 0, math.pi / 2), EgoMotion(0, 0, -math.radians(30))
    motions = [fwd] * 3 + [left] + [fwd] * 4 + [right, EgoMotion(0, 0, math.radians(30))] + [fwd] * 2 + [left] + [fwd] * 2
    assert len(motions) == 15
    t = grid_aligned_trajectory(two_room, Pose(2.05, 2.05, 0.0), motions)
    out = run_tracking(t, two_room_db, FILTER_NOISE)
    last, truth = out[-1].pose, t.steps[-1].pose
    assert math.hypot(last.x - truth.x, last.y - truth.y) <= 0.1
    assert angle_diff(last.phi, truth.phi) <= math.radians(10)


def test_noiseless_simulated_tracking(two_room, two_room_db):
    """Off-grid poses: headings fall between 10 degree bins, so the readout is only near the truth."""
    hits, errors = 0, []
    for seed in range(10):
        t = simulate_trajectory(two_room, random_free_pose(two_room, np.random.default_rng(seed)), 15, "general",
                                NoiseModel(seed=seed))
        last, truth = run_tracking(t, two_room_db, FILTER_NOISE)[-1].pose, t.steps[-1].pose
        errors.append(math.hypot(last.x - truth.x, last.y - truth.y))
        hits += errors[-1] <= 0.1 and angle_diff(last.phi, truth.phi) <= math.radians(10)
    assert hits >= 6 and max(errors) < 0.3


def test_single_step_equals_single_frame_argmax(two_room, two_room_db):
    t = simulate_trajectory(two_room, Pose(6.55, 3.55, 1.0), 0, noise=NoiseModel(0.1, 0.05, seed=2))
    tracked = run_tracking(t, two_room_db, FILTER_NOISE)[0].pose
    assert tracked == argmax_pose(likelihood_volume(t.steps[0].scan, two_room_db))[0]


def count_modes(p, rel=0.9):
    """Connected components of poses within ``1 - rel`` of the peak (orientation wraps)."""
    mask = p >= rel * p.max()
    seen = np.zeros_like(mask)
    n_bins, h, w = mask.shape
    modes = 0
    for start in zip(*np.nonzero(mask)):
        if seen[start]:
            continue
        modes += 1
        stack = [start]
        seen[start] = True
        while stack:
            k, y, x = stack.pop()
            for dk, dy, dx in ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)):
                nb = ((k + dk) % n_bins, y + dy, x + dx)
                if 0 <= nb[1] < h and 0 <= nb[2] < w and mask[nb] and not seen[nb]:
                    seen[nb] = True
                    stack.append(nb)
    return modes


def test_corridor_ambiguity_resolves():
    grid = maps.corridor()
    db = build_ray_database(grid, 120, 15.0)
    fov = math.radians(108)
    # slide sideways along the corridor facing a wall, then turn and walk into the room
    motions = [EgoMotion(0, -0.2, 0)] + [EgoMotion(0, 0, -math.pi / 2)] + [EgoMotion(0.2, 0, 0)] * 35
    pose = Pose(3.05, 3.05, math.pi / 2)
    steps = [TrajectoryStep(pose, EgoMotion(), render_fov_scan(grid, pose, fov, 40, 15.0))]
    for m in motions:
        pose = pose_compose(pose, m)
        steps.append(TrajectoryStep(pose, m, render_fov_scan(grid, pose, fov, 40, 15.0)))
    assert grid.world_to_cell(pose.x, pose.y)[0] > 95  # ended in the room
    beliefs = []
    out = run_tracking(Trajectory(steps), db, FILTER_NOISE, on_step=lambda i, v: beliefs.append(v.p.copy()))
    assert count_modes(beliefs[1]) >= 2
    assert count_modes(beliefs[-1]) == 1
    assert math.hypot(out[-1].pose.x - pose.x, out[-1].pose.y - pose.y) < 0.2


def test_zero_posterior_reports_step(two_room, two_room_db):
    t = simulate_trajectory(two_room, Pose(2.05, 2.05, 0.0), 3, noise=NoiseModel(seed=1))
    dead = RayScan(t.steps[2].scan.start_angle, t.steps[2].scan.angular_step, t.steps[2].scan.ranges, 15.0,
                   np.zeros(len(t.steps[2].scan), bool))
    t.steps[2] = TrajectoryStep(t.steps[2].pose, t.steps[2].ego, dead)
    with pytest.raises(ZeroPosterior) as exc:
        run_tracking(t, two_room_db, FILTER_NOISE)
    assert exc.value.step == 2


def test_tracking_timings(two_room, two_room_db):
    t = simulate_trajectory(two_room, Pose(2.05, 2.05, 0.0), 3, noise=NoiseModel(seed=1))
    acc = {}
    run_tracking(t, two_room_db, FILTER_NOISE, timings=acc)
    assert set(acc) == {"transition", "matching", "update", "readout"} and all(v >= 0 for v in acc.values())


# --- metrics --------------------------------------------------------------------------

def test_recall_examples():
    truths = [Pose(1, 1, 0.5), Pose(2, 2, 1.0)]
    assert recall_at(truths, truths) == {"0.1m": 100.0, "0.5m": 100.0, "1m": 100.0, "1m30deg": 100.0}
    r = recall_at([Pose(1.7, 1, 0.5)], [Pose(1, 1, 0.5)])
    assert r["0.5m"] == 0.0 and r["1m"] == 100.0
    r = recall_at([Pose(0, 0, math.radians(170))], [Pose(0, 0, math.radians(350))])
    assert r["1m"] == 100.0 and r["1m30deg"] == 0.0
    assert recall_at([Pose(90, 0, 0)], [Pose(0, 0, 3.0)], [("inf", math.inf, None)]) == {"inf": 100.0}
    with pytest.raises(LengthMismatch):
        recall_at([Pose(0, 0, 0)], [])


def test_success_examples():
    zero = [Pose(0, 0, 0)] * 10
    r = success_and_rmse(zero, zero, 1.0)
    assert r.success and r.rmse_succeeded == 0.0
    preds = [Pose(0.12, 0, 0)] * 10
    r = success_and_rmse(preds, zero, 1.0)
    assert r.success and r.rmse_succeeded == pytest.approx(0.12)
    preds = [Pose(0.1, 0, 0)] * 9 + [Pose(1.2, 0, 0)]
    r = success_and_rmse(preds, zero, 1.0)
    assert not r.success and r.rmse_succeeded is None
    assert r.rmse_all == pytest.approx(math.sqrt((9 * 0.01 + 1.44) / 10), abs=1e-12)
    with pytest.raises(TooShort):
        success_and_rmse(zero[:5], zero[:5], 1.0)


def test_success_rate_monotone_in_radius():
    rng = np.random.default_rng(0)
    truths = [Pose(0, 0, 0)] * 12
    runs = [([Pose(rng.exponential(0.6), 0, 0) for _ in range(12)], truths) for _ in range(40)]
    rep = evaluate_runs(runs, success_radii=(0.25, 0.5, 1.0, 2.0, 4.0))
    rates = list(rep.success_rate_at.values())
    assert rates == sorted(rates)
    assert all(0 <= v <= 100 for v in rep.recall.values()) and rep.rmse_all >= 0


def test_success_vs_history():
    truths = [Pose(0, 0, 0)] * 30
    good_late = [Pose(5, 0, 0)] * 12 + [Pose(0, 0, 0)] * 18
    assert success_vs_history([(good_late, truths)], [10, 25], 1.0) == {10: 0.0, 25: 100.0}


def test_position_errors():
    assert position_errors([Pose(3, 4, 0)], [Pose(0, 0, 1)]).tolist() == [5.0]
