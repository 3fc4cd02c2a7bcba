"""Command-line interface.

``localize`` and ``track`` run in-process unless ``--server`` points them at a
running ``floorloc serve`` instance.
"""

from __future__ import annotations

import argparse
import glob
import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import __version__, maps
from .database import DEFAULT_MAX_RANGE, DEFAULT_RAY_COUNT, build_ray_database, read_database, write_database
from .errors import FloorlocError
from .export import write_volume_pgms
from .floorplan import load_floorplan, save_floorplan
from .geometry import Pose, angle_diff
from .hfilter import MotionNoise, read_volume, write_volume
from .metrics import DEFAULT_SUCCESS_RADII, evaluate_runs, recall_at
from .observation import DEFAULT_ORIENTATIONS, argmax_pose, likelihood_volume
from .scan import RayScan
from .sim import DEFAULT_FOV, DEFAULT_N_RAYS, MotionProfile, NoiseModel, random_free_pose, read_trajectory, \
    run_tracking, simulate_trajectory, write_trajectory

FIXTURES = {
    "two-room": maps.two_room,
    "corridor": maps.corridor,
    "apartment": maps.apartment,
}


def version_string() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], capture_output=True,
                             text=True, timeout=5, cwd=Path(__file__).resolve().parent)
        if out.returncode == 0 and out.stdout.strip():
            return f"floorloc {__version__} ({out.stdout.strip()})"
    except (OSError, subprocess.SubprocessError):
        pass
    return f"floorloc {__version__}"


def _dump(obj):
    print(json.dumps(obj, sort_keys=True))


def cmd_build_db(args):
    grid = load_floorplan(args.map)
    db = build_ray_database(grid, args.rays, args.max_range)
    write_database(db, args.output)
    print(f"{args.output}: {db.n_free} free cells x {db.ray_count} rays", file=sys.stderr)


def cmd_fixture(args):
    save_floorplan(FIXTURES[args.name](args.resolution), args.output)


def cmd_simulate(args):
    grid = load_floorplan(args.map)
    noise = NoiseModel(args.range_sigma, args.dropout, args.ego_sigma_xy, math.radians(args.ego_sigma_phi_deg),
                       args.seed)
    if args.start:
        start = Pose(args.start[0], args.start[1], math.radians(args.start[2]))
    else:
        start = random_free_pose(grid, np.random.default_rng(args.seed))
    traj = simulate_trajectory(grid, start, args.steps, MotionProfile(kind=args.profile), noise,
                               fov=math.radians(args.fov_deg), n_rays=args.rays)
    write_trajectory(traj, args.output)


def _pose_errors(pred: Pose, truth: Pose) -> dict:
    return {
        "truth": list(truth.as_tuple()),
        "error_m": math.hypot(pred.x - truth.x, pred.y - truth.y),
        "error_deg": math.degrees(angle_diff(pred.phi, truth.phi)),
        "recall": recall_at([pred], [truth]),
    }


def cmd_localize(args):
    rec = json.loads(Path(args.scan).read_text())
    scan_d = rec.get("scan", rec)
    if args.server:
        import httpx

        r = httpx.post(f"{args.server.rstrip('/')}/localize",
                       json={"scan": scan_d, "orientations": args.orientations}, timeout=60)
        r.raise_for_status()
        body = r.json()
        pose, ll = Pose(*body["pose"]), body["log_lik"]
    else:
        db = read_database(args.db)
        pose, ll = argmax_pose(likelihood_volume(RayScan.from_dict(scan_d), db, args.orientations))
    out = {"pose": list(pose.as_tuple()), "log_lik": ll}
    if "pose" in rec:
        out.update(_pose_errors(pose, Pose(*rec["pose"])))
    _dump(out)


def _noise(args) -> MotionNoise:
    return MotionNoise(args.sigma_xy, args.sigma_xy, math.radians(args.sigma_phi_deg))


def _track_remote(args, traj):
    import httpx

    base = args.server.rstrip("/")
    with httpx.Client(timeout=60) as client:
        r = client.post(f"{base}/sessions", json={"sigma_xy": args.sigma_xy, "sigma_phi_deg": args.sigma_phi_deg,
                                                  "orientations": args.orientations})
        r.raise_for_status()
        sid = r.json()["session_id"]
        try:
            for step in traj.steps:
                r = client.post(f"{base}/sessions/{sid}/steps",
                                json={"ego": list(step.ego.as_tuple()), "scan": step.scan.to_dict()})
                r.raise_for_status()
                body = r.json()
                yield body["step"], Pose(*body["pose"]), body["probability"]
        finally:
            client.delete(f"{base}/sessions/{sid}")


def cmd_track(args):
    traj = read_trajectory(args.trajectory)
    if args.server:
        if args.snapshots:
            raise SystemExit("--snapshots is only available in-process")
        results = _track_remote(args, traj)
    else:
        db = read_database(args.db)
        snap = Path(args.snapshots) if args.snapshots else None
        if snap is not None:
            snap.mkdir(parents=True, exist_ok=True)

        def save_snapshot(i, belief):
            write_volume(belief, snap / f"step_{i:05d}.flpv")

        readouts = run_tracking(traj, db, _noise(args), args.orientations,
                                on_step=save_snapshot if snap is not None else None)
        results = ((i, r.pose, r.probability) for i, r in enumerate(readouts))
    for i, pose, prob in results:
        out = {"step": i, "pose": list(pose.as_tuple()), "probability": prob}
        out.update(_pose_errors(pose, traj.steps[i].pose))
        out.pop("recall")
        _dump(out)


def cmd_eval(args):
    db = read_database(args.db)
    paths = sorted(glob.glob(args.trajectories))
    if not paths:
        raise SystemExit(f"no trajectories match {args.trajectories}")
    noise = _noise(args)
    runs, timing = [], {}
    for p in paths:
        traj = read_trajectory(p)
        readouts = run_tracking(traj, db, noise, args.orientations, timings=timing)
        runs.append(([r.pose for r in readouts], traj.poses))
    report = evaluate_runs(runs, success_radii=tuple(args.radius), rmse_radius=args.rmse_radius)
    out = report.to_dict()
    out["config"] = {
        "db": str(args.db),
        "trajectories": [str(p) for p in paths],
        "sigma_xy": args.sigma_xy,
        "sigma_phi_deg": args.sigma_phi_deg,
        "orientations": args.orientations,
    }
    out["version"] = version_string()
    frames = max(report.n_frames, 1)
    timing_out = {k: v / frames for k, v in sorted(timing.items())}
    if args.timing:
        out["timing"] = timing_out
    text = json.dumps(out, indent=2, sort_keys=True) + "\n"
    Path(args.report).write_text(text)
    if not args.timing:
        Path(str(args.report) + ".timing.json").write_text(json.dumps(timing_out, indent=2, sort_keys=True) + "\n")
    print(text, end="")


def cmd_render_posterior(args):
    v = read_volume(args.volume)
    paths = write_volume_pgms(np.where(v.free_mask[None], v.p, -np.inf), args.output, prefix="bin")
    print(f"wrote {len(paths)} images to {args.output}", file=sys.stderr)


def cmd_gravity_mask(args):
    from .gravity import alignment_from_config, visibility_mask, write_mask_pgm

    m = visibility_mask(alignment_from_config(json.loads(Path(args.config).read_text())))
    write_mask_pgm(m, args.output)
    _dump({"visible_fraction": m.fraction})


def cmd_serve(args):
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(args.db), host=args.host, port=args.port)


def _filter_opts(p):
    p.add_argument("--sigma-xy", type=float, default=0.05, help="translational transition noise (m)")
    p.add_argument("--sigma-phi-deg", type=float, default=3.0, help="rotational transition noise (deg)")
    p.add_argument("--orientations", type=int, default=DEFAULT_ORIENTATIONS)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="floorloc", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"floorloc {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-db", help="precompute circular ray scans for every free cell")
    p.add_argument("map")
    p.add_argument("--rays", type=int, default=DEFAULT_RAY_COUNT)
    p.add_argument("--max-range", type=float, default=DEFAULT_MAX_RANGE)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_build_db)

    p = sub.add_parser("fixture", help="write a synthetic floorplan (image + sidecar json)")
    p.add_argument("name", choices=sorted(FIXTURES))
    p.add_argument("--resolution", type=float, default=0.1)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_fixture)

    p = sub.add_parser("simulate", help="simulate a trajectory with noisy ray observations")
    p.add_argument("map")
    p.add_argument("--profile", choices=["forward", "general"], default="forward")
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--start", type=float, nargs=3, metavar=("X", "Y", "PHI_DEG"))
    p.add_argument("--range-sigma", type=float, default=0.0)
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--ego-sigma-xy", type=float, default=0.0)
    p.add_argument("--ego-sigma-phi-deg", type=float, default=0.0)
    p.add_argument("--fov-deg", type=float, default=math.degrees(DEFAULT_FOV))
    p.add_argument("--rays", type=int, default=DEFAULT_N_RAYS)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("localize", help="single-frame localization of one scan")
    p.add_argument("db")
    p.add_argument("scan", help="scan JSON, or a trajectory-step record with a ground-truth pose")
    p.add_argument("--orientations", type=int, default=DEFAULT_ORIENTATIONS)
    p.add_argument("--server", help="URL of a running floorloc service")
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("track", help="run the histogram filter over a trajectory")
    p.add_argument("db")
    p.add_argument("trajectory")
    _filter_opts(p)
    p.add_argument("--snapshots", help="directory for per-step FLPV posterior dumps")
    p.add_argument("--server", help="URL of a running floorloc service")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="track many trajectories and write a metrics report")
    p.add_argument("db")
    p.add_argument("trajectories", help="glob of trajectory .jsonl files")
    _filter_opts(p)
    p.add_argument("--radius", type=float, nargs="+", default=list(DEFAULT_SUCCESS_RADII))
    p.add_argument("--rmse-radius", type=float, default=1.0)
    p.add_argument("--timing", action="store_true", help="embed wall-clock timing (breaks byte-identical reports)")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render-posterior", help="convert an FLPV dump into PGM images")
    p.add_argument("volume")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_render_posterior)

    p = sub.add_parser("gravity-mask", help="export the visibility mask for a roll/pitch config")
    p.add_argument("config")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_gravity_mask)

    p = sub.add_parser("serve", help="serve a database over HTTP")
    p.add_argument("db")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except FloorlocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
