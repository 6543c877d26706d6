"""Command line entry points: plan, race, corridor, bench, eval.

Exit codes: 0 success, 1 usage error, 2 no path (map/search), 3 corridor or
geometry failure, 4 optimizer failure, 5 unreadable/invalid input or
output, 6 tracking divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import statistics
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from .cost import PenaltyConfig, smoothness
from .envmap import PointCloud, astar, build_grid
from .errors import InputError, PlannerError
from .fileio import read_json, read_point_cloud, sample_trajectory, write_json, write_sampled_csv
from .geom import AXIS_DIRECTIONS, BodyHull, ConvexPolytope, kdop_hull
from .racing import TrackSpec, load_track, monitor, simulate
from .traj import BoundaryState, PiecewisePoly

log = logging.getLogger("se3race")

EVAL_RHO = 1000.0
ROTOR_POINTS = [(0.23, 0.23, 0.0), (0.23, -0.23, 0.0), (-0.23, 0.23, 0.0), (-0.23, -0.23, 0.0),
                (0.0, 0.0, 0.05), (0.0, 0.0, -0.05)]

CSV_HELP = """sampled.csv columns: t [s], x y z [m], vx vy vz [m/s], ax ay az [m/s^2],
qw qx qy qz (unit quaternion, body to world, w first), roll_deg pitch_deg yaw_deg (ZYX).
bench.csv columns: M, L, W, repeats, t_serial, t_parallel (median seconds), r_e = t_serial/t_parallel - 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1; 2 is reserved for NoPath
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def builtin_track(name: str) -> Path:
    return Path(str(resources.files("se3race") / "tracks" / name))


def default_hull() -> BodyHull:
    return kdop_hull(ROTOR_POINTS, AXIS_DIRECTIONS)


def _load_hull(path: str | None) -> BodyHull:
    if path is None:
        return default_hull()
    if not Path(path).exists() and builtin_track(path).exists():
        path = builtin_track(path)
    obj = read_json(path)
    try:
        if "vertices" in obj:
            return BodyHull.from_json(obj)
        return kdop_hull(obj["points"], obj.get("directions", AXIS_DIRECTIONS))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: malformed hull ({exc})") from exc


def _load_track(path: str) -> TrackSpec:
    p = Path(path)
    if not p.exists() and builtin_track(path).exists():
        p = builtin_track(path)
    return load_track(p)


def _track_from_map(args) -> TrackSpec:
    pts = read_point_cloud(args.map)
    if args.start is None or args.goal is None:
        raise InputError("--map needs --start and --goal")
    if args.bounds is not None:
        lo, hi = np.array(args.bounds[:3]), np.array(args.bounds[3:])
    else:
        allp = np.vstack([pts, [args.start, args.goal]])
        lo, hi = allp.min(axis=0) - 1.0, allp.max(axis=0) + 1.0
    return TrackSpec(Path(args.map).stem, (), (), pts, BoundaryState.rest(args.start), np.array(args.goal),
                     args.v_max, args.a_max, (lo, hi), args.resolution)


def _config(args) -> dict:
    return read_json(args.config) if getattr(args, "config", None) else {}


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create {out}: {exc.strerror}") from exc
    return out


def _trace_writer(args, out: Path):
    if not args.trace:
        return None, None
    fh = open(out / "trace.jsonl", "w")

    def cb(entry: dict) -> None:
        fh.write(json.dumps(entry) + "\n")

    return cb, fh


def _plan(args, track: TrackSpec, out: Path):
    from .pipeline import baseline_radius, hull_violation, plan_track, point_hull, settings_from

    hull = _load_hull(args.hull)
    try:
        settings = settings_from(track, _config(args), args.workers, args.seed)
    except (TypeError, ValueError) as exc:
        raise InputError(f"bad configuration: {exc}") from exc
    inflate = 0.0
    plan_hull = hull
    if getattr(args, "r3_baseline", False):
        inflate = baseline_radius(hull)
        plan_hull = point_hull()
    cb, fh = _trace_writer(args, out)
    try:
        outcome = plan_track(track, plan_hull, settings, inflate, cb)
    finally:
        if fh is not None:
            fh.close()
    traj = outcome.trajectory
    viol, _, _ = hull_violation(traj, outcome.corridor, hull)
    rows = sample_trajectory(traj, args.sample_rate)
    write_json(out / "trajectory.json", traj.to_json())
    write_json(out / "corridor.json", outcome.corridor.to_json())
    write_sampled_csv(out / "sampled.csv", rows)
    summary = {
        "track": track.name,
        "mode": "r3_baseline" if inflate > 0 else "se3",
        "grid": outcome.grid.meta(),
        "path_waypoints": len(outcome.path),
        "pieces": traj.num_pieces,
        "total_time": traj.total_time,
        "status": outcome.result.status,
        "iterations": outcome.result.iterations,
        "evaluations": outcome.result.evaluations,
        "cost": outcome.result.report.to_json(),
        "max_hull_violation": viol,
        "max_abs_roll_deg": float(np.nanmax(np.abs(rows[:, 14]))),
        "penalty": settings.penalty.to_json(),
        "optimizer": settings.optimizer.to_json(),
        "corridor": {"max_dis": settings.max_dis, "bound": settings.bound},
    }
    write_json(out / "plan.json", summary)
    if not args.no_figures:
        from .plotting import attitude_figure, corridor_figure

        occ = outcome.grid.occupied_centers()
        z0 = track.start.position[2]
        occ = occ[np.abs(occ[:, 2] - z0) <= outcome.grid.resolution]
        corridor_figure(out / "corridor.png", outcome.corridor.polytopes, rows[:, 1:4], occ, track.gates)
        attitude_figure(out / "attitude.png", rows)
    return outcome, summary, hull


def cmd_plan(args) -> int:
    track = _load_track(args.track) if args.track else _track_from_map(args)
    out = _out_dir(args)
    _, summary, _ = _plan(args, track, out)
    c = summary["cost"]["components"]
    print("track,mode,pieces,total_time,H,smoothness,time,velocity,acceleration,collision,max_hull_violation,max_abs_roll_deg")
    print(",".join([summary["track"], summary["mode"], str(summary["pieces"]), f"{summary['total_time']:.6f}",
                    f"{summary['cost']['total']:.6f}"] + [f"{c[k]:.6g}" for k in
                                                           ("smoothness", "time", "velocity", "acceleration", "collision")]
                   + [f"{summary['max_hull_violation']:.6g}", f"{summary['max_abs_roll_deg']:.3f}"]))
    return 0


def cmd_corridor(args) -> int:
    from .corridor import generate_corridor
    from .pipeline import settings_from
    from .racing import route, track_waypoints

    track = _load_track(args.track) if args.track else _track_from_map(args)
    out = _out_dir(args)
    try:
        settings = settings_from(track, _config(args))
    except (TypeError, ValueError) as exc:
        raise InputError(f"bad configuration: {exc}") from exc
    grid = track.grid()
    path = route(grid, track_waypoints(track))
    corridor = generate_corridor(grid, path, settings.max_dis, settings.bound)
    write_json(out / "corridor.json", {**corridor.to_json(), "grid": grid.meta()})
    if not args.no_figures:
        from .plotting import corridor_figure

        occ = grid.occupied_centers()
        occ = occ[np.abs(occ[:, 2] - track.start.position[2]) <= grid.resolution]
        corridor_figure(out / "corridor.png", corridor.polytopes, path.waypoints, occ, track.gates)
    print("polytope,planes,seed_start,seed_end")
    for k, (p, (a, b)) in enumerate(zip(corridor.polytopes, corridor.seed_segments)):
        print(f"{k},{len(p)},{' '.join(f'{v:.3f}' for v in a)},{' '.join(f'{v:.3f}' for v in b)}")
    return 0


def cmd_race(args) -> int:
    track = _load_track(args.track)
    out = _out_dir(args)
    if args.plan:
        traj = PiecewisePoly.from_json(read_json(Path(args.plan) / "trajectory.json"))
        hull = _load_hull(args.hull)
    else:
        outcome, _, hull = _plan(args, track, out)
        traj = outcome.trajectory
    states = simulate(traj, track, dt=args.dt)
    result = monitor(states, hull, track)
    write_json(out / "race.json", result.to_json())
    if not args.no_figures:
        from .plotting import corridor_figure

        pos = np.array([s.position for s in states])
        corridor_figure(out / "race.png", [], pos, None, track.gates)
    print("track,time,passed_gates,collided,score,finished")
    print(f"{result.track},{result.T_f:.2f},{result.N_G},{int(result.collided)},{result.S:.2f},{int(result.finished)}")
    return 0


def _bench_fixture(M: int, L: int, rng: np.random.Generator):
    """Random trajectory through a row of boxes with obstacles pressing on it (penalties active)."""
    from .traj import solve_coefficients

    x = np.arange(M + 1, dtype=float)
    corridor = []
    for j in range(M):
        lo = np.array([x[j] - 0.3, -0.25 - 0.1 * rng.random(), 0.6])
        hi = np.array([x[j + 1] + 0.3, 0.25 + 0.1 * rng.random(), 1.6])
        corridor.append(ConvexPolytope.box(lo, hi))
    q = np.column_stack([x[1:-1], 0.15 * rng.standard_normal(M - 1), 1.1 + 0.1 * rng.standard_normal(M - 1)])
    T = 0.3 + 0.2 * rng.random(M)
    traj = solve_coefficients(q, T, BoundaryState.rest([0, 0, 1.1]), BoundaryState.rest([M, 0, 1.1]))
    cfg = PenaltyConfig(samples=L, v_max=2.0, a_max=5.0)
    return corridor, traj, cfg


def bench(Ms, Ls, Ws, repeats: int, seed: int = 0) -> list[dict]:
    from .parallel import EvalEngine

    rng = np.random.default_rng(seed)
    hull = default_hull()
    out = []
    for M in Ms:
        for L in Ls:
            corridor, traj, cfg = _bench_fixture(M, L, rng)
            timings: dict[int, float] = {}
            for W in sorted(set([1] + list(Ws))):
                with EvalEngine(corridor, hull, cfg, W) as eng:
                    eng.evaluate(traj.coeffs, traj.durations)  # warm-up
                    ts = []
                    for _ in range(repeats):
                        t0 = time.perf_counter()
                        eng.evaluate(traj.coeffs, traj.durations)
                        ts.append(time.perf_counter() - t0)
                timings[W] = statistics.median(ts)
            for W in Ws:
                out.append({"M": M, "L": L, "W": W, "repeats": repeats, "t_serial": timings[1],
                            "t_parallel": timings[W], "r_e": timings[1] / timings[W] - 1.0})
    return out


def cmd_bench(args) -> int:
    out = _out_dir(args)
    records = bench(args.M, args.L, args.workers_list, args.repeats, args.seed)
    keys = ["M", "L", "W", "repeats", "t_serial", "t_parallel", "r_e"]
    try:
        with open(out / "bench.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, keys)
            w.writeheader()
            w.writerows(records)
    except OSError as exc:
        raise InputError(f"cannot write bench.csv: {exc.strerror}") from exc
    if not args.no_figures:
        from .plotting import bench_figure

        bench_figure(out / "bench.png", records)
    w = csv.DictWriter(sys.stdout, keys, lineterminator="\n")
    w.writeheader()
    for r in records:
        w.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in r.items()})
    return 0


def eval_loss(traj: PiecewisePoly, rho: float = EVAL_RHO) -> tuple[float, float, float]:
    """``J = S + rho * total time``; returns ``(J, S, total time)``."""
    S = smoothness(traj)[0]
    T = traj.total_time
    return S + rho * T, S, T


def cmd_eval(args) -> int:
    try:
        traj = PiecewisePoly.from_json(read_json(args.trajectory))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{args.trajectory}: malformed trajectory ({exc})") from exc
    J, S, T = eval_loss(traj, args.rho)
    print("J,smoothness,total_time,rho")
    print(f"{J:.10g},{S:.10g},{T:.10g},{args.rho:g}")
    return 0


def _int_list(s: str) -> list[int]:
    try:
        vals = [int(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}")
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("values must be positive integers")
    return vals


def _positive(s: str) -> float:
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="se3race", description=__doc__, epilog=CSV_HELP,
                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def world(sp, track_required=False):
        g = sp.add_argument_group("world")
        g.add_argument("--track", required=track_required,
                       help="track JSON (path, or the name of a bundled track such as gates_only.json)")
        if not track_required:
            g.add_argument("--map", help="point cloud (ASCII PLY or x,y,z CSV) used instead of a track")
            g.add_argument("--start", type=float, nargs=3, metavar=("X", "Y", "Z"))
            g.add_argument("--goal", type=float, nargs=3, metavar=("X", "Y", "Z"))
            g.add_argument("--bounds", type=float, nargs=6, metavar="V", help="lo_x lo_y lo_z hi_x hi_y hi_z")
            g.add_argument("--resolution", type=_positive, default=0.1)
            g.add_argument("--v-max", type=_positive, default=5.0)
            g.add_argument("--a-max", type=_positive, default=15.0)

    def common(sp, planning=True):
        sp.add_argument("--out-dir", default="out", help="directory for all written artifacts")
        sp.add_argument("--no-figures", action="store_true", help="skip the PNG figures")
        sp.add_argument("--seed", type=int, default=0)
        if planning:
            sp.add_argument("--hull", help="hull JSON ({'vertices': ...} or {'points': ..., 'directions': ...})")
            sp.add_argument("--config", help="JSON with PenaltyConfig / OptimizerConfig fields, max_dis, bound")
            sp.add_argument("--workers", type=int, default=1)
            sp.add_argument("--trace", action="store_true", help="write per-iteration JSON lines to trace.jsonl")
            sp.add_argument("--sample-rate", type=_positive, default=100.0, help="sampled.csv rate in Hz")
            sp.add_argument("--r3-baseline", action="store_true",
                            help="point-mass planning on a grid inflated by the hull's horizontal radius")

    sp = sub.add_parser("plan", help="search, corridor and trajectory optimisation",
                        epilog=CSV_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    world(sp)
    common(sp)
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("race", help="plan (or load a plan), fly it and score the run")
    world(sp, track_required=True)
    common(sp)
    sp.add_argument("--plan", help="directory holding trajectory.json from an earlier plan run")
    sp.add_argument("--dt", type=_positive, default=0.005)
    sp.set_defaults(func=cmd_race)

    sp = sub.add_parser("corridor", help="emit the flight corridor only")
    world(sp)
    common(sp, planning=False)
    sp.add_argument("--config", help="JSON with max_dis and bound")
    sp.set_defaults(func=cmd_corridor)

    sp = sub.add_parser("bench", help="time serial against parallel cost evaluation",
                        epilog=CSV_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    common(sp, planning=False)
    sp.add_argument("--M", type=_int_list, default=[64], help="piece counts, comma separated")
    sp.add_argument("--L", type=_int_list, default=[16, 32, 48], help="samples per piece, comma separated")
    sp.add_argument("--workers", dest="workers_list", type=_int_list, default=[4], help="worker counts")
    sp.add_argument("--repeats", type=int, default=20)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("eval", help="loss J = S + rho * T of a trajectory JSON")
    sp.add_argument("trajectory")
    sp.add_argument("--rho", type=float, default=EVAL_RHO)
    sp.set_defaults(func=cmd_eval)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "workers", 1) is not None and getattr(args, "workers", 1) < 1:
        print("se3race: error: --workers must be >= 1", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except PlannerError as exc:
        print(f"se3race: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"se3race: InputError: {exc}", file=sys.stderr)
        return InputError.exit_code


if __name__ == "__main__":
    sys.exit(main())
