"""Search, corridor and optimisation chained together, plus post-hoc safety checks."""

from __future__ import annotations

import logging
from dataclasses import dataclass, fields
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .corridor import DEFAULT_BOUND, DEFAULT_MAX_DIS, Corridor, generate_corridor
from .cost import PenaltyConfig
from .envmap import GridPath, VoxelGrid
from .flatness import attitude_batch_tolerant, roll_pitch_yaw
from .geom import BodyHull
from .optimizer import OptimizeResult, OptimizerConfig, optimize
from .racing import TrackSpec, route, track_waypoints
from .traj import BoundaryState, PiecewisePoly

log = logging.getLogger(__name__)


@dataclass
class PlanSettings:
    penalty: PenaltyConfig
    optimizer: OptimizerConfig
    max_dis: float = DEFAULT_MAX_DIS
    bound: float = DEFAULT_BOUND


@dataclass
class PlanOutcome:
    grid: VoxelGrid
    path: GridPath
    corridor: Corridor
    result: OptimizeResult
    settings: PlanSettings

    @property
    def trajectory(self) -> PiecewisePoly:
        return self.result.trajectory


def _pick(cls, obj: dict) -> dict:
    names = {f.name for f in fields(cls)}
    unknown = set(obj) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return dict(obj)


def settings_from(track: TrackSpec | None, config: dict | None = None, workers: int | None = None,
                  seed: int | None = None) -> PlanSettings:
    """Defaults, then the track's ``planner`` block, then ``config`` (flat or nested)."""
    pen: dict = {}
    opt: dict = {}
    top: dict = {}
    if track is not None:
        pen.update(v_max=track.v_max, a_max=track.a_max)
    for block in ([track.planner] if track is not None else []) + ([config] if config else []):
        block = dict(block)
        pen.update(block.pop("penalty", {}))
        opt.update(block.pop("optimizer", {}))
        for key in ("max_dis", "bound"):
            if key in block:
                top[key] = float(block.pop(key))
        pnames = {f.name for f in fields(PenaltyConfig)}
        onames = {f.name for f in fields(OptimizerConfig)}
        for k, v in block.items():
            if k in pnames:
                pen[k] = v
            elif k in onames:
                opt[k] = v
            else:
                raise ValueError(f"unknown configuration key {k!r}")
    if workers is not None:
        opt["workers"] = workers
    if seed is not None:
        opt["seed"] = seed
    return PlanSettings(PenaltyConfig(**_pick(PenaltyConfig, pen)), OptimizerConfig(**_pick(OptimizerConfig, opt)),
                        **top)


def plan_path(grid: VoxelGrid, path: GridPath, hull: BodyHull, start: BoundaryState, final: BoundaryState,
              settings: PlanSettings, callback: Callable[[dict], None] | None = None) -> PlanOutcome:
    corridor = generate_corridor(grid, path, settings.max_dis, settings.bound)
    log.info("corridor with %d polytopes", len(corridor))
    # the grid path starts and ends at voxel centres; keep the requested boundary states
    result = optimize(corridor, hull, start, final, settings.optimizer, settings.penalty, callback)
    return PlanOutcome(grid, path, corridor, result, settings)


def plan_track(track: TrackSpec, hull: BodyHull, settings: PlanSettings, inflate_radius: float = 0.0,
               callback: Callable[[dict], None] | None = None) -> PlanOutcome:
    grid = track.grid(inflate_radius)
    path = route(grid, track_waypoints(track))
    path = _pin_ends(path, track.start.position, track.goal)
    return plan_path(grid, path, hull, track.start, BoundaryState.rest(track.goal), settings, callback)


def _pin_ends(path: GridPath, start: NDArray, goal: NDArray) -> GridPath:
    """Replace the snapped end voxels by the exact start and goal positions."""
    W = path.waypoints.copy()
    W[0] = start
    W[-1] = goal
    return GridPath(W, path.indices, path.cost)


def hull_violation(traj: PiecewisePoly, corridor, hull: BodyHull, rate: float = 1000.0):
    """Largest signed distance of any hull vertex outside its piece's polytope.

    Sampled at ``rate`` Hz (end point included); returns ``(max, times, per-sample max)``.
    """
    polys = list(getattr(corridor, "polytopes", corridor))
    T = traj.total_time
    t = np.arange(int(np.floor(T * rate)) + 1) / rate
    if t[-1] < T:
        t = np.append(t, T)
    j, _ = traj.locate(t)
    P = traj.eval_many(t)
    R, ok = attitudes(traj.eval_many(t, 2))
    V = np.einsum("lrc,ic->lir", R, hull.vertices) + P[:, None, :]
    worst = np.full(len(t), -np.inf)
    for k, poly in enumerate(polys):
        m = j == k
        if np.any(m):
            d = np.einsum("lir,kr->lik", V[m], poly.normals) - poly.offsets
            worst[m] = d.max(axis=(1, 2))
    worst[~ok] = np.inf  # attitude undefined: cannot certify the sample
    return float(worst.max()), t, worst


def attitudes(acc: NDArray) -> tuple[NDArray, NDArray[np.bool_]]:
    """Attitudes of many samples; singular samples get the identity and a False flag."""
    return attitude_batch_tolerant(acc, 0.0)


def roll_profile(traj: PiecewisePoly, rate: float = 1000.0) -> tuple[NDArray, NDArray, NDArray]:
    """Times, positions and roll angles in degrees."""
    T = traj.total_time
    t = np.arange(int(np.floor(T * rate)) + 1) / rate
    P = traj.eval_many(t)
    R, ok = attitudes(traj.eval_many(t, 2))
    roll = np.degrees(np.array([roll_pitch_yaw(r)[0] for r in R]))
    roll[~ok] = np.nan
    return t, P, roll


def baseline_radius(hull: BodyHull) -> float:
    """Horizontal half-size of the hull, the inflation radius of the point-mass baseline."""
    return float(np.max(np.abs(hull.vertices[:, :2])))


def point_hull(size: float = 1e-3) -> BodyHull:
    return BodyHull.box(size, size, size)
