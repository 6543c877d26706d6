"""Gate tracks, tracking simulation, race monitoring and scoring."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .envmap import GridPath, PointCloud, VoxelGrid, astar, box_cloud, build_grid
from .errors import DivergedTracking, FlatnessSingularity, InputError
from .flatness import attitude_from_flat
from .geom import BodyHull
from .traj import BoundaryState, PiecewisePoly

COLLISION_PENALTY = 30.0
GATE_BONUS = 4.0
BASE_SCORE = 100.0
DEFAULT_DT = 0.005
DEFAULT_GAINS = (16.0, 8.0)
SETTLE_TIME = 1.0
DIVERGENCE_LIMIT = 2.0
GOAL_TOLERANCE = 0.1


def score(T_f: float, N_G: int, collided: bool) -> float:
    """``100 - T_f + 4 N_G``, minus 30 after a collision."""
    if not T_f > 0:
        raise ValueError("finish time must be positive")
    if N_G < 0:
        raise ValueError("gate count must be non-negative")
    return BASE_SCORE - T_f + GATE_BONUS * N_G - (COLLISION_PENALTY if collided else 0.0)


def _unit(v: ArrayLike, name: str) -> NDArray[np.float64]:
    v = np.asarray(v, dtype=float).reshape(3)
    n = np.linalg.norm(v)
    if not n > 0:
        raise ValueError(f"{name} must be non-zero")
    return v / n


@dataclass(frozen=True)
class Box:
    """Oriented box: ``center``, orthonormal columns ``axes`` and ``half`` sizes along them."""

    center: NDArray[np.float64]
    axes: NDArray[np.float64]
    half: NDArray[np.float64]

    @classmethod
    def from_bounds(cls, lo: ArrayLike, hi: ArrayLike) -> "Box":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if np.any(hi <= lo):
            raise ValueError("box bounds must satisfy lo < hi")
        return cls(0.5 * (lo + hi), np.eye(3), 0.5 * (hi - lo))

    @property
    def axis_aligned(self) -> bool:
        return bool(np.allclose(np.abs(self.axes), np.eye(3)))

    def contains(self, pts: NDArray, tol: float = 0.0) -> NDArray[np.bool_]:
        local = (np.asarray(pts, dtype=float) - self.center) @ self.axes
        return np.all(np.abs(local) <= self.half + tol, axis=-1)

    def cloud(self, spacing: float) -> NDArray[np.float64]:
        local = box_cloud(-self.half, self.half, spacing)
        return local @ self.axes.T + self.center

    def to_json(self) -> dict:
        if self.axis_aligned:
            lo = self.center - np.abs(self.axes) @ self.half
            hi = self.center + np.abs(self.axes) @ self.half
            return {"lo": lo.tolist(), "hi": hi.tolist()}
        return {"center": self.center.tolist(), "axes": self.axes.tolist(), "half": self.half.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "Box":
        if "lo" in obj:
            return cls.from_bounds(obj["lo"], obj["hi"])
        return cls(np.asarray(obj["center"], float), np.asarray(obj["axes"], float), np.asarray(obj["half"], float))


@dataclass(frozen=True)
class Gate:
    center: NDArray[np.float64]
    normal: NDArray[np.float64]
    up: NDArray[np.float64]
    half_extents: tuple[float, float]  # along side, along up
    frame: float = 0.0  # width of the surrounding frame bars (0: no frame)

    def __post_init__(self) -> None:
        n = _unit(self.normal, "gate normal")
        u = _unit(self.up, "gate up")
        if abs(n @ u) > 1e-9:
            raise ValueError("gate normal and up vector must be perpendicular")
        he = tuple(float(h) for h in self.half_extents)
        if len(he) != 2 or min(he) <= 0:
            raise ValueError("gate needs two positive half extents")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "up", u)
        object.__setattr__(self, "half_extents", he)

    @property
    def side(self) -> NDArray[np.float64]:
        return np.cross(self.up, self.normal)

    def plane_coords(self, p: ArrayLike) -> NDArray[np.float64]:
        """(side, up, normal) coordinates of ``p`` relative to the gate centre."""
        d = np.asarray(p, dtype=float) - self.center
        return np.stack([d @ self.side, d @ self.up, d @ self.normal], axis=-1)

    def in_aperture(self, p: ArrayLike) -> bool:
        c = self.plane_coords(p)
        return bool(abs(c[0]) <= self.half_extents[0] and abs(c[1]) <= self.half_extents[1])

    def frame_boxes(self) -> list[Box]:
        """Four bars around the aperture, ``frame`` wide and deep."""
        if self.frame <= 0:
            return []
        w = self.frame
        hs, hu = self.half_extents
        axes = np.column_stack([self.side, self.up, self.normal])
        out = []
        for sgn in (-1.0, 1.0):
            out.append(Box(self.center + sgn * (hu + w / 2) * self.up, axes, np.array([hs + w, w / 2, w / 2])))
            out.append(Box(self.center + sgn * (hs + w / 2) * self.side, axes, np.array([w / 2, hu, w / 2])))
        return out

    def to_json(self) -> dict:
        out = {"center": self.center.tolist(), "normal": self.normal.tolist(), "up": self.up.tolist(),
               "half_extents": list(self.half_extents)}
        if self.frame > 0:
            out["frame"] = self.frame
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "Gate":
        return cls(obj["center"], obj["normal"], obj["up"], tuple(obj["half_extents"]), float(obj.get("frame", 0.0)))


@dataclass(frozen=True)
class TrackSpec:
    name: str
    gates: tuple[Gate, ...]
    boxes: tuple[Box, ...]
    cloud: NDArray[np.float64]
    start: BoundaryState
    goal: NDArray[np.float64]
    v_max: float
    a_max: float
    bounds: tuple[NDArray[np.float64], NDArray[np.float64]]
    resolution: float = 0.1
    planner: dict = field(default_factory=dict)  # per-track overrides: max_dis, bound, penalty, optimizer

    def __post_init__(self) -> None:
        lo, hi = (np.asarray(b, dtype=float).reshape(3) for b in self.bounds)
        if np.any(hi <= lo):
            raise ValueError("track bounds are empty")
        goal = np.asarray(self.goal, dtype=float).reshape(3)
        for name, p in (("start", self.start.position), ("goal", goal)):
            if np.any(p < lo) or np.any(p > hi):
                raise ValueError(f"{name} lies outside the track bounds")
        object.__setattr__(self, "bounds", (lo, hi))
        object.__setattr__(self, "goal", goal)
        object.__setattr__(self, "cloud", np.asarray(self.cloud, dtype=float).reshape(-1, 3))

    @property
    def obstacles(self) -> list[Box]:
        """Listed boxes plus the gate frames."""
        out = list(self.boxes)
        for g in self.gates:
            out.extend(g.frame_boxes())
        return out

    def world_cloud(self, spacing: float | None = None) -> NDArray[np.float64]:
        spacing = 0.5 * self.resolution if spacing is None else spacing
        parts = [b.cloud(spacing) for b in self.obstacles] + [self.cloud]
        return np.vstack(parts) if parts else np.zeros((0, 3))

    def grid(self, inflate_radius: float = 0.0) -> VoxelGrid:
        return build_grid(PointCloud(self.world_cloud()), self.resolution, self.bounds, inflate_radius)

    def to_json(self, cloud_ref: str | None = None) -> dict:
        obst: dict = {"boxes": [b.to_json() for b in self.boxes]}
        if cloud_ref:
            obst["cloud"] = cloud_ref
        return {
            "name": self.name,
            "bounds": {"lo": self.bounds[0].tolist(), "hi": self.bounds[1].tolist()},
            "resolution": self.resolution,
            "gates": [g.to_json() for g in self.gates],
            "obstacles": obst,
            "start": self.start.to_json(),
            "goal": self.goal.tolist(),
            "limits": {"v_max": self.v_max, "a_max": self.a_max},
            "planner": dict(self.planner),
        }

    @classmethod
    def from_json(cls, obj: dict, base_dir: str | Path = ".") -> "TrackSpec":
        from .fileio import read_point_cloud

        try:
            obst = obj.get("obstacles", {})
            cloud = np.zeros((0, 3))
            if obst.get("cloud"):
                cloud = read_point_cloud(Path(base_dir) / obst["cloud"])
            b = obj["bounds"]
            lim = obj.get("limits", {})
            return cls(
                name=str(obj.get("name", "track")),
                gates=tuple(Gate.from_json(g) for g in obj.get("gates", [])),
                boxes=tuple(Box.from_json(x) for x in obst.get("boxes", [])),
                cloud=cloud,
                start=BoundaryState.from_json(obj["start"]),
                goal=np.asarray(obj["goal"], dtype=float),
                v_max=float(lim.get("v_max", 5.0)),
                a_max=float(lim.get("a_max", 15.0)),
                bounds=(np.asarray(b["lo"], float), np.asarray(b["hi"], float)),
                resolution=float(obj.get("resolution", 0.1)),
                planner=dict(obj.get("planner", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed track: {exc}") from exc


def load_track(path: str | Path) -> TrackSpec:
    from .fileio import read_json

    path = Path(path)
    return TrackSpec.from_json(read_json(path), path.parent)


def track_waypoints(track: TrackSpec, lead: float | None = None) -> list[NDArray[np.float64]]:
    """Start, an approach/centre/exit triple per gate, then the goal."""
    lead = 2.0 * track.resolution if lead is None else lead
    pts = [track.start.position]
    for g in track.gates:
        pts.extend([g.center - lead * g.normal, g.center, g.center + lead * g.normal])
    pts.append(track.goal)
    return pts


def route(grid: VoxelGrid, waypoints: Sequence[ArrayLike]) -> GridPath:
    """Chain grid searches through consecutive waypoints into one path."""
    pieces = [astar(grid, a, b) for a, b in zip(waypoints[:-1], waypoints[1:])]
    wps = [pieces[0].waypoints]
    idx = [pieces[0].indices]
    cost = pieces[0].cost
    for p in pieces[1:]:
        wps.append(p.waypoints[1:])
        idx.append(p.indices[1:])
        cost += p.cost
    W = np.vstack(wps)
    I = np.vstack(idx)
    # a voxel visited twice (e.g. approach and exit snapped together) would break monotone progress
    keep = [0]
    for k in range(1, len(I)):
        if not np.array_equal(I[k], I[keep[-1]]):
            keep.append(k)
    return GridPath(W[keep], I[keep], float(cost))


# --------------------------------------------------------------------------
# simulation

@dataclass(frozen=True)
class SimState:
    time: float
    position: NDArray[np.float64]
    velocity: NDArray[np.float64]
    acceleration: NDArray[np.float64]  # commanded
    attitude: NDArray[np.float64]
    reference: NDArray[np.float64]


def simulate(traj: PiecewisePoly, track: TrackSpec | None = None, dt: float = DEFAULT_DT,
             gains: tuple[float, float] = DEFAULT_GAINS, initial_offset: ArrayLike | None = None,
             a_max: float | None = None) -> list[SimState]:
    """Track ``traj`` with a PD-on-error double integrator.

    ``a_cmd = a_ref + Kp (x_ref - x) + Kd (v_ref - v)``, clipped to
    ``1.2 a_max`` in norm, integrated with semi-implicit Euler for the
    trajectory duration plus a one second settle window.
    """
    if not 0 < dt <= 0.02:
        raise ValueError("dt must lie in (0, 0.02]")
    kp, kd = gains
    if a_max is None:
        a_max = track.a_max if track is not None else np.inf
    a_lim = 1.2 * a_max
    if track is not None and np.linalg.norm(traj.eval(0.0) - track.start.position) > 1e-6:
        raise ValueError("trajectory does not start at the track start")
    T = traj.total_time
    n = int(np.ceil((T + SETTLE_TIME) / dt - 1e-9))
    times = np.arange(n + 1) * dt
    tc = np.minimum(times, T)
    P = traj.eval_many(tc)
    V = traj.eval_many(tc, 1)
    A = traj.eval_many(tc, 2)
    V[times > T] = 0.0
    A[times > T] = 0.0
    x = P[0].copy()
    if initial_offset is not None:
        x = x + np.asarray(initial_offset, dtype=float)
    v = V[0].copy()
    R = np.eye(3)
    out: list[SimState] = []
    for k, t in enumerate(times):
        e = P[k] - x
        if np.linalg.norm(e) > DIVERGENCE_LIMIT:
            raise DivergedTracking(f"tracking error {np.linalg.norm(e):.3f} m at t={t:.3f} s")
        a = A[k] + kp * e + kd * (V[k] - v)
        na = np.linalg.norm(a)
        if na > a_lim:
            a = a * (a_lim / na)
        try:
            R = attitude_from_flat(a, 0.0)
        except FlatnessSingularity:
            pass  # thrust vanishes: keep the last attitude
        out.append(SimState(float(t), x.copy(), v.copy(), a, R, P[k].copy()))
        v = v + dt * a
        x = x + dt * v
    return out


# --------------------------------------------------------------------------
# monitoring

@dataclass
class RaceResult:
    T_f: float
    N_G: int
    collided: bool
    S: float
    gate_times: list[float]
    collision_time: float | None
    finished: bool
    track: str = ""

    def to_json(self) -> dict:
        return {"track": self.track, "time": self.T_f, "passed_gates": self.N_G, "score": self.S,
                "collided": self.collided, "collision_time": self.collision_time,
                "finished": self.finished, "gate_times": list(self.gate_times)}

    def row(self) -> str:
        flag = "" if self.finished else " (not finished)"
        return f"{self.track:<12} time {self.T_f:8.2f} s  gates {self.N_G:3d}  score {self.S:8.2f}{flag}"


def _occupied_lookup(track: TrackSpec) -> VoxelGrid | None:
    if len(track.cloud) == 0:
        return None
    return build_grid(PointCloud(track.cloud), track.resolution, track.bounds)


def hull_in_collision(track: TrackSpec, verts: NDArray, boxes: Sequence[Box] | None = None,
                      cloud_grid: VoxelGrid | None = None) -> bool:
    boxes = track.obstacles if boxes is None else boxes
    for b in boxes:
        if np.any(b.contains(verts)):
            return True
    if cloud_grid is not None:
        for p in verts:
            if cloud_grid.in_bounds(p) and cloud_grid.is_occupied(p):
                return True
    return False


def monitor(states: Sequence[SimState], hull: BodyHull, track: TrackSpec) -> RaceResult:
    """Gate passes (in order, signed, inside the aperture), first collision and score."""
    if not states:
        raise ValueError("no states to monitor")
    boxes = track.obstacles
    cloud_grid = _occupied_lookup(track)
    gates = track.gates
    nxt = 0
    gate_times: list[float] = []
    collision_time = None
    finish_time = None

    for k, s in enumerate(states):
        if collision_time is None:
            verts = s.position + hull.vertices @ s.attitude.T
            if hull_in_collision(track, verts, boxes, cloud_grid):
                collision_time = s.time
        if k == 0 or finish_time is not None:
            continue
        prev = states[k - 1]
        if nxt < len(gates):
            g = gates[nxt]
            s0 = float((prev.position - g.center) @ g.normal)
            s1 = float((s.position - g.center) @ g.normal)
            if s0 < 0.0 <= s1:
                lam = s0 / (s0 - s1)
                hit = prev.position + lam * (s.position - prev.position)
                if g.in_aperture(hit):
                    gate_times.append(prev.time + lam * (s.time - prev.time))
                    nxt += 1
                    if nxt == len(gates):
                        finish_time = gate_times[-1]
        elif not gates and np.linalg.norm(s.position - track.goal) <= GOAL_TOLERANCE:
            finish_time = s.time

    finished = finish_time is not None
    T_f = finish_time if finished else states[-1].time
    collided = collision_time is not None
    return RaceResult(float(T_f), len(gate_times), collided, score(T_f, len(gate_times), collided),
                      gate_times, collision_time, finished, track.name)
