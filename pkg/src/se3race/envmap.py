"""Voxel occupancy world: construction, A* search, raycasting and distance field."""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import ndimage

from .errors import EmptyBounds, GoalOccupied, NoPath, OutOfBounds, StartOccupied

ESDF_FAR = 1e9


@dataclass(frozen=True)
class PointCloud:
    points: NDArray[np.float64]

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Dense boolean occupancy on a regular lattice.

    Voxel ``(i, j, k)`` covers ``origin + [i, i+1) * resolution`` (and
    likewise per axis); its centre is at ``origin + (index + 0.5) * resolution``.
    """

    origin: NDArray[np.float64]
    resolution: float
    occupancy: NDArray[np.bool_]

    def __post_init__(self) -> None:
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        occ = np.array(self.occupancy, dtype=bool)
        if occ.ndim != 3 or min(occ.shape) < 1:
            raise ValueError("occupancy must be a non-empty 3-D array")
        occ.setflags(write=False)
        origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        origin.setflags(write=False)
        object.__setattr__(self, "occupancy", occ)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "resolution", float(self.resolution))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.occupancy.shape)  # type: ignore[return-value]

    @property
    def lower(self) -> NDArray[np.float64]:
        return self.origin

    @property
    def upper(self) -> NDArray[np.float64]:
        return self.origin + np.array(self.dims) * self.resolution

    def in_bounds(self, p: ArrayLike) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= self.lower) and np.all(p <= self.upper))

    def index_of(self, p: ArrayLike) -> tuple[int, int, int]:
        p = np.asarray(p, dtype=float)
        if not self.in_bounds(p):
            raise OutOfBounds(f"point {p.tolist()} outside grid bounds")
        idx = np.floor((p - self.origin) / self.resolution).astype(int)
        idx = np.minimum(idx, np.array(self.dims) - 1)
        return tuple(int(i) for i in idx)  # type: ignore[return-value]

    def center_of(self, idx: ArrayLike) -> NDArray[np.float64]:
        return self.origin + (np.asarray(idx, dtype=float) + 0.5) * self.resolution

    def is_occupied(self, p: ArrayLike) -> bool:
        return bool(self.occupancy[self.index_of(p)])

    def occupied_centers(self) -> NDArray[np.float64]:
        """Centres of occupied voxels in C (linear index) order."""
        idx = np.argwhere(self.occupancy)
        return self.center_of(idx)

    def meta(self) -> dict:
        return {"origin": self.origin.tolist(), "resolution": self.resolution, "dims": list(self.dims)}

    def inflated(self, radius: float) -> "VoxelGrid":
        return VoxelGrid(self.origin, self.resolution, _dilate(self.occupancy, _inflate_steps(radius, self.resolution)))


def _inflate_steps(radius: float, resolution: float) -> int:
    if radius < 0:
        raise ValueError("inflate radius must be non-negative")
    # guard against 0.2 / 0.1 = 2.0000000000000004
    return int(math.ceil(radius / resolution - 1e-9)) if radius > 0 else 0


def _dilate(occ: NDArray[np.bool_], steps: int) -> NDArray[np.bool_]:
    if steps <= 0 or not occ.any():
        return occ.copy()
    return ndimage.maximum_filter(occ, size=2 * steps + 1, mode="constant", cval=False)


def build_grid(cloud: PointCloud, resolution: float, bounds: tuple[ArrayLike, ArrayLike],
               inflate_radius: float = 0.0) -> VoxelGrid:
    """Occupy every voxel that contains a cloud point, then dilate in the Chebyshev metric."""
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    lo = np.asarray(bounds[0], dtype=float).reshape(3)
    hi = np.asarray(bounds[1], dtype=float).reshape(3)
    if np.any(hi <= lo):
        raise EmptyBounds(f"empty bounds {lo.tolist()} .. {hi.tolist()}")
    dims = np.ceil((hi - lo) / resolution - 1e-9).astype(int)
    occ = np.zeros(tuple(dims), dtype=bool)
    pts = cloud.points
    if len(pts):
        inside = np.all((pts >= lo) & (pts <= hi), axis=1)
        idx = np.floor((pts[inside] - lo) / resolution).astype(int)
        idx = np.clip(idx, 0, dims - 1)
        occ[idx[:, 0], idx[:, 1], idx[:, 2]] = True
    occ = _dilate(occ, _inflate_steps(inflate_radius, resolution))
    return VoxelGrid(lo, resolution, occ)


def box_cloud(lo: ArrayLike, hi: ArrayLike, spacing: float) -> NDArray[np.float64]:
    """Lattice of points filling the closed box ``[lo, hi]`` (faces included)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    axes = []
    for a, b in zip(lo, hi):
        n = max(int(math.ceil((b - a) / spacing - 1e-9)), 0)
        axes.append(np.linspace(a, b, n + 1) if n > 0 else np.array([a]))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True)
class GridPath:
    waypoints: NDArray[np.float64]
    indices: NDArray[np.int64]
    cost: float

    def __len__(self) -> int:
        return self.waypoints.shape[0]


_OFFSETS = [d for d in itertools.product((-1, 0, 1), repeat=3) if d != (0, 0, 0)]


def _move_support(d: tuple[int, int, int]) -> list[tuple[int, int, int]]:
    """Voxels that must be free to take step ``d``: the whole sub-box it spans."""
    ranges = [(0, s) if s else (0,) for s in d]
    return [c for c in itertools.product(*ranges) if c != (0, 0, 0)]


def grid_moves(dims: tuple[int, int, int]) -> list[tuple[int, float, list[int]]]:
    """26-connected moves as (flat delta, unit cost, support deltas) on a padded grid."""
    sy, sz = (dims[1] + 2) * (dims[2] + 2), dims[2] + 2
    moves = []
    for d in _OFFSETS:
        flat = d[0] * sy + d[1] * sz + d[2]
        support = [c[0] * sy + c[1] * sz + c[2] for c in _move_support(d)]
        moves.append((flat, math.sqrt(d[0] ** 2 + d[1] ** 2 + d[2] ** 2), support))
    return moves


def astar(grid: VoxelGrid, start: ArrayLike, goal: ArrayLike) -> GridPath:
    """Minimum-length 26-connected voxel path under Euclidean step costs.

    Diagonal steps require every voxel of the spanned sub-box to be free
    (no corner cutting).  Ties in the open list break on ``(f, h, index)``.
    """
    si = grid.index_of(start)
    gi = grid.index_of(goal)
    if grid.occupancy[si]:
        raise StartOccupied(f"start voxel {si} is occupied")
    if grid.occupancy[gi]:
        raise GoalOccupied(f"goal voxel {gi} is occupied")

    nx, ny, nz = grid.dims
    padded = np.ones((nx + 2, ny + 2, nz + 2), dtype=bool)
    padded[1:-1, 1:-1, 1:-1] = grid.occupancy
    free = (~padded).ravel().tolist()
    sy, sz = (ny + 2) * (nz + 2), nz + 2
    moves = grid_moves(grid.dims)

    def flat(i: tuple[int, int, int]) -> int:
        return (i[0] + 1) * sy + (i[1] + 1) * sz + (i[2] + 1)

    gx, gy, gz = gi
    res = grid.resolution

    def heur(f: int) -> float:
        x, r = divmod(f, sy)
        y, z = divmod(r, sz)
        return res * math.sqrt((x - 1 - gx) ** 2 + (y - 1 - gy) ** 2 + (z - 1 - gz) ** 2)

    s, g = flat(si), flat(gi)
    best = {s: 0.0}
    parent = {s: -1}
    closed = set()
    h0 = heur(s)
    heap = [(h0, h0, s)]
    while heap:
        f, h, cur = heapq.heappop(heap)
        if cur in closed:
            continue
        if cur == g:
            break
        closed.add(cur)
        gc = best[cur]
        for delta, unit, support in moves:
            nb = cur + delta
            if nb in closed:
                continue
            ok = True
            for sd in support:
                if not free[cur + sd]:
                    ok = False
                    break
            if not ok:
                continue
            ng = gc + unit * res
            if ng < best.get(nb, math.inf):
                best[nb] = ng
                parent[nb] = cur
                hn = heur(nb)
                heapq.heappush(heap, (ng + hn, hn, nb))
    else:
        raise NoPath(f"no free path from {si} to {gi}")

    chain = []
    cur = g
    while cur != -1:
        chain.append(cur)
        cur = parent[cur]
    chain.reverse()
    idx = []
    for f in chain:
        x, r = divmod(f, sy)
        y, z = divmod(r, sz)
        idx.append((x - 1, y - 1, z - 1))
    idx_arr = np.array(idx, dtype=np.int64)
    return GridPath(grid.center_of(idx_arr), idx_arr, best[g])


def traversed_voxels(grid: VoxelGrid, a: ArrayLike, b: ArrayLike) -> list[tuple[int, int, int]]:
    """Voxels met by the segment ``a -> b`` (both endpoint voxels included).

    Amanatides-Woo stepping; where the segment passes exactly through an
    edge or corner every voxel around that crossing is reported, which
    keeps the traversal symmetric in ``a`` and ``b``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if not (grid.in_bounds(a) and grid.in_bounds(b)):
        raise OutOfBounds("segment endpoint outside grid")
    ia = np.array(grid.index_of(a))
    ib = np.array(grid.index_of(b))
    pa = (a - grid.origin) / grid.resolution
    d = (b - a) / grid.resolution
    step = np.sign(d).astype(int)
    t_max = np.full(3, np.inf)
    t_delta = np.full(3, np.inf)
    for ax in range(3):
        if step[ax] != 0:
            boundary = ia[ax] + (1 if step[ax] > 0 else 0)
            t_max[ax] = (boundary - pa[ax]) / d[ax]
            t_delta[ax] = 1.0 / abs(d[ax])
    cur = ia.copy()
    out = [tuple(int(v) for v in cur)]
    dims = np.array(grid.dims)
    limit = int(np.sum(np.abs(ib - ia))) + 3
    for _ in range(limit):
        if np.array_equal(cur, ib):
            break
        t = np.min(t_max)
        if t > 1.0 + 1e-12:
            break
        tied = np.abs(t_max - t) <= 1e-12 * max(1.0, abs(t))
        axes = np.flatnonzero(tied)
        if len(axes) > 1:
            for sub in itertools.product(*[(0, 1)] * len(axes)):
                if not any(sub):
                    continue
                c = cur.copy()
                for ax, s in zip(axes, sub):
                    c[ax] += step[ax] * s
                if np.all(c >= 0) and np.all(c < dims):
                    out.append(tuple(int(v) for v in c))
            for ax in axes:
                cur[ax] += step[ax]
                t_max[ax] += t_delta[ax]
        else:
            ax = axes[0]
            cur[ax] += step[ax]
            t_max[ax] += t_delta[ax]
            if np.all(cur >= 0) and np.all(cur < dims):
                out.append(tuple(int(v) for v in cur))
    if out[-1] != tuple(int(v) for v in ib):
        out.append(tuple(int(v) for v in ib))
    return out


def line_free(grid: VoxelGrid, a: ArrayLike, b: ArrayLike) -> bool:
    occ = grid.occupancy
    for v in traversed_voxels(grid, a, b):
        if occ[v]:
            return False
    return True


def esdf(grid: VoxelGrid, far: float = ESDF_FAR) -> NDArray[np.float64]:
    """Unsigned Euclidean distance (metres) from each voxel centre to the nearest occupied centre."""
    if not grid.occupancy.any():
        return np.full(grid.dims, float(far))
    return ndimage.distance_transform_edt(~grid.occupancy, sampling=grid.resolution)
