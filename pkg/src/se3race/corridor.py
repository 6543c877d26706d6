"""Safe flight corridors: overlapping obstacle-free polytopes along a grid path."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .envmap import GridPath, VoxelGrid, line_free
from .errors import CorridorStalled, EndOfPath, SeedBlocked
from .geom import ConvexPolytope, contains

DEFAULT_MAX_DIS = 4.0
DEFAULT_BOUND = 3.0
_INSIDE_TOL = 1e-9


@dataclass(frozen=True)
class Corridor:
    polytopes: tuple[ConvexPolytope, ...]
    seed_segments: tuple[tuple[NDArray[np.float64], NDArray[np.float64]], ...]

    def __len__(self) -> int:
        return len(self.polytopes)

    def to_json(self) -> dict:
        return {
            "polytopes": [p.to_json() for p in self.polytopes],
            "seeds": [[a.tolist(), b.tolist()] for a, b in self.seed_segments],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Corridor":
        polys = tuple(ConvexPolytope.from_json(p) for p in obj["polytopes"])
        seeds = tuple((np.asarray(a, float), np.asarray(b, float)) for a, b in obj.get("seeds", []))
        return cls(polys, seeds)


def _path_index(path: GridPath, wp: ArrayLike, resolution: float) -> int:
    d = np.linalg.norm(path.waypoints - np.asarray(wp, dtype=float), axis=1)
    i = int(np.argmin(d))
    if d[i] > np.sqrt(3.0) * resolution + 1e-9:
        raise ValueError("point is not on the path")
    return i


def far_index(grid: VoxelGrid, path: GridPath, i: int, max_dis: float) -> int:
    """Largest later index visible from waypoint ``i`` and within ``max_dis`` of it.

    Falls back to ``i + 1`` so the walk always advances.
    """
    n = len(path)
    if i >= n - 1:
        raise EndOfPath("already at the last waypoint")
    if not max_dis > 0:
        raise ValueError("max_dis must be positive")
    wp = path.waypoints[i]
    dist = np.linalg.norm(path.waypoints[i + 1:] - wp, axis=1)
    for k in range(n - 1, i, -1):
        if dist[k - i - 1] <= max_dis and line_free(grid, wp, path.waypoints[k]):
            return k
    return i + 1


def find_far_point(grid: VoxelGrid, path: GridPath, wp: ArrayLike, max_dis: float) -> NDArray[np.float64]:
    i = _path_index(path, wp, grid.resolution)
    return path.waypoints[far_index(grid, path, i, max_dis)].copy()


def _segment_projection(a: NDArray, b: NDArray, pts: NDArray) -> NDArray:
    ab = b - a
    den = float(ab @ ab)
    if den == 0.0:
        return np.broadcast_to(a, pts.shape)
    s = np.clip((pts - a) @ ab / den, 0.0, 1.0)
    return a + s[:, None] * ab


def inflate_polytope(grid: VoxelGrid, seg: tuple[ArrayLike, ArrayLike], bound: float) -> ConvexPolytope:
    """Convex obstacle-free region around a free segment.

    Start from the segment's bounding box grown by ``bound`` (clipped to the
    map); while an occupied voxel centre is strictly inside, cut with the
    plane through the centre nearest the segment, its normal pointing from
    the segment towards that centre.
    """
    a = np.asarray(seg[0], dtype=float)
    b = np.asarray(seg[1], dtype=float)
    if not bound > 0:
        raise ValueError("bound must be positive")
    if not line_free(grid, a, b):
        raise SeedBlocked(f"seed segment {a.tolist()} -> {b.tolist()} crosses an occupied voxel")
    lo = np.maximum(np.minimum(a, b) - bound, grid.lower)
    hi = np.minimum(np.maximum(a, b) + bound, grid.upper)
    box = ConvexPolytope.box(lo, hi)
    normals = [n for n in box.normals]
    points = [p for p in box.points]

    ilo = np.clip(np.floor((lo - grid.origin) / grid.resolution).astype(int), 0, None)
    ihi = np.minimum(np.ceil((hi - grid.origin) / grid.resolution).astype(int), grid.dims)
    sub = grid.occupancy[ilo[0]:ihi[0], ilo[1]:ihi[1], ilo[2]:ihi[2]]
    centers = grid.center_of(np.argwhere(sub) + ilo)
    if len(centers):
        live = box.contains_points(centers, -_INSIDE_TOL) if len(centers) else np.zeros(0, bool)
        centers = centers[live]
    while len(centers):
        proj = _segment_projection(a, b, centers)
        d = np.linalg.norm(centers - proj, axis=1)
        k = int(np.argmin(d))
        n = (centers[k] - proj[k]) / d[k]
        normals.append(n)
        points.append(centers[k].copy())
        keep = (centers - centers[k]) @ n < -_INSIDE_TOL
        centers = centers[keep]
    return ConvexPolytope(np.array(normals), np.array(points))


def generate_corridor(grid: VoxelGrid, path: GridPath, max_dis: float = DEFAULT_MAX_DIS,
                      bound: float = DEFAULT_BOUND) -> Corridor:
    """Walk the path, growing one polytope per visible stretch until the goal is covered.

    The next seed start is the furthest waypoint, no later than the middle
    of the current stretch, that lies in the polytope just built; this keeps
    consecutive polytopes overlapping around a shared path point.
    """
    pts = path.waypoints
    goal = pts[-1]
    polys: list[ConvexPolytope] = []
    seeds: list[tuple[NDArray, NDArray]] = []
    i = 0
    stalled = 0
    for _ in range(len(pts) + 3):
        f = far_index(grid, path, i, max_dis) if i < len(pts) - 1 else i
        poly = inflate_polytope(grid, (pts[i], pts[f]), bound)
        polys.append(poly)
        seeds.append((pts[i].copy(), pts[f].copy()))
        if contains(poly, goal):
            return Corridor(tuple(polys), tuple(seeds))
        mid = (i + f + 1) // 2
        nxt = f
        for k in range(mid, i, -1):
            if contains(poly, pts[k]):
                nxt = k
                break
        if nxt <= i:
            stalled += 1
            if stalled >= 3:
                raise CorridorStalled(f"no progress past waypoint {i}")
        else:
            stalled = 0
            i = nxt
    raise CorridorStalled("corridor did not reach the goal")
