"""Convex geometry in three dimensions.

Polytopes are stored in H-representation: each face is a unit outward
normal ``n`` and a point ``p`` on the plane, and a point ``x`` is inside
when ``(x - p) . n <= 0`` for every face.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

from .errors import Degenerate, DegenerateInput, EmptyIntersection, Infeasible, Unbounded

DUPLICATE_TOL = 1e-9
VERTEX_TOL = 1e-9
# cap on the clearance variable so that unbounded regions still give an LP optimum
_RADIUS_CAP = 1e6


def _vec3(v: ArrayLike) -> NDArray[np.float64]:
    a = np.asarray(v, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite vector {a}")
    return a


@dataclass(frozen=True)
class HalfSpace:
    normal: NDArray[np.float64]
    point: NDArray[np.float64]

    def __post_init__(self) -> None:
        n = _vec3(self.normal)
        norm = np.linalg.norm(n)
        if norm == 0.0:
            raise ValueError("halfspace normal must be non-zero")
        if abs(norm - 1.0) > 1e-12:
            n = n / norm
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "point", _vec3(self.point))

    @property
    def offset(self) -> float:
        return float(self.normal @ self.point)

    def signed_distance(self, x: ArrayLike) -> float:
        return float((np.asarray(x, dtype=np.float64) - self.point) @ self.normal)


@dataclass(frozen=True, eq=False)
class ConvexPolytope:
    """Intersection of halfspaces; immutable once built.

    ``normals`` and ``points`` are ``(N, 3)`` arrays, row ``k`` describing
    face ``k``.  Use :meth:`from_halfspaces` or :meth:`box` to build one.
    """

    normals: NDArray[np.float64]
    points: NDArray[np.float64]
    offsets: NDArray[np.float64] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        n = np.array(self.normals, dtype=np.float64).reshape(-1, 3)
        p = np.array(self.points, dtype=np.float64).reshape(-1, 3)
        if n.shape != p.shape:
            raise ValueError("normals and points must have the same shape")
        if not (np.all(np.isfinite(n)) and np.all(np.isfinite(p))):
            raise ValueError("non-finite plane data")
        norms = np.linalg.norm(n, axis=1)
        if np.any(norms < 1e-12):
            raise ValueError("degenerate plane normal")
        n = n / norms[:, None]
        n.setflags(write=False)
        p.setflags(write=False)
        off = np.einsum("ij,ij->i", n, p)
        off.setflags(write=False)
        object.__setattr__(self, "normals", n)
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "offsets", off)

    @classmethod
    def from_halfspaces(cls, halfspaces: Iterable[HalfSpace]) -> "ConvexPolytope":
        hs = list(halfspaces)
        if not hs:
            return cls(np.zeros((0, 3)), np.zeros((0, 3)))
        return cls(np.array([h.normal for h in hs]), np.array([h.point for h in hs]))

    @classmethod
    def box(cls, lo: ArrayLike, hi: ArrayLike) -> "ConvexPolytope":
        lo, hi = _vec3(lo), _vec3(hi)
        eye = np.eye(3)
        normals = np.vstack([-eye, eye])
        points = np.vstack([np.tile(lo, (3, 1)), np.tile(hi, (3, 1))])
        return cls(normals, points)

    def __len__(self) -> int:
        return self.normals.shape[0]

    @property
    def halfspaces(self) -> list[HalfSpace]:
        return [HalfSpace(n, p) for n, p in zip(self.normals, self.points)]

    def signed_distances(self, x: ArrayLike) -> NDArray[np.float64]:
        """Plane values ``(x - p_k) . n_k`` for one point or an ``(m, 3)`` batch."""
        x = np.asarray(x, dtype=np.float64)
        return x @ self.normals.T - self.offsets

    def contains_points(self, x: ArrayLike, tol: float = 0.0) -> NDArray[np.bool_]:
        d = self.signed_distances(np.atleast_2d(x))
        if d.shape[1] == 0:
            return np.ones(d.shape[0], dtype=bool)
        return np.max(d, axis=1) <= tol

    def to_json(self) -> dict:
        return {"planes": [{"n": n.tolist(), "p": p.tolist()} for n, p in zip(self.normals, self.points)]}

    @classmethod
    def from_json(cls, obj: dict) -> "ConvexPolytope":
        planes = obj["planes"]
        return cls(np.array([pl["n"] for pl in planes], dtype=float).reshape(-1, 3),
                   np.array([pl["p"] for pl in planes], dtype=float).reshape(-1, 3))


@dataclass(frozen=True, eq=False)
class BodyHull:
    """Convex bounding volume of the airframe, as body-frame vertices."""

    vertices: NDArray[np.float64]

    def __post_init__(self) -> None:
        v = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        if v.shape[0] < 4:
            raise DegenerateInput("a body hull needs at least 4 vertices")
        try:
            hull = ConvexHull(v)
        except QhullError as exc:
            raise DegenerateInput("body hull vertices are coplanar") from exc
        if len(hull.vertices) != v.shape[0]:
            raise DegenerateInput("every hull vertex must be an extreme point")
        # Qhull equations: normal . x + offset <= 0 inside
        if not np.all(hull.equations[:, 3] < -1e-12):
            raise DegenerateInput("centre of mass must lie strictly inside the hull")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    def __len__(self) -> int:
        return self.vertices.shape[0]

    def to_json(self) -> dict:
        return {"vertices": self.vertices.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "BodyHull":
        return cls(np.array(obj["vertices"], dtype=float))

    @classmethod
    def box(cls, lx: float, ly: float, lz: float) -> "BodyHull":
        """Axis-aligned box hull with full side lengths ``lx, ly, lz``."""
        corners = np.array(list(itertools.product((-0.5, 0.5), repeat=3)))
        return cls(corners * np.array([lx, ly, lz]))


def contains(poly: ConvexPolytope, p: ArrayLike, tol: float = 0.0) -> bool:
    if tol < 0:
        raise ValueError("tol must be non-negative")
    return bool(poly.contains_points(_vec3(p), tol)[0])


def dedupe_planes(normals: NDArray, points: NDArray, tol: float = DUPLICATE_TOL) -> tuple[NDArray, NDArray]:
    """Drop planes whose normal and offset both match an earlier plane."""
    normals = np.asarray(normals, dtype=float).reshape(-1, 3)
    normals = normals / np.linalg.norm(normals, axis=1)[:, None]
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    offsets = np.einsum("ij,ij->i", normals, points)
    keep: list[int] = []
    for k in range(len(normals)):
        dup = False
        for m in keep:
            if np.max(np.abs(normals[k] - normals[m])) <= tol and abs(offsets[k] - offsets[m]) <= tol:
                dup = True
                break
        if not dup:
            keep.append(k)
    return normals[keep], points[keep]


def intersect(a: ConvexPolytope, b: ConvexPolytope) -> ConvexPolytope:
    normals, points = dedupe_planes(np.vstack([a.normals, b.normals]), np.vstack([a.points, b.points]))
    poly = ConvexPolytope(normals, points)
    try:
        interior_point(poly)
    except Infeasible as exc:
        raise EmptyIntersection("polytopes do not overlap") from exc
    return poly


def chebyshev(poly: ConvexPolytope) -> tuple[NDArray[np.float64], float]:
    """Deepest point and its clearance: maximise ``r`` with ``n_k . x + r <= b_k``."""
    N = len(poly)
    if N == 0:
        return np.zeros(3), _RADIUS_CAP
    A = np.hstack([poly.normals, np.ones((N, 1))])
    res = linprog(
        c=np.array([0.0, 0.0, 0.0, -1.0]),
        A_ub=A,
        b_ub=poly.offsets,
        bounds=[(None, None)] * 3 + [(None, _RADIUS_CAP)],
        method="highs",
    )
    if res.status != 0:
        return np.zeros(3), -np.inf
    x = np.asarray(res.x[:3], dtype=float)
    # report the clearance actually achieved rather than the LP variable
    margin = float(-np.max(poly.signed_distances(x)))
    return x, margin


def interior_point(poly: ConvexPolytope, min_margin: float = 1e-10) -> NDArray[np.float64]:
    x, margin = chebyshev(poly)
    if not margin > min_margin:
        raise Infeasible(f"no interior point (best clearance {margin:.3g})")
    return x


def is_bounded(poly: ConvexPolytope) -> bool:
    """True when no direction ``d != 0`` satisfies ``n_k . d <= 0`` for all faces."""
    if len(poly) < 4:
        return False
    for axis in range(3):
        for sign in (1.0, -1.0):
            c = np.zeros(3)
            c[axis] = -sign
            res = linprog(c, A_ub=poly.normals, b_ub=np.zeros(len(poly)), bounds=[(-1, 1)] * 3, method="highs")
            if res.status == 0 and -res.fun > 1e-9:
                return False
    return True


def enumerate_vertices(poly: ConvexPolytope) -> NDArray[np.float64]:
    """Extreme points of a bounded polytope, sorted lexicographically.

    Brute force over every triple of planes: solve the 3x3 system, keep
    solutions feasible for all faces, merge points closer than 1e-9.
    """
    if not is_bounded(poly):
        raise Unbounded("polytope has a recession direction")
    try:
        interior_point(poly)
    except Infeasible as exc:
        raise Degenerate("polytope has empty interior") from exc

    N = len(poly)
    tri = np.array(list(itertools.combinations(range(N), 3)), dtype=np.intp)
    A = poly.normals[tri]
    b = poly.offsets[tri]
    det = np.linalg.det(A)
    ok = np.abs(det) > 1e-12
    A, b = A[ok], b[ok]
    x = np.linalg.solve(A, b[..., None])[..., 0]
    feas = np.max(x @ poly.normals.T - poly.offsets, axis=1) <= VERTEX_TOL
    x = x[feas]

    verts: list[NDArray] = []
    for p in x:
        if not any(np.max(np.abs(p - q)) <= VERTEX_TOL for q in verts):
            verts.append(p)
    out = np.array(verts).reshape(-1, 3)
    order = np.lexsort((out[:, 2], out[:, 1], out[:, 0]))
    return out[order]


def irredundant(poly: ConvexPolytope) -> ConvexPolytope:
    """Keep only the faces that are active at three or more vertices."""
    verts = enumerate_vertices(poly)
    d = verts @ poly.normals.T - poly.offsets
    active = np.sum(np.abs(d) <= VERTEX_TOL, axis=0) >= 3
    return ConvexPolytope(poly.normals[active], poly.points[active])


def kdop_hull(body_points: ArrayLike, directions: Sequence[ArrayLike]) -> BodyHull:
    """Discrete-orientation polytope around ``body_points``.

    For each direction the slab between the minimum and maximum projection
    of the points is kept; the hull is the intersection of all slabs.
    """
    pts = np.asarray(body_points, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] < 4:
        raise DegenerateInput("need at least 4 body points")
    centred = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centred, compute_uv=False)
    if sv[-1] <= 1e-9 * max(sv[0], 1.0):
        raise DegenerateInput("body points are coplanar")
    dirs = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    dirs = dirs / np.linalg.norm(dirs, axis=1)[:, None]
    proj = pts @ dirs.T
    hi = proj.max(axis=0)
    lo = proj.min(axis=0)
    normals = np.vstack([dirs, -dirs])
    points = np.vstack([dirs * hi[:, None], dirs * lo[:, None]])
    normals, points = dedupe_planes(normals, points)
    poly = ConvexPolytope(normals, points)
    try:
        verts = enumerate_vertices(poly)
    except (Unbounded, Degenerate) as exc:
        raise DegenerateInput(f"directions do not enclose the points: {exc}") from exc
    return BodyHull(verts)


AXIS_DIRECTIONS = np.vstack([np.eye(3), -np.eye(3)])
