"""Objective of the whole-body trajectory problem and its analytic gradients.

``H = S + rho * sum(T) + E_v + E_a + E_c`` where ``S`` is the integrated
squared jerk and the three ``E`` terms are cubic penalties sampled at
``L`` left-endpoint instants per piece:

* speed:        ``K(|v|^2 - v_max^2)``
* acceleration: ``K(|a|^2 - a_max^2)``
* whole body:   ``K(n_k . (R q_i + p - p_k))`` for every hull vertex ``q_i``
  and every face ``k`` of the piece's corridor polytope

with ``K(x) = max(x, 0)^3`` and each sample weighted by ``T_j / L``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import FlatnessSingularity, PieceCountMismatch
from .flatness import attitude_and_jacobian_batch
from .geom import BodyHull, ConvexPolytope
from .traj import NCOEF, PiecewisePoly, sample_basis

_JERK_GAIN = np.array([n * (n - 1) * (n - 2) for n in range(NCOEF)], dtype=float)


@dataclass(frozen=True)
class PenaltyConfig:
    rho: float = 100.0
    w_v: float = 1e4
    w_a: float = 1e4
    w_c: float = 1e5
    v_max: float = 5.0
    a_max: float = 15.0
    samples: int = 16
    # collision planes are evaluated at p - margin * n (0: the corridor itself)
    margin: float = 0.0

    def __post_init__(self) -> None:
        if min(self.rho, self.w_v, self.w_a, self.w_c) < 0:
            raise ValueError("penalty weights must be non-negative")
        if not (self.v_max > 0 and self.a_max > 0):
            raise ValueError("v_max and a_max must be positive")
        if int(self.samples) != self.samples or self.samples < 4:
            raise ValueError("samples per piece must be an integer >= 4")
        if self.margin < 0:
            raise ValueError("margin must be non-negative")

    def to_json(self) -> dict:
        return asdict(self)


COMPONENTS = ("smoothness", "time", "velocity", "acceleration", "collision")


@dataclass
class PieceResult:
    """Cost components and gradients contributed by one piece."""

    parts: NDArray[np.float64]  # ordered as COMPONENTS
    grad_c: NDArray[np.float64]  # (6, 3)
    grad_t: float


@dataclass
class CostReport:
    total: float
    components: dict[str, float]
    grad_c: NDArray[np.float64]
    grad_t: NDArray[np.float64]

    @property
    def penalty(self) -> float:
        return self.components["velocity"] + self.components["acceleration"] + self.components["collision"]

    def to_json(self, gradients: bool = False) -> dict:
        out = {"total": self.total, "components": dict(self.components)}
        if gradients:
            out["grad_c"] = self.grad_c.tolist()
            out["grad_t"] = self.grad_t.tolist()
        return out


def cubic_penalty(x):
    """``max(x, 0)^3`` and its derivative ``3 max(x, 0)^2``."""
    xp = np.maximum(x, 0.0)
    return xp ** 3, 3.0 * xp ** 2


def jerk_gram(T: float, derivative: bool = False) -> NDArray[np.float64]:
    """``Q`` with ``S = tr(C^T Q C)`` over ``[0, T]``; with ``derivative`` the matrix of ``dS/dT``."""
    n = np.arange(NCOEF)
    P = n[:, None] + n[None, :] - 5
    G = _JERK_GAIN[:, None] * _JERK_GAIN[None, :]
    mask = G != 0
    Q = np.zeros((NCOEF, NCOEF))
    if derivative:
        Q[mask] = G[mask] * T ** (P[mask] - 1)
    else:
        Q[mask] = G[mask] * T ** P[mask] / P[mask]
    return Q


def smoothness_piece(C: NDArray, T: float):
    QC = jerk_gram(T) @ C
    S = float(np.sum(C * QC))
    dS_dT = float(np.sum(C * (jerk_gram(T, derivative=True) @ C)))
    return S, 2.0 * QC, dS_dT


def smoothness(traj: PiecewisePoly):
    """Total ``S``, ``dS/dC`` with shape ``(M, 6, 3)`` and ``dS/dT`` with shape ``(M,)``."""
    out = [smoothness_piece(traj.coeffs[j], traj.durations[j]) for j in range(traj.num_pieces)]
    S = 0.0
    for s, _, _ in out:
        S += s
    return S, np.stack([g for _, g, _ in out]), np.array([d for _, _, d in out])


def piece_cost(j: int, C: NDArray, T: float, poly: ConvexPolytope, hull_vertices: NDArray,
               cfg: PenaltyConfig) -> PieceResult:
    """Everything piece ``j`` contributes to ``H`` and to its gradients.

    Collision gradients go through the attitude: the acceleration enters
    ``R`` so ``d(n . R q)/dC`` adds ``beta''(t) (dR/da)^T`` terms, and
    moving the sample instant ``t = (l/L) T`` adds velocity and jerk terms
    to ``d/dT``.
    """
    L = int(cfg.samples)
    frac = np.arange(L) / L
    w = T / L
    B0, B1, B2, B3 = sample_basis(L, T)
    vel = B1 @ C
    acc = B2 @ C
    jerk = B3 @ C

    S, gC, gT = smoothness_piece(C, T)
    parts = np.zeros(len(COMPONENTS))
    parts[0] = S
    parts[1] = cfg.rho * T
    gT += cfg.rho

    if cfg.w_v > 0:
        K, dK = cubic_penalty(np.sum(vel * vel, axis=1) - cfg.v_max ** 2)
        parts[2] = cfg.w_v * w * np.sum(K)
        if np.any(dK > 0):
            gC += (cfg.w_v * w) * (B1.T @ (2.0 * dK[:, None] * vel))
            gT += cfg.w_v * (np.sum(K) / L + w * np.sum(dK * 2.0 * np.sum(vel * acc, axis=1) * frac))

    if cfg.w_a > 0:
        K, dK = cubic_penalty(np.sum(acc * acc, axis=1) - cfg.a_max ** 2)
        parts[3] = cfg.w_a * w * np.sum(K)
        if np.any(dK > 0):
            gC += (cfg.w_a * w) * (B2.T @ (2.0 * dK[:, None] * acc))
            gT += cfg.w_a * (np.sum(K) / L + w * np.sum(dK * 2.0 * np.sum(acc * jerk, axis=1) * frac))

    if cfg.w_c > 0 and len(poly):
        pos = B0 @ C
        try:
            R, dR = attitude_and_jacobian_batch(acc, 0.0)
        except FlatnessSingularity as exc:
            raise type(exc)(str(exc).split(" (")[0], piece=j, sample=exc.sample) from exc
        verts = np.matmul(hull_vertices, R.transpose(0, 2, 1)) + pos[:, None, :]  # (L, vertices, 3)
        g = verts @ poly.normals.T - (poly.offsets - cfg.margin)
        K, dK = cubic_penalty(g)
        parts[4] = cfg.w_c * w * np.sum(K)
        if np.any(dK > 0):
            A = dK @ poly.normals  # (L, vertices, 3): summed outward pushes per vertex
            f_pos = A.sum(axis=1)
            wmat = A.transpose(0, 2, 1) @ hull_vertices  # (L, 3, 3)
            f_acc = np.matmul(wmat.reshape(L, 1, 9), dR.reshape(L, 9, 3))[:, 0, :]
            gC += (cfg.w_c * w) * (B0.T @ f_pos + B2.T @ f_acc)
            drift = np.sum(f_pos * vel, axis=1) + np.sum(f_acc * jerk, axis=1)
            gT += cfg.w_c * (np.sum(K) / L + w * np.sum(frac * drift))

    return PieceResult(parts, gC, float(gT))


def reduce_pieces(results: Sequence[PieceResult]) -> CostReport:
    """Combine per-piece results in ascending piece order."""
    parts = np.zeros(len(COMPONENTS))
    for r in results:
        parts = parts + r.parts
    total = 0.0
    for v in parts:
        total += v
    comps = {name: float(v) for name, v in zip(COMPONENTS, parts)}
    return CostReport(float(total), comps, np.stack([r.grad_c for r in results]),
                      np.array([r.grad_t for r in results]))


def total_cost(traj: PiecewisePoly, corridor: Sequence[ConvexPolytope], hull: BodyHull,
               cfg: PenaltyConfig) -> CostReport:
    if len(corridor) != traj.num_pieces:
        raise PieceCountMismatch(f"{traj.num_pieces} pieces but {len(corridor)} polytopes")
    return reduce_pieces([piece_cost(j, traj.coeffs[j], traj.durations[j], corridor[j], hull.vertices, cfg)
                          for j in range(traj.num_pieces)])
