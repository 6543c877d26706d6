"""Piecewise quintic trajectories and the banded map from waypoints to coefficients.

Piece ``j`` is ``p_j(t) = C_j^T beta(t)`` on its local clock ``t in [0, T_j]``
with ``beta(t) = [1, t, ..., t^5]``.  Interior joints fix position and keep
derivatives 0..4 continuous; both ends fix position, velocity and
acceleration.  The resulting ``6M x 6M`` system is banded and is factored
once per set of durations; its transpose solve gives the adjoint used to
push cost gradients back onto waypoints and durations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import factorial

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import lapack

from .errors import OutOfDomain, SingularMapping, StaleFactors

S = 3
NCOEF = 2 * S
# lower / upper bandwidth of the mapping matrix under the row order below
KL = 4
KU = 2

_FACT = np.array([[factorial(n) / factorial(n - k) if n >= k else 0.0 for n in range(NCOEF)]
                  for k in range(NCOEF + 1)])
_POW = np.array([[n - k if n >= k else 0 for n in range(NCOEF)] for k in range(NCOEF + 1)])


def basis(t: ArrayLike, order: int = 0) -> NDArray[np.float64]:
    """``d^order beta / dt^order`` at ``t``; shape ``(..., 6)``."""
    t = np.asarray(t, dtype=float)
    if order > NCOEF:
        return np.zeros(t.shape + (NCOEF,))
    return _FACT[order] * np.power(t[..., None], _POW[order]) * (_FACT[order] != 0)


@lru_cache(maxsize=64)
def _frac_powers(L: int) -> NDArray[np.float64]:
    frac = np.arange(L) / L
    return frac[:, None] ** np.arange(NCOEF)


def sample_basis(L: int, T: float, orders: int = 4) -> NDArray[np.float64]:
    """``basis(t, k)`` at ``t = (l / L) T`` for ``l < L`` and ``k < orders``; shape ``(orders, L, 6)``."""
    F = _frac_powers(L)
    Tp = float(T) ** np.arange(NCOEF)
    out = np.zeros((orders, L, NCOEF))
    for k in range(orders):
        out[k, :, k:] = F[:, :NCOEF - k] * (_FACT[k, k:] * Tp[:NCOEF - k])
    return out


@dataclass(frozen=True)
class BoundaryState:
    position: NDArray[np.float64]
    velocity: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))
    acceleration: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        for name in ("position", "velocity", "acceleration"):
            v = np.asarray(getattr(self, name), dtype=float).reshape(3)
            if not np.all(np.isfinite(v)):
                raise ValueError(f"non-finite boundary {name}")
            object.__setattr__(self, name, v)

    def stacked(self) -> NDArray[np.float64]:
        return np.vstack([self.position, self.velocity, self.acceleration])

    @classmethod
    def rest(cls, position: ArrayLike) -> "BoundaryState":
        return cls(np.asarray(position, dtype=float))

    def to_json(self) -> dict:
        return {"position": self.position.tolist(), "velocity": self.velocity.tolist(),
                "acceleration": self.acceleration.tolist()}

    @classmethod
    def from_json(cls, obj) -> "BoundaryState":
        if isinstance(obj, (list, tuple)):
            return cls.rest(obj)
        return cls(obj["position"], obj.get("velocity", [0, 0, 0]), obj.get("acceleration", [0, 0, 0]))


@dataclass(frozen=True, eq=False)
class MappingMatrix:
    """LU factors of the banded mapping matrix for one duration vector."""

    durations: NDArray[np.float64]
    lu: NDArray[np.float64]
    piv: NDArray[np.int32]

    @property
    def size(self) -> int:
        return self.lu.shape[1]

    def solve(self, rhs: NDArray, transpose: bool = False) -> NDArray[np.float64]:
        x, info = lapack.dgbtrs(self.lu, KL, KU, rhs, self.piv, trans=1 if transpose else 0)
        if info != 0:
            raise SingularMapping(f"banded back-substitution failed (info={info})")
        return x


def _joint_rows(M: int):
    """For each piece, the (row, derivative order) pairs evaluated at the piece's end time."""
    rows: list[list[tuple[int, int]]] = []
    for j in range(M - 1):
        base = 3 + 6 * j
        rows.append([(base, 0)] + [(base + 1 + k, k) for k in range(5)])
    last = 6 * M - 3
    rows.append([(last + k, k) for k in range(3)])
    return rows


def _entries(T: NDArray[np.float64]):
    """Non-zero (row, col, value) entries of the mapping matrix."""
    M = len(T)
    zero = [basis(0.0, k).tolist() for k in range(NCOEF)]
    end = np.stack([basis(T, k) for k in range(NCOEF)], axis=1).tolist()  # (M, order, 6)
    out = []
    for k in range(3):
        for n, v in enumerate(zero[k]):
            if v:
                out.append((k, n, v))
    for j, rows in enumerate(_joint_rows(M)):
        for r, k in rows:
            for n, v in enumerate(end[j][k]):
                if v:
                    out.append((r, 6 * j + n, v))
            if j < M - 1 and r != 3 + 6 * j:
                for n, v in enumerate(zero[k]):
                    if v:
                        out.append((r, 6 * (j + 1) + n, -v))
    return out


def mapping_matrix_dense(T: ArrayLike) -> NDArray[np.float64]:
    T = np.asarray(T, dtype=float)
    n = 6 * len(T)
    A = np.zeros((n, n))
    for r, c, v in _entries(T):
        A[r, c] = v
    return A


def rhs_vector(q: NDArray, start: BoundaryState, final: BoundaryState) -> NDArray[np.float64]:
    M = q.shape[0] + 1
    b = np.zeros((6 * M, 3))
    b[0:3] = start.stacked()
    for j in range(M - 1):
        b[3 + 6 * j] = q[j]
    b[6 * M - 3:] = final.stacked()
    return b


def factorize(T: ArrayLike) -> MappingMatrix:
    T = np.array(T, dtype=float).reshape(-1)
    if T.size == 0 or not np.all(T > 0) or not np.all(np.isfinite(T)):
        raise SingularMapping(f"durations must be positive and finite, got {T}")
    n = 6 * len(T)
    ab = np.zeros((2 * KL + KU + 1, n))
    for r, c, v in _entries(T):
        ab[KL + KU + r - c, c] = v
    lu, piv, info = lapack.dgbtrf(ab, KL, KU)
    if info != 0:
        raise SingularMapping(f"banded LU broke down at pivot {info}")
    T.setflags(write=False)
    return MappingMatrix(T, lu, piv)


@dataclass(frozen=True, eq=False)
class PiecewisePoly:
    coeffs: NDArray[np.float64]
    durations: NDArray[np.float64]
    factors: MappingMatrix | None = None

    def __post_init__(self) -> None:
        C = np.array(self.coeffs, dtype=float, order="C").reshape(-1, NCOEF, 3)
        T = np.array(self.durations, dtype=float).reshape(-1)
        if C.shape[0] != T.shape[0]:
            raise ValueError("one duration per piece required")
        if not np.all(T > 0):
            raise ValueError("durations must be positive")
        C.setflags(write=False)
        T.setflags(write=False)
        object.__setattr__(self, "coeffs", C)
        object.__setattr__(self, "durations", T)

    s = S

    @property
    def num_pieces(self) -> int:
        return self.durations.shape[0]

    @property
    def total_time(self) -> float:
        return float(np.sum(self.durations))

    @property
    def breaks(self) -> NDArray[np.float64]:
        return np.concatenate([[0.0], np.cumsum(self.durations)])

    def locate(self, t: ArrayLike) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
        """Piece index and local time for global times ``t`` (last piece closed on the right)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        total = self.total_time
        if np.any(t < 0) or np.any(t > total * (1 + 1e-12) + 1e-12):
            raise OutOfDomain(f"time outside [0, {total}]")
        br = self.breaks
        j = np.clip(np.searchsorted(br, t, side="right") - 1, 0, self.num_pieces - 1)
        return j, np.minimum(t - br[j], self.durations[j])

    def eval_many(self, t: ArrayLike, order: int = 0) -> NDArray[np.float64]:
        j, tau = self.locate(t)
        return np.einsum("mn,mnd->md", basis(tau, order), self.coeffs[j])

    def eval(self, t: float, order: int = 0) -> NDArray[np.float64]:
        if not 0 <= order <= NCOEF - 1:
            raise ValueError("derivative order must be in 0..5")
        return self.eval_many([t], order)[0]

    def piece_eval(self, j: int, tau: float, order: int = 0) -> NDArray[np.float64]:
        return basis(tau, order) @ self.coeffs[j]

    def to_json(self) -> dict:
        return {"s": S, "durations": self.durations.tolist(), "coeffs": self.coeffs.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "PiecewisePoly":
        if obj.get("s", S) != S:
            raise ValueError("only s = 3 trajectories are supported")
        return cls(np.array(obj["coeffs"], dtype=float), np.array(obj["durations"], dtype=float))


def eval(traj: PiecewisePoly, t: float, order: int = 0) -> NDArray[np.float64]:  # noqa: A001
    return traj.eval(t, order)


def solve_coefficients(q: ArrayLike, T: ArrayLike, start: BoundaryState, final: BoundaryState) -> PiecewisePoly:
    T = np.asarray(T, dtype=float).reshape(-1)
    q = np.asarray(q, dtype=float).reshape(-1, 3)
    if q.shape[0] != T.shape[0] - 1:
        raise ValueError(f"{T.shape[0]} pieces need {T.shape[0] - 1} waypoints, got {q.shape[0]}")
    fac = factorize(T)
    C = fac.solve(rhs_vector(q, start, final))
    return PiecewisePoly(C.reshape(-1, NCOEF, 3), T, fac)


def propagate_gradients(traj: PiecewisePoly, dH_dC: ArrayLike, dH_dT: ArrayLike):
    """Adjoint pass from ``dH/dC`` and direct ``dH/dT`` to waypoint and duration gradients.

    With ``M C = b``: ``G = M^-T dH/dC``; ``dH/dq_j`` is the row of ``G``
    paired with ``q_j`` in ``b`` and ``dH/dT_j = direct - <G, (dM/dT_j) C>``.
    Only rows evaluated at the end of piece ``j`` depend on ``T_j``, and
    there ``d/dT beta^(k)(T) . c = p^(k+1)(T)``.
    """
    fac = traj.factors
    if fac is None or not np.array_equal(fac.durations, traj.durations):
        raise StaleFactors("trajectory has no factors for its current durations")
    M = traj.num_pieces
    gC = np.asarray(dH_dC, dtype=float).reshape(6 * M, 3)
    gT = np.array(dH_dT, dtype=float).reshape(M)
    G = fac.solve(gC, transpose=True)
    grad_q = G[[3 + 6 * j for j in range(M - 1)]].copy()
    # D[j, k] = p_j^(k)(T_j) for k = 1..6
    D = np.einsum("jkn,jnd->jkd", np.stack([basis(traj.durations, k) for k in range(1, NCOEF + 1)], axis=1),
                  traj.coeffs)
    for j, rows in enumerate(_joint_rows(M)):
        acc = 0.0
        for r, k in rows:
            acc += G[r] @ D[j, k]
        gT[j] -= acc
    return grad_q.reshape(-1, 3), gT
