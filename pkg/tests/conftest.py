from __future__ import annotations

import numpy as np
import pytest

from se3race.cost import PenaltyConfig
from se3race.geom import BodyHull, ConvexPolytope
from se3race.optimizer import Problem
from se3race.traj import BoundaryState, solve_coefficients

HULL_46 = BodyHull.box(0.46, 0.46, 0.10)


def central_diff(fun, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    g = np.zeros(x.shape)
    flat = g.reshape(-1)  # C-ordered, so this is a view
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h
        flat[i] = (fun(x + e.reshape(x.shape)) - fun(x - e.reshape(x.shape))) / (2 * h)
    return g


def rel_err(a, b, floor: float = 1e-8) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), floor))


def random_trajectory(rng: np.random.Generator, M: int, spread: float = 0.4, speed: float = 1.0):
    q = np.column_stack([np.arange(1, M), spread * rng.standard_normal(M - 1), 1.0 + spread * rng.standard_normal(M - 1)])
    T = (0.4 + 0.6 * rng.random(M)) / speed
    start = BoundaryState(np.array([0.0, 0.0, 1.0]), 0.3 * rng.standard_normal(3), 0.3 * rng.standard_normal(3))
    final = BoundaryState(np.array([float(M), 0.0, 1.0]), 0.3 * rng.standard_normal(3), 0.3 * rng.standard_normal(3))
    return solve_coefficients(q, T, start, final)


def pressing_corridor(rng: np.random.Generator, M: int, half_width: float = 0.3) -> list[ConvexPolytope]:
    """Boxes along x that the random trajectory with the 46 cm hull pokes out of."""
    out = []
    for j in range(M):
        lo = np.array([j - 0.6, -half_width - 0.1 * rng.random(), 0.7 - 0.1 * rng.random()])
        hi = np.array([j + 1.6, half_width + 0.1 * rng.random(), 1.3 + 0.1 * rng.random()])
        out.append(ConvexPolytope.box(lo, hi))
    return out


def active_fixture(seed: int, M: int | None = None, L: int | None = None):
    """Random trajectory, corridor and config with velocity, acceleration and collision terms all active."""
    rng = np.random.default_rng(seed)
    M = int(rng.integers(2, 9)) if M is None else M
    L = int(rng.integers(4, 33)) if L is None else L
    traj = random_trajectory(rng, M, speed=2.5)
    corridor = pressing_corridor(rng, M)
    v = np.linalg.norm(traj.eval_many(np.linspace(0, traj.total_time, 200), 1), axis=1)
    a = np.linalg.norm(traj.eval_many(np.linspace(0, traj.total_time, 200), 2), axis=1)
    cfg = PenaltyConfig(rho=7.0, w_v=3.0, w_a=0.5, w_c=50.0, v_max=0.6 * v.max(), a_max=0.6 * a.max(), samples=L)
    return traj, corridor, cfg


def box_problem(M: int, seed: int = 0, cfg: PenaltyConfig | None = None) -> Problem:
    rng = np.random.default_rng(seed)
    corridor = pressing_corridor(rng, M)
    start = BoundaryState.rest([0.0, 0.0, 1.0])
    final = BoundaryState.rest([float(M), 0.0, 1.0])
    return Problem(corridor, HULL_46, start, final, cfg or PenaltyConfig(samples=16))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
