"""Unconstrained reformulation and quasi-Newton driver.

Waypoint ``q_j`` must stay inside ``P_j & P_{j+1}`` and every duration must
stay positive.  Both constraints are removed by reparameterisation:

* ``q_j = sum_i (w_i^2 / sum_k w_k^2) v_i`` over the vertices ``v_i`` of the
  overlap polytope, any real ``w`` giving a point of the polytope;
* ``T_j = exp(tau_j)``.

The resulting smooth problem in ``(w, tau)`` is minimised by L-BFGS with a
weak-Wolfe line search.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from .cost import CostReport, PenaltyConfig
from .errors import AllZeroWeightsWarning, CorridorInfeasibleBoundary, FlatnessSingularity, WorkerPanic
from .geom import BodyHull, ConvexPolytope, contains, enumerate_vertices, intersect
from .parallel import EvalEngine
from .traj import BoundaryState, PiecewisePoly, propagate_gradients, solve_coefficients

log = logging.getLogger(__name__)

TAU_CLAMP = 20.0


@dataclass(frozen=True)
class OptimizerConfig:
    max_iterations: int = 3000
    grad_tol: float = 1e-5
    rel_tol: float = 1e-7
    memory: int = 8
    c1: float = 1e-4
    c2: float = 0.9
    max_linesearch: int = 60
    workers: int = 1
    seed: int = 0
    # length (in variable space) of a steepest-descent step taken without curvature memory
    first_step: float = 1.0

    def __post_init__(self) -> None:
        if self.max_iterations < 1 or self.grad_tol <= 0 or self.rel_tol < 0:
            raise ValueError("iteration limits and tolerances must be positive")
        if self.memory < 4:
            raise ValueError("L-BFGS memory must be at least 4")
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("line search constants need 0 < c1 < c2 < 1")
        if self.workers < 1:
            raise ValueError("worker count must be >= 1")
        if not self.first_step > 0:
            raise ValueError("first_step must be positive")

    def to_json(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# constraint elimination

def forward_spatial(w: NDArray, verts: NDArray) -> NDArray[np.float64]:
    w = np.asarray(w, dtype=float)
    sq = w * w
    s = float(np.sum(sq))
    if s == 0.0:
        warnings.warn("all spatial weights are zero; using uniform weights", AllZeroWeightsWarning)
        sq = np.ones_like(w)
        s = float(len(w))
    return (sq / s) @ verts


def backward_spatial(w: NDArray, verts: NDArray, grad_q: NDArray) -> NDArray[np.float64]:
    """Gradient w.r.t. ``w`` of a function with gradient ``grad_q`` at ``forward_spatial(w, verts)``."""
    w = np.asarray(w, dtype=float)
    s = float(np.sum(w * w))
    if s == 0.0:
        return np.zeros_like(w)
    q = ((w * w) / s) @ verts
    return (2.0 * w / s) * ((verts - q) @ np.asarray(grad_q, dtype=float))


def forward_temporal(tau: NDArray) -> NDArray[np.float64]:
    tau = np.asarray(tau, dtype=float)
    if np.any(np.abs(tau) > TAU_CLAMP):
        warnings.warn(f"log-durations clamped to +-{TAU_CLAMP}", RuntimeWarning)
        tau = np.clip(tau, -TAU_CLAMP, TAU_CLAMP)
    return np.exp(tau)


def backward_temporal(T: NDArray, grad_T: NDArray) -> NDArray[np.float64]:
    return np.asarray(T, dtype=float) * np.asarray(grad_T, dtype=float)


# --------------------------------------------------------------------------
# problem

@dataclass
class Problem:
    """Objective in the unconstrained variables ``x = [w_1, ..., w_{M-1}, tau]``."""

    corridor: Sequence[ConvexPolytope]
    hull: BodyHull
    start: BoundaryState
    final: BoundaryState
    penalty: PenaltyConfig
    overlap_vertices: list[NDArray] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.overlap_vertices:
            self.overlap_vertices = [
                enumerate_vertices(intersect(self.corridor[j], self.corridor[j + 1]))
                for j in range(len(self.corridor) - 1)
            ]
        self.sizes = [len(v) for v in self.overlap_vertices]
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)]).astype(int)
        self.num_pieces = len(self.corridor)

    @property
    def dim(self) -> int:
        return int(self.offsets[-1]) + self.num_pieces

    def split(self, x: NDArray):
        ws = [x[self.offsets[j]:self.offsets[j + 1]] for j in range(self.num_pieces - 1)]
        return ws, x[self.offsets[-1]:]

    def decode(self, x: NDArray) -> tuple[NDArray, NDArray]:
        ws, tau = self.split(x)
        q = np.array([forward_spatial(w, v) for w, v in zip(ws, self.overlap_vertices)]).reshape(-1, 3)
        return q, forward_temporal(tau)

    def trajectory(self, x: NDArray) -> PiecewisePoly:
        q, T = self.decode(x)
        return solve_coefficients(q, T, self.start, self.final)

    def evaluate(self, x: NDArray, engine: EvalEngine) -> tuple[float, NDArray, CostReport, PiecewisePoly]:
        ws, tau = self.split(x)
        traj = self.trajectory(x)
        report = engine.evaluate(traj.coeffs, traj.durations)
        gq, gT = propagate_gradients(traj, report.grad_c, report.grad_t)
        grad = np.empty_like(x)
        for j, (w, v) in enumerate(zip(ws, self.overlap_vertices)):
            grad[self.offsets[j]:self.offsets[j + 1]] = backward_spatial(w, v, gq[j])
        grad[self.offsets[-1]:] = backward_temporal(traj.durations, gT)
        return report.total, grad, report, traj

    def initial_point(self, seeds: Sequence[tuple[NDArray, NDArray]] | None, seed: int = 0) -> NDArray:
        rng = np.random.default_rng(seed)
        parts = [1.0 + 1e-3 * rng.uniform(-1.0, 1.0, n) for n in self.sizes]
        if seeds is not None and len(seeds) == self.num_pieces:
            lengths = np.array([np.linalg.norm(np.asarray(b) - np.asarray(a)) for a, b in seeds])
        else:
            pts = np.vstack([self.start.position] + [np.mean(v, axis=0) for v in self.overlap_vertices]
                            + [self.final.position])
            lengths = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        T0 = np.maximum(lengths / (0.5 * self.penalty.v_max), 0.1)
        parts.append(np.log(T0))
        return np.concatenate(parts)


# --------------------------------------------------------------------------
# L-BFGS

@dataclass
class OptimizeResult:
    trajectory: PiecewisePoly
    report: CostReport
    x: NDArray[np.float64]
    iterations: int
    evaluations: int
    status: str
    trace: list[dict]


def _two_loop(g: NDArray, S: list[NDArray], Y: list[NDArray]) -> NDArray:
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(S), reversed(Y)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        alphas.append((rho, a))
        q -= a * y
    if S:
        q *= (S[-1] @ Y[-1]) / (Y[-1] @ Y[-1])
    for (s, y), (rho, a) in zip(zip(S, Y), reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def _weak_wolfe(fun, x: NDArray, f: float, d: NDArray, gd: float, alpha: float, cfg: OptimizerConfig):
    """Bisection/expansion search for a step meeting the weak Wolfe conditions.

    If the bracket collapses first (the objective has a cliff, e.g. close
    to a thrust singularity), the best trial that passed the sufficient
    decrease test is returned instead.
    """
    lo, hi = 0.0, np.inf
    nfev = 0
    armijo = None
    for _ in range(cfg.max_linesearch):
        xt = x + alpha * d
        nfev += 1
        try:
            ft, gt, pt = fun(xt)
        except (FlatnessSingularity, WorkerPanic):
            ft = np.inf
        if not np.isfinite(ft) or ft > f + cfg.c1 * alpha * gd:
            hi = alpha
        elif float(gt @ d) < cfg.c2 * gd:
            lo = alpha
            if armijo is None or ft < armijo[1]:
                armijo = (xt, ft, gt, pt)
        else:
            return (xt, ft, gt, pt), nfev
        alpha = 0.5 * (lo + hi) if np.isfinite(hi) else 2.0 * alpha
        if np.isfinite(hi) and hi - lo <= 1e-16 * max(1.0, lo):
            break
    return armijo, nfev


def lbfgs(fun: Callable[[NDArray], tuple[float, NDArray, object]], x0: NDArray, cfg: OptimizerConfig,
          callback: Callable[[dict], None] | None = None):
    """Minimise ``fun`` from ``x0``; returns the best iterate seen.

    ``fun`` returns ``(value, gradient, payload)``.  A trial point at which
    ``fun`` raises a flatness singularity counts as a failed sufficient
    decrease test; a singular starting point is re-raised.
    """
    t0 = time.perf_counter()
    x = np.array(x0, dtype=float)
    f, g, payload = fun(x)
    nfev = 1
    best = (f, x.copy(), payload)
    S: list[NDArray] = []
    Y: list[NDArray] = []
    history = [f]
    trace: list[dict] = []
    n = x.size
    status = "max_iterations"
    it = 0

    def record(step: float) -> None:
        entry = {"iteration": it, "H": f, "grad_norm": float(np.linalg.norm(g)), "step": step,
                 "wall_time": time.perf_counter() - t0}
        if hasattr(payload, "components"):
            entry["components"] = dict(payload.components)
        trace.append(entry)
        if callback is not None:
            callback(entry)

    record(0.0)
    for it in range(1, cfg.max_iterations + 1):
        if np.linalg.norm(g) <= cfg.grad_tol * n:
            status = "gradient_tolerance"
            break
        accepted = None
        for restart in (False, True):
            if restart:
                if not S:
                    break
                # quasi-Newton model went bad: drop it and retry along -g
                S.clear()
                Y.clear()
            d = _two_loop(g, S, Y)
            gd = float(g @ d)
            if not gd < 0:
                S.clear()
                Y.clear()
                d = -g
                gd = float(g @ d)
            alpha = 1.0 if S else min(1.0, cfg.first_step / max(np.linalg.norm(g), 1e-12))
            accepted, used = _weak_wolfe(fun, x, f, d, gd, alpha, cfg)
            nfev += used
            if accepted is not None:
                break
        if accepted is None:
            status = "line_search_failed"
            break
        xt, ft, gt, pt = accepted
        s, y = xt - x, gt - g
        if s @ y > 1e-14 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Y.append(y)
            if len(S) > cfg.memory:
                S.pop(0)
                Y.pop(0)
        x, f, g, payload = xt, ft, gt, pt
        if f < best[0]:
            best = (f, x.copy(), payload)
        history.append(f)
        record(alpha)
        if len(history) > 5:
            drop = history[-6] - history[-1]
            if drop <= cfg.rel_tol * max(abs(history[-1]), 1.0):
                status = "relative_tolerance"
                break
    return best, it, nfev, status, trace


def check_boundary(corridor: Sequence[ConvexPolytope], start: BoundaryState, final: BoundaryState) -> None:
    if not contains(corridor[0], start.position, 1e-9):
        raise CorridorInfeasibleBoundary("start position outside the first polytope")
    if not contains(corridor[-1], final.position, 1e-9):
        raise CorridorInfeasibleBoundary("final position outside the last polytope")


def optimize(corridor, hull: BodyHull, start: BoundaryState, final: BoundaryState,
             cfg: OptimizerConfig = OptimizerConfig(), pcfg: PenaltyConfig = PenaltyConfig(),
             callback: Callable[[dict], None] | None = None) -> OptimizeResult:
    """Optimise a whole-body trajectory through ``corridor``.

    ``corridor`` is a :class:`~se3race.corridor.Corridor` or a plain
    sequence of polytopes (then durations start from straight-line guesses).
    """
    polys = list(getattr(corridor, "polytopes", corridor))
    seeds = getattr(corridor, "seed_segments", None)
    if not polys:
        raise ValueError("corridor is empty")
    check_boundary(polys, start, final)
    problem = Problem(polys, hull, start, final, pcfg)
    x0 = problem.initial_point(seeds, cfg.seed)

    with EvalEngine(polys, hull, pcfg, cfg.workers) as engine:
        def fun(x):
            f, g, report, traj = problem.evaluate(x, engine)
            return f, g, Evaluation(report, traj)

        try:
            best, iters, nfev, status, trace = lbfgs(fun, x0, cfg, callback)
        except FlatnessSingularity as exc:
            exc.iterate = x0
            raise
    f, x, ev = best
    log.info("optimizer stopped after %d iterations (%s), H=%.6g", iters, status, f)
    return OptimizeResult(ev.trajectory, ev.report, x, iters, nfev, status, trace)


@dataclass
class Evaluation:
    report: CostReport
    trajectory: PiecewisePoly

    @property
    def components(self) -> dict[str, float]:
        return self.report.components
