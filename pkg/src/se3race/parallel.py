"""Persistent worker pool for cost and gradient evaluation.

The pool is started once with the static problem data (corridor, hull,
penalty weights).  Each evaluation broadcasts the current coefficients and
durations, every worker computes a contiguous block of pieces, and the
coordinator sums the per-piece results in ascending piece order, so the
result is bit-identical to :func:`se3race.cost.total_cost` for any worker
count.
"""

from __future__ import annotations

import multiprocessing as mp
from math import ceil
from typing import Sequence

import numpy as np

from .cost import CostReport, PenaltyConfig, PieceResult, piece_cost, reduce_pieces
from .errors import FlatnessSingularity, PieceCountMismatch, WorkerPanic
from . import errors as _errors
from .geom import BodyHull, ConvexPolytope

_STATE: dict = {}


def _init_worker(normals, offsets_points, hull_vertices, cfg) -> None:
    _STATE["polys"] = [ConvexPolytope(n, p) for n, p in zip(normals, offsets_points)]
    _STATE["hull"] = hull_vertices
    _STATE["cfg"] = cfg


def _eval_block(task):
    j0, C, T = task
    polys, hull, cfg = _STATE["polys"], _STATE["hull"], _STATE["cfg"]
    out = []
    for m in range(len(T)):
        j = j0 + m
        try:
            out.append(piece_cost(j, C[m], T[m], polys[j], hull, cfg))
        except Exception as exc:  # reported back to the coordinator with the piece index
            return ("error", j, type(exc).__name__, str(exc))
    return ("ok", out)


def blocks(M: int, workers: int) -> list[tuple[int, int]]:
    """Static contiguous piece ranges, ``ceil(M / workers)`` pieces each."""
    size = max(1, ceil(M / max(1, workers)))
    return [(a, min(a + size, M)) for a in range(0, M, size)]


class EvalEngine:
    """Evaluate the objective of a fixed corridor/hull/config for many trajectories."""

    def __init__(self, corridor: Sequence[ConvexPolytope], hull: BodyHull, cfg: PenaltyConfig, workers: int = 1):
        if workers < 1:
            raise ValueError("worker count must be >= 1")
        self.corridor = list(corridor)
        self.hull = hull
        self.cfg = cfg
        self.workers = int(workers)
        self._pool = None

    def start(self) -> "EvalEngine":
        if self.workers > 1 and self._pool is None:
            ctx = mp.get_context("fork")
            self._pool = ctx.Pool(
                self.workers,
                initializer=_init_worker,
                initargs=([p.normals for p in self.corridor], [p.points for p in self.corridor],
                          self.hull.vertices, self.cfg),
            )
        return self

    def close(self) -> None:
        if self._pool is not None:
            self._pool.close()
            self._pool.join()
            self._pool = None

    def __enter__(self) -> "EvalEngine":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.close()

    def evaluate(self, coeffs: np.ndarray, durations: np.ndarray) -> CostReport:
        M = len(durations)
        if M != len(self.corridor):
            raise PieceCountMismatch(f"{M} pieces but {len(self.corridor)} polytopes")
        if self._pool is None:
            results: list[PieceResult] = [
                piece_cost(j, coeffs[j], durations[j], self.corridor[j], self.hull.vertices, self.cfg)
                for j in range(M)
            ]
            return reduce_pieces(results)
        tasks = [(a, np.array(coeffs[a:b]), np.array(durations[a:b])) for a, b in blocks(M, self.workers)]
        results = []
        for status in self._pool.map(_eval_block, tasks, chunksize=1):
            if status[0] == "error":
                _, j, name, msg = status
                cls = getattr(_errors, name, None)
                if isinstance(cls, type) and issubclass(cls, FlatnessSingularity):
                    raise cls(msg, piece=j)
                raise WorkerPanic(f"{name}: {msg}", piece=j)
            results.extend(status[1])
        return reduce_pieces(results)


def parallel_eval(engine: EvalEngine, coeffs: np.ndarray, durations: np.ndarray) -> CostReport:
    return engine.evaluate(coeffs, durations)
