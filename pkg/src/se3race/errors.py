"""Exception hierarchy shared by all planner stages.

Each family carries the process exit code the command line maps it to.
"""

from __future__ import annotations


class PlannerError(Exception):
    exit_code = 1


class InputError(PlannerError):
    """Unreadable or malformed input file."""

    exit_code = 5


# geometry -----------------------------------------------------------------

class GeometryError(PlannerError):
    exit_code = 3


class EmptyIntersection(GeometryError):
    pass


class Unbounded(GeometryError):
    pass


class Degenerate(GeometryError):
    pass


class Infeasible(GeometryError):
    pass


class DegenerateInput(GeometryError):
    pass


# map / search -------------------------------------------------------------

class MapError(PlannerError):
    exit_code = 2


class EmptyBounds(MapError):
    exit_code = 5


class OutOfBounds(MapError):
    pass


class StartOccupied(MapError):
    pass


class GoalOccupied(MapError):
    pass


class NoPath(MapError):
    pass


# corridor -----------------------------------------------------------------

class CorridorError(PlannerError):
    exit_code = 3


class EndOfPath(CorridorError):
    pass


class SeedBlocked(CorridorError):
    pass


class CorridorStalled(CorridorError):
    pass


# flatness / trajectory / optimisation -------------------------------------

class OptimizerFailure(PlannerError):
    exit_code = 4


class FlatnessSingularity(OptimizerFailure):
    def __init__(self, msg: str, piece: int | None = None, sample: int | None = None):
        if piece is not None:
            msg = f"{msg} (piece {piece}, sample {sample})"
        super().__init__(msg)
        self.piece = piece
        self.sample = sample


class FreefallSingularity(FlatnessSingularity):
    pass


class GimbalLockSingularity(FlatnessSingularity):
    pass


class OutOfDomain(OptimizerFailure):
    pass


class SingularMapping(OptimizerFailure):
    pass


class StaleFactors(OptimizerFailure):
    pass


class PieceCountMismatch(OptimizerFailure):
    pass


class CorridorInfeasibleBoundary(OptimizerFailure):
    pass


class WorkerPanic(OptimizerFailure):
    def __init__(self, msg: str, piece: int | None = None):
        super().__init__(msg if piece is None else f"{msg} (piece {piece})")
        self.piece = piece


# racing -------------------------------------------------------------------

class DivergedTracking(PlannerError):
    exit_code = 6


class AllZeroWeightsWarning(RuntimeWarning):
    """Spatial weights collapsed to zero and were reset to uniform."""
