"""Whole-body SE(3) trajectory planning through convex corridors, with a racing harness."""

from __future__ import annotations

from .corridor import Corridor, generate_corridor
from .cost import CostReport, PenaltyConfig, total_cost
from .envmap import GridPath, PointCloud, VoxelGrid, astar, build_grid, esdf, line_free
from .geom import BodyHull, ConvexPolytope, HalfSpace, intersect, kdop_hull
from .optimizer import OptimizerConfig, OptimizeResult, optimize
from .traj import BoundaryState, PiecewisePoly, solve_coefficients

__version__ = "0.1.0"

__all__ = [
    "BodyHull", "BoundaryState", "ConvexPolytope", "Corridor", "CostReport", "GridPath", "HalfSpace",
    "OptimizeResult", "OptimizerConfig", "PenaltyConfig", "PiecewisePoly", "PointCloud", "VoxelGrid",
    "astar", "build_grid", "esdf", "generate_corridor", "intersect", "kdop_hull", "line_free",
    "optimize", "solve_coefficients", "total_cost",
]
