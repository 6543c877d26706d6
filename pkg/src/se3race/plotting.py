"""Figures written next to the command-line outputs (PNG, non-interactive backend)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .geom import ConvexPolytope, enumerate_vertices  # noqa: E402

FIG_SIZE = (6.4, 4.0)
DPI = 120


def _polygon_xy(poly: ConvexPolytope) -> np.ndarray | None:
    """Outline of the polytope's top-view shadow (convex hull of projected vertices)."""
    from scipy.spatial import ConvexHull

    try:
        v = enumerate_vertices(poly)[:, :2]
        h = ConvexHull(v)
    except Exception:
        return None
    pts = v[h.vertices]
    return np.vstack([pts, pts[:1]])


def corridor_figure(path: str | Path, corridor: Sequence[ConvexPolytope], positions: np.ndarray | None = None,
                    occupied: np.ndarray | None = None, gates=()) -> None:
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    if occupied is not None and len(occupied):
        ax.scatter(occupied[:, 0], occupied[:, 1], s=1, c="0.6", marker="s", linewidths=0, label="occupied")
    for k, poly in enumerate(corridor):
        out = _polygon_xy(poly)
        if out is not None:
            ax.fill(out[:, 0], out[:, 1], alpha=0.12, color=f"C{k % 10}")
            ax.plot(out[:, 0], out[:, 1], lw=0.6, color=f"C{k % 10}")
    for g in gates:
        a = g.center - g.half_extents[0] * g.side
        b = g.center + g.half_extents[0] * g.side
        ax.plot([a[0], b[0]], [a[1], b[1]], color="k", lw=2)
    if positions is not None:
        ax.plot(positions[:, 0], positions[:, 1], color="C3", lw=1.2, label="trajectory")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="best", fontsize=8, frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def attitude_figure(path: str | Path, rows: np.ndarray) -> None:
    """Roll, pitch and speed against time from sampled-CSV rows."""
    t = rows[:, 0]
    fig, (a1, a2) = plt.subplots(2, 1, sharex=True, figsize=FIG_SIZE)
    a1.plot(t, rows[:, 14], label="roll")
    a1.plot(t, rows[:, 15], label="pitch")
    a1.set_ylabel("angle [deg]")
    a1.legend(loc="best", fontsize=8, frameon=False)
    a2.plot(t, np.linalg.norm(rows[:, 4:7], axis=1), color="C2")
    a2.set_ylabel("speed [m/s]")
    a2.set_xlabel("t [s]")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def bench_figure(path: str | Path, records: Sequence[dict]) -> None:
    """``r_e`` against samples per piece, one line per (M, W)."""
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    keys = sorted({(r["M"], r["W"]) for r in records})
    for M, W in keys:
        sel = sorted((r for r in records if r["M"] == M and r["W"] == W), key=lambda r: r["L"])
        ax.plot([r["L"] for r in sel], [r["r_e"] for r in sel], marker="o", label=f"M={M}, W={W}")
    ax.axhline(0.0, color="0.5", lw=0.5)
    ax.set_xlabel("samples per piece L")
    ax.set_ylabel("r_e = t_serial / t_parallel - 1")
    ax.legend(loc="best", fontsize=8, frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
