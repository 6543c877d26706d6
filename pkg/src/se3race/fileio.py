"""Reading and writing the planner's file formats (see FORMATS.md)."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .errors import InputError
from .flatness import attitude_batch_tolerant, to_quaternion

SAMPLED_COLUMNS = ("t", "x", "y", "z", "vx", "vy", "vz", "ax", "ay", "az", "qw", "qx", "qy", "qz",
                   "roll_deg", "pitch_deg", "yaw_deg")


def read_json(path: str | Path) -> Any:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc


def write_json(path: str | Path, obj: Any) -> None:
    try:
        with open(path, "w") as fh:
            json.dump(obj, fh, indent=1, sort_keys=False)
            fh.write("\n")
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc.strerror}") from exc


def _read_ply(path: Path) -> NDArray[np.float64]:
    with open(path) as fh:
        if fh.readline().strip() != "ply":
            raise InputError(f"{path}: missing 'ply' magic")
        n_vertex = None
        props: list[str] = []
        in_vertex = False
        for line in fh:
            tok = line.split()
            if not tok:
                continue
            if tok[0] == "format" and tok[1] != "ascii":
                raise InputError(f"{path}: only ASCII PLY is supported")
            if tok[0] == "element":
                in_vertex = tok[1] == "vertex"
                if in_vertex:
                    n_vertex = int(tok[2])
            elif tok[0] == "property" and in_vertex:
                props.append(tok[-1])
            elif tok[0] == "end_header":
                break
        if n_vertex is None or not {"x", "y", "z"} <= set(props):
            raise InputError(f"{path}: no vertex element with x, y, z")
        cols = [props.index(c) for c in ("x", "y", "z")]
        rows = []
        for _ in range(n_vertex):
            tok = fh.readline().split()
            if len(tok) < len(props):
                raise InputError(f"{path}: truncated vertex list")
            rows.append([float(tok[c]) for c in cols])
    return np.array(rows, dtype=float).reshape(-1, 3)


def _read_csv_points(path: Path) -> NDArray[np.float64]:
    rows = []
    with open(path, newline="") as fh:
        for k, row in enumerate(csv.reader(fh)):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                rows.append([float(v) for v in row[:3]])
            except ValueError:
                if k == 0:  # header line
                    continue
                raise InputError(f"{path}:{k + 1}: expected x,y,z")
    return np.array(rows, dtype=float).reshape(-1, 3)


def read_point_cloud(path: str | Path) -> NDArray[np.float64]:
    """Points from an ASCII PLY file or a CSV with one ``x,y,z`` per line."""
    path = Path(path)
    try:
        pts = _read_ply(path) if path.suffix.lower() == ".ply" else _read_csv_points(path)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc
    if not np.all(np.isfinite(pts)):
        raise InputError(f"{path}: non-finite coordinates")
    return pts


def write_ply(path: str | Path, points: NDArray) -> None:
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    with open(path, "w") as fh:
        fh.write(f"ply\nformat ascii 1.0\nelement vertex {len(points)}\n"
                 "property float x\nproperty float y\nproperty float z\nend_header\n")
        for p in points:
            fh.write(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f}\n")


def sample_trajectory(traj, rate: float = 100.0) -> NDArray[np.float64]:
    """Rows of :data:`SAMPLED_COLUMNS` at ``rate`` Hz, end point included."""
    from .flatness import roll_pitch_yaw

    if not rate > 0:
        raise ValueError("sample rate must be positive")
    n = int(np.floor(traj.total_time * rate + 1e-9))
    t = np.arange(n + 1) / rate
    if t[-1] < traj.total_time:
        t = np.append(t, traj.total_time)
    p = traj.eval_many(t)
    v = traj.eval_many(t, 1)
    a = traj.eval_many(t, 2)
    R, ok = attitude_batch_tolerant(a, 0.0)
    q = np.array([to_quaternion(r) for r in R])
    rpy = np.degrees(np.array([roll_pitch_yaw(r) for r in R]))
    q[~ok] = np.nan  # attitude undefined at free fall
    rpy[~ok] = np.nan
    return np.column_stack([t, p, v, a, q, rpy])


def write_sampled_csv(path: str | Path, rows: NDArray) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SAMPLED_COLUMNS)
            for r in rows:
                w.writerow([f"{v:.9g}" for v in r])
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc.strerror}") from exc
