"""Attitude of a multirotor from its flat outputs (acceleration and yaw).

The thrust direction is ``a + g e3``; the body frame is completed with the
heading vector ``(cos yaw, sin yaw, 0)`` through two cross products.
Batched versions operate on ``(L, 3)`` accelerations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial.transform import Rotation

from .errors import FreefallSingularity, GimbalLockSingularity

GRAVITY = 9.81
E3 = np.array([0.0, 0.0, 1.0])
EPS_THRUST = 1e-3 * GRAVITY
EPS_GIMBAL = 1e-6


@dataclass(frozen=True)
class FlatState:
    position: NDArray[np.float64]
    velocity: NDArray[np.float64]
    acceleration: NDArray[np.float64]
    jerk: NDArray[np.float64]
    yaw: float = 0.0
    yaw_rate: float = 0.0


def _frame(acc: NDArray, yaw: NDArray):
    f = acc + GRAVITY * E3
    fn = np.linalg.norm(f, axis=-1)
    bad = np.flatnonzero(fn < EPS_THRUST)
    if bad.size:
        raise FreefallSingularity(f"thrust magnitude {fn[bad[0]]:.3g} below threshold", sample=int(bad[0]))
    zb = f / fn[:, None]
    rix = np.stack([np.cos(yaw), np.sin(yaw), np.zeros_like(yaw)], axis=-1)
    cr = np.cross(zb, rix)
    cn = np.linalg.norm(cr, axis=-1)
    bad = np.flatnonzero(cn < EPS_GIMBAL)
    if bad.size:
        raise GimbalLockSingularity("thrust axis parallel to heading", sample=int(bad[0]))
    yb = cr / cn[:, None]
    xb = np.cross(yb, zb)
    return fn, zb, rix, cn, yb, xb


def attitude_batch(acc: ArrayLike, yaw: ArrayLike | float = 0.0) -> NDArray[np.float64]:
    """Rotation matrices ``(L, 3, 3)`` whose columns are the body x, y, z axes."""
    acc = np.atleast_2d(np.asarray(acc, dtype=float))
    yaw = np.broadcast_to(np.asarray(yaw, dtype=float), acc.shape[:1])
    _, zb, _, _, yb, xb = _frame(acc, yaw)
    return np.stack([xb, yb, zb], axis=-1)


def attitude_batch_tolerant(acc: ArrayLike, yaw: ArrayLike | float = 0.0) -> tuple[NDArray, NDArray[np.bool_]]:
    """Like :func:`attitude_batch`, but singular samples get the identity and a False flag."""
    acc = np.atleast_2d(np.asarray(acc, dtype=float))
    yaw = np.broadcast_to(np.asarray(yaw, dtype=float), acc.shape[:1])
    f = acc + GRAVITY * E3
    fn = np.linalg.norm(f, axis=-1)
    ok = fn >= EPS_THRUST
    zb = f / np.where(ok, fn, 1.0)[:, None]
    rix = np.stack([np.cos(yaw), np.sin(yaw), np.zeros_like(yaw)], axis=-1)
    cr = np.cross(zb, rix)
    cn = np.linalg.norm(cr, axis=-1)
    ok &= cn >= EPS_GIMBAL
    R = np.broadcast_to(np.eye(3), (len(acc), 3, 3)).copy()
    if np.any(ok):
        R[ok] = attitude_batch(acc[ok], yaw[ok])
    return R, ok


def _cross_cols(a: NDArray, M: NDArray) -> NDArray:
    """``skew(a) @ M`` for ``a`` (L, 3) and ``M`` (L, 3, K)."""
    a0, a1, a2 = a[:, 0, None], a[:, 1, None], a[:, 2, None]
    m0, m1, m2 = M[:, 0], M[:, 1], M[:, 2]
    return np.stack([a1 * m2 - a2 * m1, a2 * m0 - a0 * m2, a0 * m1 - a1 * m0], axis=1)


def _normalize_jacobian(u: NDArray, n: NDArray, M: NDArray) -> NDArray:
    """``(I - u u^T) M / n`` for unit ``u`` (L, 3)."""
    return (M - u[:, :, None] * np.einsum("lr,lrk->lk", u, M)[:, None, :]) / n[:, None, None]


def attitude_and_jacobian_batch(acc: ArrayLike, yaw: ArrayLike | float = 0.0):
    """Rotations ``R`` (L,3,3) and ``dR[l, r, c, m] = dR[r, c] / d acc[m]`` (L,3,3,3)."""
    acc = np.atleast_2d(np.asarray(acc, dtype=float))
    yaw = np.broadcast_to(np.asarray(yaw, dtype=float), acc.shape[:1])
    fn, zb, rix, cn, yb, xb = _frame(acc, yaw)
    eye = np.broadcast_to(np.eye(3), (len(acc), 3, 3))
    dz = _normalize_jacobian(zb, fn, eye)
    dc = -_cross_cols(rix, dz)
    dy = _normalize_jacobian(yb, cn, dc)
    dx = _cross_cols(yb, dz) - _cross_cols(zb, dy)
    R = np.stack([xb, yb, zb], axis=-1)
    dR = np.stack([dx, dy, dz], axis=2)
    return R, dR


def attitude_from_flat(accel: ArrayLike, yaw: float = 0.0) -> NDArray[np.float64]:
    return attitude_batch(np.asarray(accel, dtype=float).reshape(1, 3), yaw)[0]


def d_attitude_d_accel(accel: ArrayLike, yaw: float = 0.0) -> NDArray[np.float64]:
    """Jacobian ``D[r, c, m] = dR[r, c] / d accel[m]``."""
    return attitude_and_jacobian_batch(np.asarray(accel, dtype=float).reshape(1, 3), yaw)[1][0]


def to_quaternion(R: ArrayLike) -> NDArray[np.float64]:
    """Unit quaternions in ``(w, x, y, z)`` order, ``w >= 0``."""
    q = Rotation.from_matrix(np.asarray(R, dtype=float)).as_quat()
    q = np.roll(np.atleast_2d(q), 1, axis=-1)
    q *= np.where(q[:, :1] < 0, -1.0, 1.0)
    return q if np.ndim(R) == 3 else q[0]


def roll_pitch_yaw(R: ArrayLike) -> NDArray[np.float64]:
    """Z-Y-X Euler angles ``(roll, pitch, yaw)`` in radians."""
    R = np.asarray(R, dtype=float)
    roll = np.arctan2(R[..., 2, 1], R[..., 2, 2])
    pitch = -np.arcsin(np.clip(R[..., 2, 0], -1.0, 1.0))
    yaw = np.arctan2(R[..., 1, 0], R[..., 0, 0])
    return np.stack([roll, pitch, yaw], axis=-1)
