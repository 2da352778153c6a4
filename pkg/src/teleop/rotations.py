"""Quaternion and rotation-matrix helpers.

Quaternions are scalar-last [x, y, z, w] throughout the project. q and -q
represent the same orientation; comparison helpers account for that.
"""

from __future__ import annotations

import numpy as np

IDENTITY_QUAT = np.array([0.0, 0.0, 0.0, 1.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q)


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ax, ay, az, aw = a
    bx, by, bz, bw = b
    return np.array(
        [
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
            aw * bw - ax * bx - ay * by - az * bz,
        ]
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([-q[0], -q[1], -q[2], q[3]])


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    half = 0.5 * angle
    return np.array([*(np.sin(half) * axis), np.cos(half)])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    return matrix_from_quat(q) @ np.asarray(v, dtype=float)


def matrix_from_quat(q: np.ndarray) -> np.ndarray:
    x, y, z, w = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_matrix(R: np.ndarray) -> np.ndarray:
    """Shepperd's method; returns a unit quaternion with w >= 0."""
    t = np.trace(R)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array(
            [(R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s,
             0.25 * s]
        )
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q = np.array(
            [0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s,
             (R[2, 1] - R[1, 2]) / s]
        )
    elif R[1, 1] > R[2, 2]:
        s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        q = np.array(
            [(R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s,
             (R[0, 2] - R[2, 0]) / s]
        )
    else:
        s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        q = np.array(
            [(R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s,
             (R[1, 0] - R[0, 1]) / s]
        )
    if q[3] < 0:
        q = -q
    return quat_normalize(q)


def quat_to_rotvec(q: np.ndarray) -> np.ndarray:
    """Log map: rotation vector (axis * angle, rad) of a unit quaternion."""
    q = np.asarray(q, dtype=float)
    if q[3] < 0:  # shortest path: q and -q are the same rotation
        q = -q
    vec_norm = np.linalg.norm(q[:3])
    if vec_norm < 1e-12:
        return 2.0 * q[:3]  # small-angle limit
    angle = 2.0 * np.arctan2(vec_norm, q[3])
    return q[:3] * (angle / vec_norm)


def orientation_error(q_target: np.ndarray, q_current: np.ndarray) -> np.ndarray:
    """Rotation vector taking current to target (world frame)."""
    return quat_to_rotvec(quat_multiply(q_target, quat_conjugate(q_current)))


def orientation_angle(q_a: np.ndarray, q_b: np.ndarray) -> float:
    """Angular distance in rad between two orientations (sign-invariant)."""
    return float(np.linalg.norm(orientation_error(q_a, q_b)))
