"""Quaternion and small 3D helpers shared by the simulator stack.

Conventions: world frame x-forward / y-left / z-up, body frame FLU,
quaternions as [w, x, y, z] float64 arrays, Euler angles ZYX (yaw-pitch-roll).
"""
from __future__ import annotations

import math

import numpy as np

QUAT_IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    return q / np.linalg.norm(q)


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix mapping body-frame vectors into the world frame."""
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    return quat_to_matrix(q) @ v


def quat_rotate_inverse(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    return quat_to_matrix(q).T @ v


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n < 1e-12:
        return QUAT_IDENTITY.copy()
    half = 0.5 * angle
    return np.concatenate(([math.cos(half)], math.sin(half) * axis / n))


def quat_exp(rotvec: np.ndarray) -> np.ndarray:
    """exp map of a rotation vector (axis * angle) to a unit quaternion."""
    angle = np.linalg.norm(rotvec)
    if angle < 1e-12:
        # first-order expansion keeps the integrator smooth near zero rate
        return quat_normalize(np.concatenate(([1.0], 0.5 * rotvec)))
    axis = rotvec / angle
    half = 0.5 * angle
    return np.concatenate(([math.cos(half)], math.sin(half) * axis))


def quat_integrate(q: np.ndarray, omega_body: np.ndarray, dt: float) -> np.ndarray:
    """Advance attitude by body rates over dt, renormalized."""
    return quat_normalize(quat_multiply(q, quat_exp(omega_body * dt)))


def quat_error_vector(q_current: np.ndarray, q_desired: np.ndarray) -> np.ndarray:
    """Shortest-path attitude error as a body-frame rotation vector.

    Returns 2 * vec(log(q_current^-1 * q_desired)); magnitude equals the
    rotation angle for small errors.
    """
    q_err = quat_multiply(quat_conjugate(q_current), q_desired)
    if q_err[0] < 0.0:
        q_err = -q_err
    w = min(1.0, max(-1.0, q_err[0]))
    vec = q_err[1:]
    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        return 2.0 * vec
    angle = 2.0 * math.atan2(norm, w)
    return angle * vec / norm


def quat_from_matrix(m: np.ndarray) -> np.ndarray:
    """Unit quaternion from a proper rotation matrix (Shepperd's method)."""
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2
        return quat_normalize(np.array([
            0.25 * s,
            (m[2, 1] - m[1, 2]) / s,
            (m[0, 2] - m[2, 0]) / s,
            (m[1, 0] - m[0, 1]) / s,
        ]))
    i = int(np.argmax([m[0, 0], m[1, 1], m[2, 2]]))
    j, k = (i + 1) % 3, (i + 2) % 3
    s = math.sqrt(max(1e-12, 1.0 + m[i, i] - m[j, j] - m[k, k])) * 2
    q = np.empty(4)
    q[0] = (m[k, j] - m[j, k]) / s
    q[1 + i] = 0.25 * s
    q[1 + j] = (m[j, i] + m[i, j]) / s
    q[1 + k] = (m[k, i] + m[i, k]) / s
    return quat_normalize(q)


def quat_from_euler(roll: float, pitch: float, yaw: float) -> np.ndarray:
    cy, sy = math.cos(yaw / 2), math.sin(yaw / 2)
    cp, sp = math.cos(pitch / 2), math.sin(pitch / 2)
    cr, sr = math.cos(roll / 2), math.sin(roll / 2)
    return np.array([
        cy * cp * cr + sy * sp * sr,
        cy * cp * sr - sy * sp * cr,
        cy * sp * cr + sy * cp * sr,
        sy * cp * cr - cy * sp * sr,
    ])


def quat_to_euler(q: np.ndarray) -> tuple[float, float, float]:
    """(roll, pitch, yaw) of a unit quaternion, ZYX convention."""
    w, x, y, z = q
    roll = math.atan2(2 * (w * x + y * z), 1 - 2 * (x * x + y * y))
    s = 2 * (w * y - z * x)
    pitch = math.asin(min(1.0, max(-1.0, s)))
    yaw = math.atan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z))
    return roll, pitch, yaw


def yaw_of(q: np.ndarray) -> float:
    return quat_to_euler(q)[2]


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2 * math.pi)
    if a <= 0.0:
        a += 2 * math.pi
    return a - math.pi


def dist_point_segment(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> tuple[float, np.ndarray]:
    """Distance from p to segment ab and the closest point on it."""
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-18:
        return float(np.linalg.norm(p - a)), a
    t = float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    c = a + t * ab
    return float(np.linalg.norm(p - c)), c
