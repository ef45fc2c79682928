"""EKF fusing IMU, visual-odometry velocity and rangefinder altitude.

State vector: [altitude, body velocity (3), roll, pitch, yaw]. Gyro and
accelerometer readings drive the prediction; VIO velocity and the
rangefinder provide linear updates. Body rates are reported straight from
the gyro. The covariance is symmetrized and eigenvalue-floored every step.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import quat_from_euler
from .sensors import SensorReadings

GRAVITY = np.array([0.0, 0.0, -9.81])

_N = 7


@dataclass(frozen=True)
class EkfParams:
    process_alt: float = 0.02
    process_vel: float = 0.30
    process_att: float = 0.05
    meas_vio_vel: float = 0.03
    meas_range_alt: float = 0.02
    init_cov: float = 0.5


@dataclass
class EstimatedState:
    altitude: float
    attitude: np.ndarray  # unit quaternion
    body_velocity: np.ndarray
    body_rates: np.ndarray
    covariance: np.ndarray  # 7x7, symmetric PSD
    rejected_update: bool = False


def _process(x: np.ndarray, gyro: np.ndarray, accel: np.ndarray) -> np.ndarray:
    """Continuous-time state derivative given IMU inputs.

    Accepts a batch (k, 7) of states so the finite-difference Jacobian is one
    vectorized call; only the third rotation row is needed.
    """
    vb0, vb1, vb2 = x[..., 1], x[..., 2], x[..., 3]
    roll, pitch = x[..., 4], x[..., 5]
    sr, cr = np.sin(roll), np.cos(roll)
    sp, cp = np.sin(pitch), np.maximum(np.cos(pitch), 1e-6)
    r20, r21, r22 = -sp, cp * sr, cp * cr

    gx, gy, gz = gyro
    ax, ay, az = accel
    g = 9.81
    out = np.empty_like(x)
    out[..., 0] = r20 * vb0 + r21 * vb1 + r22 * vb2
    out[..., 1] = ax - g * r20 - (gy * vb2 - gz * vb1)
    out[..., 2] = ay - g * r21 - (gz * vb0 - gx * vb2)
    out[..., 3] = az - g * r22 - (gx * vb1 - gy * vb0)
    tp = sp / cp
    out[..., 4] = gx + sr * tp * gy + cr * tp * gz
    out[..., 5] = cr * gy - sr * gz
    out[..., 6] = (sr * gy + cr * gz) / cp
    return out


class Ekf:
    def __init__(self, params: EkfParams = EkfParams(), altitude: float = 0.0,
                 yaw: float = 0.0):
        self.params = params
        self.x = np.zeros(_N)
        self.x[0] = altitude
        self.x[6] = yaw
        self.cov = np.eye(_N) * params.init_cov
        self._gyro = np.zeros(3)

    def step(self, readings: SensorReadings, dt: float) -> EstimatedState:
        """Predict with IMU, update with VIO velocity and rangefinder."""
        if dt <= 0:
            raise ValueError("dt must be > 0")
        p = self.params
        rejected = False

        gyro = np.asarray(readings.imu_rates, dtype=float)
        accel = np.asarray(readings.imu_accel, dtype=float)
        if not np.all(np.isfinite(gyro)):
            gyro = self._gyro
            rejected = True
        if not np.all(np.isfinite(accel)):
            accel = np.zeros(3)
            rejected = True
        self._gyro = gyro

        # predict; Jacobian by central differences, one batched evaluation
        h = 1e-6
        batch = np.tile(self.x, (2 * _N + 1, 1))
        batch[np.arange(_N), np.arange(_N)] += h
        batch[_N + np.arange(_N), np.arange(_N)] -= h
        derivs = _process(batch, gyro, accel)
        jac = (derivs[:_N] - derivs[_N:2 * _N]).T / (2 * h)
        self.x = self.x + derivs[2 * _N] * dt
        phi = np.eye(_N) + jac * dt
        q_diag = np.concatenate((
            [p.process_alt ** 2], np.full(3, p.process_vel ** 2),
            np.full(3, p.process_att ** 2)))
        self.cov = phi @ self.cov @ phi.T + np.diag(q_diag) * dt

        # VIO body-velocity update
        vio = np.asarray(readings.vio_velocity, dtype=float)
        if np.all(np.isfinite(vio)):
            h_mat = np.zeros((3, _N))
            h_mat[:, 1:4] = np.eye(3)
            self._linear_update(vio, h_mat, np.eye(3) * max(p.meas_vio_vel, 1e-4) ** 2)
        else:
            rejected = True

        # rangefinder altitude update
        alt = readings.range_altitude
        if np.isfinite(alt):
            h_mat = np.zeros((1, _N))
            h_mat[0, 0] = 1.0
            self._linear_update(np.array([alt]), h_mat,
                                np.array([[max(p.meas_range_alt, 1e-4) ** 2]]))
        else:
            rejected = True

        self._condition_covariance()
        return self.estimate(rejected)

    def _linear_update(self, z: np.ndarray, h_mat: np.ndarray, r: np.ndarray) -> None:
        innovation = z - h_mat @ self.x
        s = h_mat @ self.cov @ h_mat.T + r
        gain = self.cov @ h_mat.T @ np.linalg.inv(s)
        self.x = self.x + gain @ innovation
        self.cov = (np.eye(_N) - gain @ h_mat) @ self.cov

    def _condition_covariance(self) -> None:
        self.cov = 0.5 * (self.cov + self.cov.T)
        vals, vecs = np.linalg.eigh(self.cov)
        if vals[0] < 0.0:
            self.cov = (vecs * np.maximum(vals, 0.0)) @ vecs.T
            self.cov = 0.5 * (self.cov + self.cov.T)

    def estimate(self, rejected: bool = False) -> EstimatedState:
        return EstimatedState(
            altitude=float(self.x[0]),
            attitude=quat_from_euler(self.x[4], self.x[5], self.x[6]),
            body_velocity=self.x[1:4].copy(),
            body_rates=self._gyro.copy(),
            covariance=self.cov.copy(),
            rejected_update=rejected,
        )
