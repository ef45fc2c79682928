"""Noisy onboard sensor simulation: visual odometry, rangefinder, IMU."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import quat_to_matrix

GRAVITY = np.array([0.0, 0.0, -9.81])


@dataclass(frozen=True)
class NoiseParams:
    vio_vel_std: float = 0.03
    range_alt_std: float = 0.02
    gyro_std: float = 0.005
    accel_std: float = 0.05


@dataclass(frozen=True)
class SensorReadings:
    vio_velocity: np.ndarray  # body frame m/s
    range_altitude: float
    imu_rates: np.ndarray  # rad/s
    imu_accel: np.ndarray  # specific force, m/s^2


def _tick_rng(seed: int, t: float) -> np.random.Generator:
    # counter-based stream keyed on (seed, time quantum): replays are exact
    # and independent of how many other streams were consumed
    tick = np.uint64(int(round(t * 1e6)) & 0xFFFFFFFFFFFFFFFF)
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), tick], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_sensors(true_state, noise: NoiseParams, seed: int, t: float,
                   accel_world=None) -> SensorReadings:
    """Gaussian-corrupted readings from the true rigid-body state.

    accel_world is the vehicle's current linear acceleration (the simulator
    passes the last dynamics value); the IMU reports specific force.
    """
    rng = _tick_rng(seed, t)
    rot = quat_to_matrix(true_state.attitude)
    v_body = rot.T @ true_state.velocity
    if accel_world is None:
        accel_world = np.zeros(3)
    specific_force = rot.T @ (np.asarray(accel_world) - GRAVITY)

    vio = v_body + noise.vio_vel_std * rng.standard_normal(3)
    altitude = float(true_state.position[2]) + noise.range_alt_std * float(rng.standard_normal())
    rates = true_state.body_rates + noise.gyro_std * rng.standard_normal(3)
    accel = specific_force + noise.accel_std * rng.standard_normal(3)
    return SensorReadings(
        vio_velocity=vio,
        range_altitude=max(0.0, altitude),
        imu_rates=rates,
        imu_accel=accel,
    )
