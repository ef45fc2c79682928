"""Quadrotor rigid-body dynamics and the cascaded control stack.

The cascade mirrors a stock multirotor autopilot: a PID velocity controller
produces tilt + thrust, an attitude P loop produces body-rate commands, a
rate PID produces torques, and an X-layout mixer allocates motor commands.
Yaw-rate commands are clamped to the configured maximum before they reach
the rate loop.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .geometry import (
    quat_error_vector,
    quat_from_matrix,
    quat_integrate,
    quat_to_euler,
    quat_to_matrix,
    wrap_angle,
)

GRAVITY = 9.81


@dataclass(frozen=True)
class VehicleParams:
    mass: float = 1.8
    arm_length: float = 0.225  # half of the 450 mm wheelbase
    inertia_diag: tuple[float, float, float] = (0.0228, 0.0228, 0.0456)
    thrust_coeff: float = 8.8  # N at full normalized command, per motor
    torque_coeff: float = 0.12  # N*m at full normalized command, per motor
    linear_drag: float = 0.35  # N*s/m
    body_radius: float = 0.30  # collision envelope
    max_yaw_rate: float = math.radians(45.0)

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError("mass must be > 0")
        if any(i <= 0 for i in self.inertia_diag):
            raise ValueError("inertia components must be > 0")
        if self.max_yaw_rate <= 0:
            raise ValueError("max_yaw_rate must be > 0")


@dataclass
class RigidBodyState:
    position: np.ndarray  # world, m
    velocity: np.ndarray  # world, m/s
    attitude: np.ndarray  # unit quaternion [w, x, y, z]
    body_rates: np.ndarray  # rad/s

    @classmethod
    def at_rest(cls, position, yaw: float = 0.0) -> "RigidBodyState":
        half = yaw / 2
        return cls(
            position=np.asarray(position, dtype=float),
            velocity=np.zeros(3),
            attitude=np.array([math.cos(half), 0.0, 0.0, math.sin(half)]),
            body_rates=np.zeros(3),
        )


@lru_cache(maxsize=8)
def _allocation(params: VehicleParams) -> tuple[np.ndarray, np.ndarray]:
    """X-layout allocation matrix mapping motor commands to [Fz, tx, ty, tz]."""
    a = params.arm_length / math.sqrt(2.0)
    kf, kt = params.thrust_coeff, params.torque_coeff
    # motor order: front-right, rear-left, front-left, rear-right
    ys = np.array([-a, a, a, -a])
    xs = np.array([a, -a, a, -a])
    spins = np.array([1.0, 1.0, -1.0, -1.0])
    mat = np.stack([
        kf * np.ones(4),
        kf * ys,
        -kf * xs,
        kt * spins,
    ])
    return mat, np.linalg.inv(mat)


def dynamics_step(state: RigidBodyState, motor_cmd, wind, params: VehicleParams,
                  dt: float, disturbance_torque=None) -> tuple[RigidBodyState, np.ndarray]:
    """Semi-implicit Euler rigid-body step; returns (new state, world accel)."""
    if not 0.0 < dt <= 0.02:
        raise ValueError("dt must be in (0, 0.02]")
    u = np.clip(np.asarray(motor_cmd, dtype=float), 0.0, 1.0)
    mat, _ = _allocation(params)
    wrench = mat @ u  # [Fz, tau_x, tau_y, tau_z]
    rot = quat_to_matrix(state.attitude)

    force = rot @ np.array([0.0, 0.0, wrench[0]])
    force += np.array([0.0, 0.0, -params.mass * GRAVITY])
    force += -params.linear_drag * (state.velocity - np.asarray(wind, dtype=float))
    accel = force / params.mass

    inertia = np.asarray(params.inertia_diag)
    torque = wrench[1:].copy()
    if disturbance_torque is not None:
        torque += disturbance_torque
    omega = state.body_rates
    iw = inertia * omega
    gyroscopic = np.array([
        omega[1] * iw[2] - omega[2] * iw[1],
        omega[2] * iw[0] - omega[0] * iw[2],
        omega[0] * iw[1] - omega[1] * iw[0],
    ])
    omega_dot = (torque - gyroscopic) / inertia

    new_velocity = state.velocity + accel * dt
    new_position = state.position + new_velocity * dt
    new_rates = omega + omega_dot * dt
    new_attitude = quat_integrate(state.attitude, new_rates, dt)
    return RigidBodyState(new_position, new_velocity, new_attitude, new_rates), accel


# ----------------------------------------------------------------- cascade

@dataclass(frozen=True)
class CascadeGains:
    vel_kp: float = 2.6
    vel_ki: float = 1.2
    vel_kd: float = 0.0
    vel_int_clamp: float = 2.0  # m/s^2 contribution bound
    tilt_accel_max: float = 6.0  # horizontal accel bound, m/s^2
    att_kp: tuple[float, float, float] = (7.0, 7.0, 4.0)
    rate_max: tuple[float, float, float] = (3.5, 3.5, math.radians(45.0))
    rate_kp: tuple[float, float, float] = (0.28, 0.28, 0.30)
    rate_ki: tuple[float, float, float] = (0.12, 0.12, 0.10)
    rate_kd: tuple[float, float, float] = (0.002, 0.002, 0.0)
    rate_int_clamp: float = 0.25  # N*m contribution bound


class VelocityController:
    """PID on heading-frame velocity error -> desired attitude + thrust.

    Holds the yaw setpoint (advanced by the clamped yaw-rate command) and the
    error integrator; both reset with the controller.
    """

    def __init__(self, gains: CascadeGains, params: VehicleParams):
        self.gains = gains
        self.params = params
        self.reset(0.0)

    def reset(self, yaw: float) -> None:
        self.yaw_setpoint = yaw
        self.integrator = np.zeros(3)
        self._prev_error = None

    def __call__(self, est, velocity_cmd, yaw_rate_cmd: float, dt: float):
        g = self.gains
        yaw_rate = float(np.clip(yaw_rate_cmd, -self.params.max_yaw_rate,
                                 self.params.max_yaw_rate))
        self.yaw_setpoint = wrap_angle(self.yaw_setpoint + yaw_rate * dt)

        rot = quat_to_matrix(est.attitude)
        v_world = rot @ est.body_velocity
        _, _, yaw = quat_to_euler(est.attitude)
        cy, sy = math.cos(yaw), math.sin(yaw)
        heading = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
        error = heading @ np.asarray(velocity_cmd, dtype=float) - v_world

        self.integrator = np.clip(self.integrator + g.vel_ki * error * dt,
                                  -g.vel_int_clamp, g.vel_int_clamp)
        deriv = np.zeros(3)
        if g.vel_kd > 0 and self._prev_error is not None:
            deriv = (error - self._prev_error) / dt
        self._prev_error = error

        accel_des = g.vel_kp * error + self.integrator + g.vel_kd * deriv
        horiz = math.hypot(accel_des[0], accel_des[1])
        if horiz > g.tilt_accel_max:
            accel_des[:2] *= g.tilt_accel_max / horiz

        force_des = self.params.mass * (accel_des + np.array([0.0, 0.0, GRAVITY]))
        thrust = float(np.linalg.norm(force_des))
        weight = self.params.mass * GRAVITY
        thrust = min(max(thrust, 0.1 * weight), 2.0 * weight)

        z_body = force_des / max(np.linalg.norm(force_des), 1e-9)
        x_heading = np.array([math.cos(self.yaw_setpoint), math.sin(self.yaw_setpoint), 0.0])
        y_body = np.cross(z_body, x_heading)
        y_body /= max(np.linalg.norm(y_body), 1e-9)
        x_body = np.cross(y_body, z_body)
        q_des = quat_from_matrix(np.column_stack([x_body, y_body, z_body]))
        return q_des, thrust


def attitude_controller(est, attitude_cmd: np.ndarray, gains: CascadeGains) -> np.ndarray:
    """P law on the quaternion attitude error -> body-rate command."""
    err = quat_error_vector(est.attitude, attitude_cmd)
    rate_cmd = np.asarray(gains.att_kp) * err
    limits = np.asarray(gains.rate_max)
    return np.clip(rate_cmd, -limits, limits)


class RateController:
    """PID on body rates -> torques; thrust passes through."""

    def __init__(self, gains: CascadeGains):
        self.gains = gains
        self.reset()

    def reset(self) -> None:
        self.integrator = np.zeros(3)
        self._prev_error = None

    def __call__(self, est, rate_cmd, thrust: float, dt: float):
        g = self.gains
        error = np.asarray(rate_cmd, dtype=float) - est.body_rates
        self.integrator = np.clip(self.integrator + np.asarray(g.rate_ki) * error * dt,
                                  -g.rate_int_clamp, g.rate_int_clamp)
        deriv = np.zeros(3)
        if self._prev_error is not None:
            deriv = (error - self._prev_error) / dt
        self._prev_error = error
        torque = np.asarray(g.rate_kp) * error + self.integrator + np.asarray(g.rate_kd) * deriv
        return torque, thrust


def mixer(torque_thrust_cmd, params: VehicleParams) -> np.ndarray:
    """Solve the 4x4 X-layout allocation for motor commands, clamped to [0,1]."""
    torque, thrust = torque_thrust_cmd
    _, inv = _allocation(params)
    u = inv @ np.concatenate(([thrust], np.asarray(torque, dtype=float)))
    return np.clip(u, 0.0, 1.0)


def unmix(motor_cmd, params: VehicleParams) -> tuple[np.ndarray, float]:
    """Inverse of mixer (before clamping): motor commands -> (torque, thrust)."""
    mat, _ = _allocation(params)
    wrench = mat @ np.asarray(motor_cmd, dtype=float)
    return wrench[1:], float(wrench[0])


def high_level_planner(est, altitude_target: float, speed_target: float,
                       k_alt: float = 1.2, climb_clamp: float = 0.5) -> np.ndarray:
    """Constant forward speed plus proportional altitude hold; no lateral cmd.

    Lateral motion arises only through yaw steering, so the velocity command
    is (speed, 0, climb).
    """
    if altitude_target <= 0:
        raise ValueError("altitude_target must be > 0")
    if speed_target < 0:
        raise ValueError("speed_target must be >= 0")
    climb = float(np.clip(k_alt * (altitude_target - est.altitude),
                          -climb_clamp, climb_clamp))
    return np.array([speed_target, 0.0, climb])
