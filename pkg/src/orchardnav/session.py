"""Multirate closed-loop simulation session.

One session owns the vehicle truth state, sensor/EKF chain, cascade
controllers and (optionally) a world + camera. The loop is single-threaded:
dynamics and the rate loop run at the base rate, the attitude loop at half,
the velocity loop and wind process at 50 Hz, the estimator at 100 Hz, and
control is handed back to the caller at every 30 Hz policy tick.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .estimator import Ekf, EkfParams
from .render import CameraModel, Frame, render
from .sensors import NoiseParams, sample_sensors
from .vehicle import (
    CascadeGains,
    RateController,
    RigidBodyState,
    VehicleParams,
    VelocityController,
    attitude_controller,
    dynamics_step,
    high_level_planner,
    mixer,
)
from .world import World, centerline_frame, collision_check, nearest_obstacle_info


@dataclass(frozen=True)
class SimRates:
    dynamics_hz: int = 500
    attitude_div: int = 2  # attitude loop every N substeps
    velocity_hz: int = 50
    estimator_hz: int = 100
    policy_hz: int = 30


@dataclass(frozen=True)
class WindParams:
    mean: tuple[float, float, float] = (0.0, 0.0, 0.0)
    std: float = 0.50  # stationary std of the OU gust process, m/s
    tau: float = 3.0
    yaw_torque_std: float = 0.012  # OU heading disturbance, N*m
    yaw_torque_tau: float = 2.0


def _stream(seed: int, tag: int) -> np.random.Generator:
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(tag)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


class VehicleSim:
    """Closed-loop vehicle stack without a world: planner -> cascade -> truth."""

    def __init__(self, params: VehicleParams = VehicleParams(),
                 gains: CascadeGains = CascadeGains(),
                 rates: SimRates = SimRates(),
                 noise: NoiseParams = NoiseParams(),
                 ekf_params: EkfParams = EkfParams(),
                 wind: WindParams = WindParams(),
                 spawn: RigidBodyState | None = None,
                 altitude_target: float = 1.8,
                 speed_target: float = 0.6,
                 seed: int = 0):
        self.params = params
        self.gains = gains
        self.rates = rates
        self.noise = noise
        self.wind_params = wind
        self.seed = seed
        self.truth = spawn if spawn is not None else RigidBodyState.at_rest((0.0, 0.0, 1.8))
        self.altitude_target = altitude_target
        self.speed_target = speed_target

        from .geometry import yaw_of

        spawn_yaw = yaw_of(self.truth.attitude)
        self.ekf = Ekf(ekf_params, altitude=float(self.truth.position[2]), yaw=spawn_yaw)
        self.est = self.ekf.estimate()
        self.vel_ctrl = VelocityController(gains, params)
        self.vel_ctrl.reset(spawn_yaw)
        self.rate_ctrl = RateController(gains)

        hover = params.mass * 9.81 / (4 * params.thrust_coeff)
        self.motor_cmd = np.full(4, hover)
        self.accel_world = np.zeros(3)
        self.yaw_rate_cmd = 0.0

        self._wind_rng = _stream(seed, 0xA1)
        self.wind = np.asarray(wind.mean, dtype=float).copy()
        self.yaw_disturbance = 0.0

        self.time = 0.0
        self._dt = 1.0 / rates.dynamics_hz
        self._substep_index = 0
        self._next_velocity_t = 0.0
        self._next_estimator_t = 0.0
        self._next_policy_t = 1.0 / rates.policy_hz
        self._attitude_cmd = self.truth.attitude.copy()
        self._thrust_cmd = params.mass * 9.81
        self._rate_cmd = np.zeros(3)

    # ---------------------------------------------------------------- loop

    def set_yaw_rate_command(self, yaw_rate_norm: float) -> None:
        """Normalized [-1, 1] steering command, scaled to the yaw-rate limit."""
        value = float(np.clip(yaw_rate_norm, -1.0, 1.0)) * self.params.max_yaw_rate
        self.yaw_rate_cmd = value

    def _update_wind(self, dt: float) -> None:
        wp = self.wind_params
        if wp.std > 0:
            alpha = dt / wp.tau
            sigma = wp.std * math.sqrt(2.0 * alpha)
            self.wind += (np.asarray(wp.mean) - self.wind) * alpha \
                + sigma * self._wind_rng.standard_normal(3)
        if wp.yaw_torque_std > 0:
            alpha = dt / wp.yaw_torque_tau
            sigma = wp.yaw_torque_std * math.sqrt(2.0 * alpha)
            self.yaw_disturbance += -self.yaw_disturbance * alpha \
                + sigma * float(self._wind_rng.standard_normal())

    def advance_to_policy_tick(self) -> None:
        """Run substeps until the next 30 Hz policy boundary."""
        eps = 1e-9
        while True:
            disturbance = np.array([0.0, 0.0, self.yaw_disturbance])
            self.truth, self.accel_world = dynamics_step(
                self.truth, self.motor_cmd, self.wind, self.params, self._dt,
                disturbance_torque=disturbance)
            self.time += self._dt
            self._substep_index += 1

            if self.time + eps >= self._next_estimator_t:
                self._next_estimator_t += 1.0 / self.rates.estimator_hz
                readings = sample_sensors(self.truth, self.noise, self.seed,
                                          self.time, accel_world=self.accel_world)
                self.est = self.ekf.step(readings, 1.0 / self.rates.estimator_hz)

            if self.time + eps >= self._next_velocity_t:
                period = 1.0 / self.rates.velocity_hz
                self._next_velocity_t += period
                self._update_wind(period)
                velocity_cmd = high_level_planner(self.est, self.altitude_target,
                                                  self.speed_target)
                self._attitude_cmd, self._thrust_cmd = self.vel_ctrl(
                    self.est, velocity_cmd, self.yaw_rate_cmd, period)

            if self._substep_index % self.rates.attitude_div == 0:
                self._rate_cmd = attitude_controller(self.est, self._attitude_cmd,
                                                     self.gains)

            torque_thrust = self.rate_ctrl(self.est, self._rate_cmd,
                                           self._thrust_cmd, self._dt)
            self.motor_cmd = mixer(torque_thrust, self.params)

            if self.time + eps >= self._next_policy_t:
                self._next_policy_t += 1.0 / self.rates.policy_hz
                return


@dataclass(frozen=True)
class SimStackConfig:
    """Everything needed to rebuild the vehicle/sensor stack for a session."""
    vehicle: VehicleParams = VehicleParams()
    gains: CascadeGains = CascadeGains()
    rates: SimRates = SimRates()
    noise: NoiseParams = NoiseParams()
    ekf: EkfParams = EkfParams()
    wind: WindParams = WindParams()
    camera: CameraModel = CameraModel()


def sample_spawn(seed: int, corridor_start, corridor_yaw: float = 0.0):
    """Spawn pose and altitude target for one rollout.

    Altitude uniform in [1.6, 2.0] m; lateral offset jittered +/-0.5 m and yaw
    +/-10 deg so the expert demonstrates corrections from the first ticks.
    """
    rng = _stream(seed, 0x5B)
    altitude = rng.uniform(1.6, 2.0)
    lateral = rng.uniform(-0.5, 0.5)
    yaw = corridor_yaw + rng.uniform(-math.radians(10), math.radians(10))
    position = (corridor_start[0] + 0.5, corridor_start[1] + lateral, altitude)
    return RigidBodyState.at_rest(position, yaw=yaw), float(altitude)


def make_session(world: World, stack: SimStackConfig, seed: int,
                 corridor_index: int = 0, speed_target: float = 0.6,
                 palette_id: str | None = None) -> "SimSession":
    start, axis, _ = world.corridor_axis(corridor_index)
    spawn, altitude_target = sample_spawn(seed, start, math.atan2(axis[1], axis[0]))
    sim = VehicleSim(params=stack.vehicle, gains=stack.gains, rates=stack.rates,
                     noise=stack.noise, ekf_params=stack.ekf, wind=stack.wind,
                     spawn=spawn, altitude_target=altitude_target,
                     speed_target=speed_target, seed=seed)
    return SimSession(world, sim, camera=stack.camera, corridor_index=corridor_index,
                      palette_id=palette_id)


TERMINATION_END_OF_ROW = "end_of_row"
TERMINATION_COLLISION = "collision"
TERMINATION_MANUAL_ABORT = "manual_abort"
TERMINATION_STEP_LIMIT = "step_limit"


@dataclass
class Privileged:
    """Ground-truth quantities available only to the synthetic expert."""
    frame: object  # CenterlineFrame
    obstacle_distance: float
    obstacle_id: str
    obstacle_point: np.ndarray
    velocity_world: np.ndarray
    position: np.ndarray
    yaw: float


class SimSession:
    """VehicleSim embedded in a world corridor with camera and termination."""

    def __init__(self, world: World, vehicle_sim: VehicleSim,
                 camera: CameraModel = CameraModel(),
                 corridor_index: int = 0,
                 palette_id: str | None = None):
        self.world = world
        self.sim = vehicle_sim
        self.camera = camera
        self.corridor_index = corridor_index
        self.palette_id = palette_id or world.params.palette_id
        self.termination: str | None = None
        self.collision_obstacle: str | None = None
        self.tick_index = 0

    @property
    def done(self) -> bool:
        return self.termination is not None

    def render_frame(self) -> Frame:
        return render(self.world, (self.sim.truth.position, self.sim.truth.attitude),
                      self.camera, self.palette_id, timestamp=self.sim.time)

    def privileged(self) -> Privileged:
        from .geometry import yaw_of

        pos = self.sim.truth.position
        yaw = yaw_of(self.sim.truth.attitude)
        frame = centerline_frame(self.world, pos, yaw, self.corridor_index)
        dist, obstacle_id, point = nearest_obstacle_info(self.world, pos)
        return Privileged(frame=frame, obstacle_distance=dist, obstacle_id=obstacle_id,
                          obstacle_point=point, velocity_world=self.sim.truth.velocity.copy(),
                          position=pos.copy(), yaw=yaw)

    def apply_policy_tick(self, yaw_rate_norm: float, max_ticks: int | None = None) -> None:
        """Apply a steering command and advance one policy period."""
        self.sim.set_yaw_rate_command(yaw_rate_norm)
        self.sim.advance_to_policy_tick()
        self.tick_index += 1

        collided, obstacle_id = collision_check(
            self.world, self.sim.truth.position, self.sim.params.body_radius)
        if collided:
            self.termination = TERMINATION_COLLISION
            self.collision_obstacle = obstacle_id
            return
        frame = centerline_frame(self.world, self.sim.truth.position, 0.0,
                                 self.corridor_index)
        if frame.remaining <= 0.0:
            self.termination = TERMINATION_END_OF_ROW
            return
        if max_ticks is not None and self.tick_index >= max_ticks:
            self.termination = TERMINATION_STEP_LIMIT

    def abort(self) -> None:
        self.termination = TERMINATION_MANUAL_ABORT
