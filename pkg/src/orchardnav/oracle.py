"""Synthetic privileged expert: PD steering on the centerline frame plus
obstacle repulsion, with intervention/release hysteresis.

The oracle plays the paper's human pilot (who saw the full environment
state): it produces normalized yaw-rate commands and decides when a rollout
has left the safe envelope.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import wrap_angle
from .session import Privileged


@dataclass(frozen=True)
class ExpertConfig:
    k_lateral: float = 0.55  # normalized command per meter of offset
    k_heading: float = 0.9  # per radian of heading error
    repulsion_gain: float = 0.9
    repulsion_range: float = 2.0  # m, obstacles beyond this are ignored
    ttc_threshold: float = 1.8  # s
    lateral_bound: float = 0.9  # m
    heading_bound: float = 0.7  # rad
    release_dwell: int = 12  # consecutive in-envelope ticks before release
    release_margin: float = 0.6  # envelope shrink factor for release

    def __post_init__(self):
        if self.ttc_threshold <= 0 or self.lateral_bound <= 0 or self.heading_bound <= 0:
            raise ValueError("intervention thresholds must be > 0")
        if self.release_dwell < 1:
            raise ValueError("release_dwell must be >= 1")


def _repulsion(privileged: Privileged, config: ExpertConfig) -> float:
    dist = privileged.obstacle_distance
    if privileged.obstacle_id == "ground" or dist >= config.repulsion_range:
        return 0.0
    rel = privileged.obstacle_point - privileged.position
    cy, sy = math.cos(privileged.yaw), math.sin(privileged.yaw)
    ahead = cy * rel[0] + sy * rel[1]
    left = -sy * rel[0] + cy * rel[1]
    if ahead < -0.3:  # already passed it
        return 0.0
    if abs(left) > 0.05:
        side = math.copysign(1.0, left)
    elif privileged.frame.lateral_offset != 0.0:
        side = math.copysign(1.0, privileged.frame.lateral_offset)
    else:
        return 0.0
    strength = config.repulsion_gain * (1.0 - max(dist, 0.0) / config.repulsion_range)
    return -side * strength  # steer away from the obstacle side


def oracle_act(privileged: Privileged, config: ExpertConfig) -> float:
    """Normalized yaw-rate command in [-1, 1]; odd under scene mirroring."""
    cmd = (-config.k_lateral * privileged.frame.lateral_offset
           - config.k_heading * privileged.frame.heading_error
           + _repulsion(privileged, config))
    return float(np.clip(cmd, -1.0, 1.0))


def time_to_collision(privileged: Privileged) -> float:
    """Distance over closing speed toward the nearest obstacle point."""
    if privileged.obstacle_id == "ground":
        return math.inf
    rel = privileged.obstacle_point - privileged.position
    norm = np.linalg.norm(rel)
    if norm < 1e-9:
        return 0.0
    closing = float(privileged.velocity_world @ (rel / norm))
    if closing <= 0.05:
        return math.inf
    return max(privileged.obstacle_distance, 0.0) / closing


def oracle_should_intervene(privileged: Privileged, config: ExpertConfig) -> bool:
    if time_to_collision(privileged) < config.ttc_threshold:
        return True
    if abs(privileged.frame.lateral_offset) > config.lateral_bound:
        return True
    if abs(wrap_angle(privileged.frame.heading_error)) > config.heading_bound:
        return True
    return False


def oracle_in_envelope(privileged: Privileged, config: ExpertConfig) -> bool:
    m = config.release_margin
    return (abs(privileged.frame.lateral_offset) < m * config.lateral_bound
            and abs(wrap_angle(privileged.frame.heading_error)) < m * config.heading_bound
            and time_to_collision(privileged) > config.ttc_threshold / m)


def oracle_should_release(privileged: Privileged, dwell_count: int,
                          config: ExpertConfig) -> tuple[bool, int]:
    """Release after release_dwell consecutive in-envelope ticks."""
    if oracle_in_envelope(privileged, config):
        dwell_count += 1
    else:
        dwell_count = 0
    return dwell_count >= config.release_dwell, dwell_count


class WeavingOracle:
    """Oracle pilot with a slow sinusoidal weave over its corrections.

    Used for demonstration/image sweeps: widens lateral/heading coverage the
    way a human pilot's natural drift would, while the corrective component
    keeps labels right on average. Always holds control.
    """

    def __init__(self, config: ExpertConfig, amplitude: float = 0.3,
                 period_s: float = 7.0, phase: float = 0.0):
        self.config = config
        self.always_latched = True
        self.latched = True
        self.amplitude = amplitude
        self.period_s = period_s
        self.phase = phase
        self._tick = 0

    def reset(self) -> None:
        self.latched = True
        self._tick = 0

    def update_takeover(self, privileged: Privileged) -> bool:
        return True

    def force_takeover(self) -> None:
        self.latched = True

    def act(self, privileged: Privileged) -> float:
        base = oracle_act(privileged, self.config)
        weave = self.amplitude * math.sin(
            2 * math.pi * self._tick / (30.0 * self.period_s) + self.phase)
        self._tick += 1
        return float(np.clip(base + weave, -1.0, 1.0))


class OracleExpert:
    """Stateful wrapper holding the takeover latch and dwell counter."""

    def __init__(self, config: ExpertConfig = ExpertConfig(), always_latched: bool = False):
        self.config = config
        self.always_latched = always_latched
        self.latched = always_latched
        self._dwell = 0

    def reset(self) -> None:
        self.latched = self.always_latched
        self._dwell = 0

    def update_takeover(self, privileged: Privileged) -> bool:
        """Advance the latch state machine; returns whether the expert holds
        control for this tick."""
        if self.always_latched:
            self.latched = True
            return True
        if self.latched:
            released, self._dwell = oracle_should_release(privileged, self._dwell,
                                                          self.config)
            if released:
                self.latched = False
                self._dwell = 0
        elif oracle_should_intervene(privileged, self.config):
            self.latched = True
            self._dwell = 0
        return self.latched

    def force_takeover(self) -> None:
        self.latched = True
        self._dwell = 0

    def act(self, privileged: Privileged) -> float:
        return oracle_act(privileged, self.config)
