"""Synthetic expert tests: steering law, intervention triggers, hysteresis."""
import math

import numpy as np

from orchardnav.oracle import (
    ExpertConfig,
    OracleExpert,
    oracle_act,
    oracle_should_intervene,
    oracle_should_release,
    time_to_collision,
)
from orchardnav.session import Privileged
from orchardnav.world import CenterlineFrame


def situation(lateral=0.0, heading=0.0, obstacle_distance=50.0, obstacle_id="ground",
              obstacle_point=(0.0, 0.0, 0.0), velocity=(0.6, 0.0, 0.0),
              position=(10.0, 0.0, 1.8), yaw=0.0):
    return Privileged(
        frame=CenterlineFrame(lateral_offset=lateral, heading_error=heading,
                              arc_length=10.0, remaining=60.0),
        obstacle_distance=obstacle_distance,
        obstacle_id=obstacle_id,
        obstacle_point=np.asarray(obstacle_point, dtype=float),
        velocity_world=np.asarray(velocity, dtype=float),
        position=np.asarray(position, dtype=float),
        yaw=yaw,
    )


def test_centered_aligned_outputs_zero():
    assert oracle_act(situation(), ExpertConfig()) == 0.0


def test_left_offset_steers_right():
    config = ExpertConfig(k_lateral=0.5, k_heading=0.0)
    assert oracle_act(situation(lateral=1.0), config) == -0.5


def test_output_clamped():
    config = ExpertConfig(k_lateral=5.0)
    assert oracle_act(situation(lateral=10.0), config) == -1.0


def test_mirrored_scene_negates_command():
    config = ExpertConfig()
    scene = situation(lateral=0.4, heading=0.2, obstacle_distance=1.2,
                      obstacle_id="tree3:trunk", obstacle_point=(11.0, 1.0, 1.8))
    mirrored = situation(lateral=-0.4, heading=-0.2, obstacle_distance=1.2,
                         obstacle_id="tree3:trunk", obstacle_point=(11.0, -1.0, 1.8))
    assert abs(oracle_act(scene, config) + oracle_act(mirrored, config)) < 1e-12


def test_hover_centerline_never_intervenes():
    config = ExpertConfig()
    expert = OracleExpert(config)
    for _ in range(100):
        assert not expert.update_takeover(situation())


def test_ttc_trigger_head_on_trunk():
    config = ExpertConfig(ttc_threshold=2.0)
    scene = situation(obstacle_distance=1.0, obstacle_id="tree0:trunk",
                      obstacle_point=(11.3, 0.0, 1.8), velocity=(0.6, 0.0, 0.0))
    assert abs(time_to_collision(scene) - 1.0 / 0.6) < 1e-9
    assert oracle_should_intervene(scene, config)
    assert not oracle_should_intervene(scene, ExpertConfig(ttc_threshold=1.0))


def test_bound_triggers():
    config = ExpertConfig(lateral_bound=1.0, heading_bound=0.5)
    assert oracle_should_intervene(situation(lateral=1.2), config)
    assert oracle_should_intervene(situation(heading=0.6), config)
    assert not oracle_should_intervene(situation(lateral=0.5, heading=0.2), config)


def test_release_needs_dwell():
    config = ExpertConfig(release_dwell=10)
    released, dwell = oracle_should_release(situation(), 0, config)
    assert not released and dwell == 1
    for expected in range(2, 10):
        released, dwell = oracle_should_release(situation(), dwell, config)
        assert dwell == expected
        assert not released
    released, dwell = oracle_should_release(situation(), dwell, config)
    assert released


def test_out_of_envelope_resets_dwell():
    config = ExpertConfig(release_dwell=5, lateral_bound=1.0)
    _, dwell = oracle_should_release(situation(), 3, config)
    assert dwell == 4
    _, dwell = oracle_should_release(situation(lateral=0.9), dwell, config)
    assert dwell == 0  # 0.9 > margin * bound: not in release envelope


def test_repulsion_steers_away_from_side_obstacle():
    config = ExpertConfig(k_lateral=0.0, k_heading=0.0, repulsion_gain=1.0,
                          repulsion_range=2.0)
    left_obstacle = situation(obstacle_distance=1.0, obstacle_id="tree1:branch0",
                              obstacle_point=(11.0, 0.9, 1.8))
    right_obstacle = situation(obstacle_distance=1.0, obstacle_id="tree1:branch0",
                               obstacle_point=(11.0, -0.9, 1.8))
    assert oracle_act(left_obstacle, config) < 0  # steer right, away from left
    assert oracle_act(right_obstacle, config) > 0
    far = situation(obstacle_distance=3.0, obstacle_id="tree1:branch0",
                    obstacle_point=(13.0, 1.0, 1.8))
    assert oracle_act(far, config) == 0.0
