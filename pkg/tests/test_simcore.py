import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import box_grid, interior
from hlponav.scenegen import EpisodeSpec, Landmark, OBSTACLE, scene_from_arrays
from hlponav.simcore import (Action, AgentPose, EpisodeError, ObjectNavEnv, SemanticNoiseModel,
                             SimConfig, apply_semantic_noise, evaluate_stop, inside_landmark_area,
                             make_noise_state, pose_from_odometry, world_to_gps)


def episode(x=2.625, y=2.625, heading=0.0, cat="couch"):
    return EpisodeSpec("fixture", (x, y), heading, cat, 1.0)


def test_turn_left_then_right_restores_pose(empty_room):
    env = ObjectNavEnv(empty_room)
    env.reset(episode(cat=""))
    before = env.pose
    env.step(Action.TURN_LEFT)
    assert env.pose != before
    env.step(Action.TURN_RIGHT)
    assert env.pose == before


def test_full_turn_is_exact(empty_room):
    env = ObjectNavEnv(empty_room)
    obs0 = env.reset(episode(cat="", heading=0.7))
    for _ in range(12):
        obs = env.step(Action.TURN_LEFT).observation
    assert env.pose.position == (2.625, 2.625)
    assert math.isclose(env.pose.heading, 0.7, abs_tol=1e-12)
    np.testing.assert_allclose(obs.depth, obs0.depth, atol=1e-9)


def test_forward_moves_one_step(empty_room):
    env = ObjectNavEnv(empty_room)
    env.reset(episode(cat=""))
    res = env.step(Action.FORWARD)
    assert env.pose.position == pytest.approx((2.875, 2.625), abs=1e-12)
    assert not res.info["collision"]
    assert res.info["path_length"] == 0.25


def test_forward_into_wall_collides(empty_room):
    env = ObjectNavEnv(empty_room)
    env.reset(episode(x=5.125, cat=""))  # last free column before the east wall
    res = env.step(Action.FORWARD)
    assert res.info["collision"]
    assert env.pose.position == (5.125, 2.625)
    assert env.path_length == 0.0


def test_path_length_counts_forward_displacement(empty_room):
    rng = np.random.default_rng(0)
    env = ObjectNavEnv(empty_room, SimConfig(max_steps=200))
    env.reset(episode(cat=""))
    travelled = 0.0
    while not env.done:
        prev = env.pose.position
        env.step(int(rng.choice([0, 0, 1, 2])))
        travelled += math.dist(prev, env.pose.position)
    assert env.path_length == pytest.approx(travelled, abs=1e-9)
    assert env.steps == 200


def test_step_after_done_raises(empty_room):
    env = ObjectNavEnv(empty_room)
    env.reset(episode(cat=""))
    assert env.step(Action.STOP).done
    with pytest.raises(EpisodeError):
        env.step(Action.FORWARD)


def test_occupied_start_raises(empty_room):
    with pytest.raises(EpisodeError):
        ObjectNavEnv(empty_room).reset(episode(x=0.1, y=0.1))


# ------------------------------------------------------------------ stop rule

def wall_scene():
    """Couch at columns 19-20 with a full-height wall at column 16."""
    g = box_grid(22, 22)
    g[1:21, 16] = OBSTACLE
    return scene_from_arrays(g, [("lounge", interior(20, 15)), ("lounge", interior(20, 4, 1, 17))],
                             [("couch", [(10, 19), (10, 20), (11, 19), (11, 20)])])


def test_stop_distance_threshold(couch_room):
    # couch footprint spans x in [4.75, 5.25], y in [2.5, 3.0]
    assert evaluate_stop(AgentPose((4.75 - 0.99, 2.75), 0.0), couch_room, "couch")
    assert not evaluate_stop(AgentPose((4.75 - 1.01, 2.75), 0.0), couch_room, "couch")
    assert not evaluate_stop(AgentPose((4.0, 2.75), 0.0), couch_room, "bed")


def test_stop_requires_line_of_sight():
    scene = wall_scene()
    # 0.9 m from the couch, but the wall at x in [4.0, 4.25] blocks the view
    assert not evaluate_stop(AgentPose((4.75 - 0.9, 2.75), 0.0), scene, "couch")
    assert evaluate_stop(AgentPose((4.375, 2.75), 0.0), scene, "couch")


def test_stop_success_ends_episode(couch_room):
    env = ObjectNavEnv(couch_room)
    env.reset(episode(x=4.125, y=2.625))
    res = env.step(Action.STOP)
    assert res.done and res.info["success"] and env.success


def test_landmark_disk_is_closed():
    lm = Landmark("lounge", (1.0, 1.0))
    assert inside_landmark_area(AgentPose((3.0, 1.0), 0.0), lm, 2.0)
    assert not inside_landmark_area(AgentPose((3.0001, 1.0), 0.0), lm, 2.0)
    with pytest.raises(ValueError):
        inside_landmark_area(AgentPose((0.0, 0.0), 0.0), lm, 0.0)


# -------------------------------------------------------------------- sensors

def test_reset_observation(empty_room):
    env = ObjectNavEnv(empty_room)
    obs = env.reset(episode(cat=""))
    np.testing.assert_array_equal(obs.gps, [0.0, 0.0])
    assert obs.compass == 0.0 and obs.prev_action == -1
    mid = SimConfig().num_rays // 2
    assert obs.depth[mid] == pytest.approx(5.25 - 2.625, abs=1e-9)
    assert obs.depth.shape == (32,) and obs.goal_mask.shape == (32,)


def test_depth_is_capped_at_range():
    g = box_grid(60, 60)
    scene = scene_from_arrays(g, [("lounge", interior(58, 58))])
    obs = ObjectNavEnv(scene).reset(episode(x=2.0, y=7.5, cat=""))
    assert obs.depth.max() == 5.0


def test_goal_mask_sees_couch(couch_room):
    obs = ObjectNavEnv(couch_room).reset(episode())
    assert obs.goal_mask.any()
    mid = SimConfig().num_rays // 2
    assert obs.goal_mask[mid]


def test_all_false_negatives_blank_the_mask(couch_room):
    obs = ObjectNavEnv(couch_room).reset(episode(), SemanticNoiseModel(1.0, 0.0, 3))
    assert not obs.goal_mask.any()


def test_false_positive_rate_monte_carlo():
    n = 100_000
    shape = (400, 250)
    noise = SemanticNoiseModel(0.0, 0.05, 7)
    state = make_noise_state(noise, shape)
    idx = np.arange(n)
    out = apply_semantic_noise(np.zeros(n, dtype=bool), idx // 250, idx % 250, noise, state)
    assert abs(out.mean() - 0.05) <= 0.005


def test_noise_is_persistent_per_surface(couch_room):
    env = ObjectNavEnv(couch_room)
    noise = SemanticNoiseModel(0.5, 0.3, 11)
    obs1 = env.reset(episode(), noise)
    obs2 = env.step(Action.TURN_LEFT).observation
    obs3 = env.step(Action.TURN_RIGHT).observation
    np.testing.assert_array_equal(obs1.goal_mask, obs3.goal_mask)
    assert obs2 is not obs3


def test_noise_rates_validated():
    with pytest.raises(ValueError):
        SemanticNoiseModel(1.5, 0.0)


def test_missed_rays_never_become_positives():
    noise = SemanticNoiseModel(0.0, 1.0, 0)
    state = make_noise_state(noise, (5, 5))
    out = apply_semantic_noise(np.zeros(3, dtype=bool), np.array([-1, 2, -1]),
                               np.array([-1, 2, -1]), noise, state)
    np.testing.assert_array_equal(out, [False, True, False])


# ------------------------------------------------------------------ odometry

@settings(max_examples=30, deadline=None)
@given(st.floats(-math.pi, math.pi), st.lists(st.sampled_from([0, 1, 2]), max_size=40))
def test_odometry_recovers_world_pose(heading, actions):
    from conftest import box_grid as bg
    scene = scene_from_arrays(bg(22, 22), [("lounge", interior(20, 20))])
    ep = episode(heading=heading, cat="")
    env = ObjectNavEnv(scene)
    obs = env.reset(ep)
    for a in actions:
        obs = env.step(a).observation
    pose = pose_from_odometry(ep, obs)
    assert pose.position == pytest.approx(env.pose.position, abs=1e-9)
    assert math.isclose(math.cos(pose.heading - env.pose.heading), 1.0, abs_tol=1e-12)
    np.testing.assert_allclose(world_to_gps(ep, *env.pose.position), obs.gps, atol=1e-9)


def test_gps_is_start_frame(empty_room):
    env = ObjectNavEnv(empty_room)
    env.reset(episode(heading=math.pi / 2, cat=""))
    obs = env.step(Action.FORWARD).observation
    np.testing.assert_allclose(obs.gps, [0.25, 0.0], atol=1e-12)
