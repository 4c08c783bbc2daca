import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hlponav.mapper import (FREE, OBSTACLE, UNKNOWN, OccupancyMap, PlanningError,
                            extract_frontiers, fmm_distance_field, frontier_mask, gt_map,
                            integrate_scan, plan_next_action, plan_path, steer, traversable_mask)
from hlponav.scenegen import field_distance, point_distance_field, start_cells
from hlponav.simcore import Action, AgentPose, ObjectNavEnv, SimConfig
from hlponav.scenegen import EpisodeSpec
from oracles import components8, dijkstra_heapq, frontier_brute


def random_state(rng, h, w):
    return rng.choice(np.array([UNKNOWN, FREE, OBSTACLE], dtype=np.int8), size=(h, w),
                      p=[0.2, 0.55, 0.25])


# ----------------------------------------------------------------- integration

def one_ray(depth):
    omap = OccupancyMap((20, 20), 0.25)
    pose = AgentPose((0.625, 2.625), 0.0)  # centre of cell (10, 2)
    freed = integrate_scan(omap, pose, np.array([depth]), np.array([0.0]), 5.0)
    return omap, freed


def test_ray_frees_cells_and_marks_obstacle():
    omap, freed = one_ray(2.0)
    assert freed == 8
    assert (omap.state == OBSTACLE).sum() == 1
    assert omap.state[10, 10] == OBSTACLE
    assert (omap.state[10, 2:10] == FREE).all()


def test_max_range_ray_marks_no_obstacle():
    omap = OccupancyMap((10, 10), 0.25)
    integrate_scan(omap, AgentPose((1.0, 1.0), 0.0), np.array([5.0]), np.array([0.0]), 5.0)
    assert (omap.state == OBSTACLE).sum() == 0
    assert (omap.state == FREE).sum() > 0


def test_integration_is_idempotent():
    rng = np.random.default_rng(0)
    omap = OccupancyMap((40, 40), 0.25)
    pose = AgentPose((5.0, 5.0), 0.3)
    depth = rng.uniform(0.5, 5.0, 32)
    offs = SimConfig().ray_offsets()
    integrate_scan(omap, pose, depth, offs, 5.0)
    before = omap.state.copy()
    assert integrate_scan(omap, pose, depth, offs, 5.0) == 0
    np.testing.assert_array_equal(omap.state, before)


def test_map_grows_to_contain_rays():
    omap = OccupancyMap((4, 4), 0.25)
    integrate_scan(omap, AgentPose((0.5, 0.5), math.pi), np.array([3.0]), np.array([0.0]), 5.0)
    assert omap.origin[0] < -2.0
    r, c = omap.cell_of(0.5 - 3.0 - 0.01, 0.5)
    assert omap.state[r, c] == OBSTACLE


# -------------------------------------------------------------------- frontiers

def test_frontier_mask_matches_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(100):
        state = random_state(rng, int(rng.integers(5, 40)), int(rng.integers(5, 40)))
        got = {tuple(map(int, rc)) for rc in np.argwhere(frontier_mask(state))}
        assert got == frontier_brute(state, UNKNOWN, FREE)


def test_frontier_clusters_are_components():
    rng = np.random.default_rng(2)
    for _ in range(30):
        omap = OccupancyMap((25, 25))
        omap.state[:] = random_state(rng, 25, 25)
        fronts = extract_frontiers(omap)
        ref = components8(frontier_brute(omap.state))
        assert sorted(len(c) for c in ref) == sorted(f.size for f in fronts)
        for f in fronts:
            assert {tuple(map(int, rc)) for rc in f.cells} in ref
        sizes = [f.size for f in fronts]
        assert sizes == sorted(sizes, reverse=True)


def test_frontier_min_size_filter():
    omap = OccupancyMap((10, 10))
    omap.state[5, 5] = FREE
    assert len(extract_frontiers(omap, 1)) == 1
    assert extract_frontiers(omap, 2) == []


# ---------------------------------------------------------------------- planning

def test_wavefront_matches_dijkstra_oracle():
    rng = np.random.default_rng(3)
    for _ in range(100):
        omap = OccupancyMap((100, 100))
        omap.state[:] = random_state(rng, 100, 100)
        free = np.argwhere(omap.state != OBSTACLE)
        src = free[rng.choice(len(free), size=3, replace=False)]
        field = fmm_distance_field(omap, src, obstacle_inflation=0)
        ref = dijkstra_heapq(omap.state != OBSTACLE, [tuple(s) for s in src], 0.25)
        assert np.array_equal(field.values, ref)


def test_corridor_distance():
    omap = OccupancyMap((3, 12))
    omap.state[:] = OBSTACLE
    omap.state[1, 1:11] = FREE
    field = fmm_distance_field(omap, [(1, 1)], obstacle_inflation=0)
    assert field.at_cell(1, 10) == pytest.approx(9 * 0.25, abs=1e-12)
    assert field.at_cell(0, 0) == math.inf
    assert field.at_cell(-1, 3) == math.inf


def test_sources_blocked_by_inflation():
    omap = OccupancyMap((5, 5))
    omap.state[:] = FREE
    omap.state[2, 3] = OBSTACLE
    with pytest.raises(PlanningError):
        fmm_distance_field(omap, [(2, 2)], obstacle_inflation=1)
    with pytest.raises(PlanningError):
        fmm_distance_field(omap, np.zeros((0, 2)))


def test_unknown_traversability_switch():
    omap = OccupancyMap((3, 3))
    omap.state[1, 1] = FREE
    assert traversable_mask(omap, 0, True).sum() == 9
    assert traversable_mask(omap, 0, False).sum() == 1


def test_target_behind_turns_left():
    pose = AgentPose((0.0, 0.0), 0.0)
    assert steer(pose, (-1.0, 0.0), math.radians(30)) == Action.TURN_LEFT
    assert steer(pose, (1.0, 0.1), math.radians(30)) == Action.FORWARD
    assert steer(pose, (0.0, -1.0), math.radians(30)) == Action.TURN_RIGHT


def test_planner_rollout_reaches_goal(house):
    cs = house.cell_size
    omap = gt_map(house.blocked, cs)
    rng = np.random.default_rng(4)
    cells = start_cells(house, 1)
    sim = SimConfig(max_steps=2000)
    for _ in range(5):
        a, b = cells[rng.choice(len(cells), 2, replace=False)]
        start = ((a[1] + 0.5) * cs, (a[0] + 0.5) * cs)
        goal = ((b[1] + 0.5) * cs, (b[0] + 0.5) * cs)
        geo = field_distance(point_distance_field(house, *goal), *start, cs)
        ep = EpisodeSpec(house.scene_id, start, 0.0, "", geo)
        env = ObjectNavEnv(house, sim)
        env.reset(ep)
        budget = 4 * max(int(math.ceil(geo / 0.25)), 1) + 12  # plus a full turn in place
        steps = 0
        while math.dist(env.pose.position, goal) > 0.25 and steps < budget:
            env.step(plan_next_action(omap, env.pose, goal, sim.turn_angle))
            steps += 1
        assert math.dist(env.pose.position, goal) <= 0.25, (start, goal, steps, budget)


def test_plan_to_unreachable_goal_picks_nearest_reachable():
    omap = OccupancyMap((10, 10))
    omap.state[:] = FREE
    omap.state[:, 5] = OBSTACLE
    plan = plan_path(omap, AgentPose((0.375, 1.125), 0.0), (2.125, 1.125), math.radians(30),
                     obstacle_inflation=0, unknown_traversable=False)
    # the last free column before the wall
    assert omap.center_of(*plan.goal_cell)[0] == pytest.approx(4.5 * 0.25)
    assert math.isfinite(plan.path_cost)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_wavefront_triangle_inequality(seed):
    rng = np.random.default_rng(seed)
    omap = OccupancyMap((15, 15))
    omap.state[:] = random_state(rng, 15, 15)
    free = np.argwhere(omap.state != OBSTACLE)
    if len(free) < 2:
        return
    s = free[0]
    d = fmm_distance_field(omap, [s], 0).values
    # each finite cell is reachable from a neighbour one step cheaper
    for r, c in np.argwhere(np.isfinite(d)):
        if (r, c) == tuple(s):
            assert d[r, c] == 0.0
            continue
        assert any(abs(d[r, c] - (d[nr, nc] + w)) < 1e-9
                   for nr, nc, w in [(r + dr, c + dc, 0.25 * math.hypot(dr, dc))
                                     for dr in (-1, 0, 1) for dc in (-1, 0, 1) if dr or dc]
                   if 0 <= nr < 15 and 0 <= nc < 15 and np.isfinite(d[nr, nc]))
