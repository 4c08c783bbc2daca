import math

import numpy as np
import pytest

from hlponav.dataset import load_dataset, rle_decode, rle_encode, scene_from_dict, scene_to_dict, write_dataset
from hlponav.scenegen import (DEFAULT_PRIORS, GenerationError, ScenegenConfig, compute_room_object_stats,
                              generate_scene, goal_distance_field, sample_episodes, viewpoint_cells)
from hlponav.simcore import AgentPose, evaluate_stop
from oracles import dijkstra_heapq


def test_generation_is_deterministic():
    a = generate_scene(ScenegenConfig(), 5, "s")
    b = generate_scene(ScenegenConfig(), 5, "s")
    assert a.fingerprint() == b.fingerprint()
    assert generate_scene(ScenegenConfig(), 6, "s").fingerprint() != a.fingerprint()


@pytest.mark.parametrize("seed", range(8))
def test_free_space_connected_and_rooms_typed(seed):
    from scipy import ndimage
    scene = generate_scene(ScenegenConfig(), seed)
    _, n = ndimage.label(~scene.blocked, structure=np.ones((3, 3)))
    assert n == 1
    lo, hi = ScenegenConfig().room_count
    assert lo <= len(scene.rooms) <= hi
    assert len(scene.landmarks) == len(scene.rooms)
    for obj in scene.objects:
        r, c = obj.cells[0]
        assert scene.room_map[r, c] == obj.room_id
        assert scene.grid[r, c] == 0


def test_required_rooms_are_present():
    cfg = ScenegenConfig(required_rooms=("bathroom", "bathroom", "bathroom", "lounge"))
    for seed in range(5):
        scene = generate_scene(cfg, seed)
        types = [r.room_type for r in scene.rooms]
        assert types.count("bathroom") >= 3 and "lounge" in types


def test_invalid_configs_rejected():
    with pytest.raises(GenerationError):
        generate_scene(ScenegenConfig(room_count=(3, 2)), 0)
    with pytest.raises(GenerationError):
        generate_scene(ScenegenConfig(object_priors={"lounge": {"couch": 1.5}}), 0)
    with pytest.raises(GenerationError):
        generate_scene(ScenegenConfig(required_rooms=("lounge",) * 9), 0)


def test_stats_match_recount():
    scenes = [generate_scene(ScenegenConfig(), s) for s in range(10)]
    stats = compute_room_object_stats(scenes)
    counts = {}
    for s in scenes:
        for o in s.objects:
            key = (s.rooms[o.room_id].room_type, o.category)
            counts[key] = counts.get(key, 0) + 1
    assert dict(stats.counts) == counts
    for cat in stats.categories():
        total = sum(stats.prob(rt, cat) for rt, c in stats.table if c == cat)
        assert total == pytest.approx(1.0, abs=1e-12)
    assert stats.prob("nowhere", "couch") == 0.0
    with pytest.raises(ValueError):
        compute_room_object_stats([])


def test_bathroom_priors_favour_sinks_and_toilets():
    assert DEFAULT_PRIORS["bathroom"]["toilet"] >= 0.9
    assert DEFAULT_PRIORS["bathroom"]["sink"] >= 0.9


def test_viewpoints_satisfy_stop_rule(house):
    cat = house.categories_present()[0]
    for r, c in viewpoint_cells(house, cat)[:50]:
        pose = AgentPose(((c + 0.5) * 0.25, (r + 0.5) * 0.25), 0.0)
        assert evaluate_stop(pose, house, cat)


def test_episode_geodesics_match_oracle(house):
    cat = house.categories_present()[0]
    eps = sample_episodes(house, cat, 20, 3.0, seed=1)
    src = [tuple(v) for v in viewpoint_cells(house, cat)]
    ref = dijkstra_heapq(~house.blocked, src, house.cell_size)
    np.testing.assert_array_equal(goal_distance_field(house, cat), ref)
    for ep in eps:
        assert ep.shortest_path_length >= 3.0
        c, r = int(ep.start_position[0] / 0.25), int(ep.start_position[1] / 0.25)
        assert ep.shortest_path_length == ref[r, c]
        assert -math.pi <= ep.start_heading <= math.pi
    assert [e.episode_id for e in eps] == list(range(20))


def test_sampling_is_seeded(house):
    cat = house.categories_present()[0]
    assert sample_episodes(house, cat, 5, 2.0, 3) == sample_episodes(house, cat, 5, 2.0, 3)


def test_missing_category_raises(house):
    with pytest.raises(GenerationError):
        sample_episodes(house, "spaceship", 1, 1.0, 0)
    with pytest.raises(GenerationError):
        sample_episodes(house, house.categories_present()[0], 1, 1e6, 0)


# --------------------------------------------------------------------- dataset

def test_rle_round_trip():
    rng = np.random.default_rng(0)
    g = (rng.random((13, 17)) < 0.4).astype(np.uint8)
    np.testing.assert_array_equal(rle_decode(rle_encode(g), g.shape), g)
    assert rle_encode(np.array([[1, 1, 1, 0, 0, 1]], dtype=np.uint8)) == "3#2.1#"


def test_scene_dict_round_trip(house):
    back = scene_from_dict(scene_to_dict(house))
    assert back.fingerprint() == house.fingerprint()
    np.testing.assert_array_equal(back.blocked, house.blocked)
    assert back.landmarks == house.landmarks


def test_dataset_round_trip(tmp_path, house):
    cat = house.categories_present()[0]
    eps = sample_episodes(house, cat, 4, 2.0, 0)
    stats = compute_room_object_stats([house])
    write_dataset(tmp_path, [house], eps, stats, {"seed": 3})
    ds = load_dataset(tmp_path)
    assert ds.episodes == eps
    assert ds.stats.table == stats.table
    assert ds.manifest["seed"] == 3
    assert ds.scene_of(eps[0]).fingerprint() == house.fingerprint()
