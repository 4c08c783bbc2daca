"""JSON layout for scenes, episodes, statistics and dataset manifests.

Grid encoding: row-major run-length string of ``<count><symbol>`` tokens with
``.`` for free and ``#`` for obstacle cells, e.g. ``"3#2.1#"``.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import re
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .scenegen import (
    EpisodeSpec,
    Landmark,
    LandmarkList,
    PlacedObject,
    Room,
    RoomObjectStats,
    Scene,
    ScenegenConfig,
)

FORMAT_VERSION = 1
_SYMBOL = {0: ".", 1: "#"}
_VALUE = {".": 0, "#": 1}
_TOKEN = re.compile(r"(\d+)([.#])")


def stable_hash(obj: Any) -> str:
    """Short sha256 of the canonical JSON encoding."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _jsonable(o: Any) -> Any:
    if dataclasses.is_dataclass(o):
        return {f.name: getattr(o, f.name) for f in dataclasses.fields(o)}
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    raise TypeError(f"not serialisable: {type(o)}")


def config_hash(config: Any) -> str:
    return stable_hash(config)


def rle_encode(grid: np.ndarray) -> str:
    flat = np.asarray(grid, dtype=np.uint8).ravel()
    if flat.size == 0:
        return ""
    change = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [flat.size]])
    return "".join(f"{e - s}{_SYMBOL[int(flat[s])]}" for s, e in zip(starts, ends))


def rle_decode(text: str, shape: tuple[int, int]) -> np.ndarray:
    vals = []
    consumed = 0
    for m in _TOKEN.finditer(text):
        vals.append(np.full(int(m.group(1)), _VALUE[m.group(2)], dtype=np.uint8))
        consumed += len(m.group(0))
    if consumed != len(text):
        raise ValueError("malformed run-length grid string")
    flat = np.concatenate(vals) if vals else np.zeros(0, dtype=np.uint8)
    if flat.size != shape[0] * shape[1]:
        raise ValueError(f"grid has {flat.size} cells, expected {shape[0] * shape[1]}")
    return flat.reshape(shape)


def _row_runs(cells: np.ndarray) -> list[list[int]]:
    runs: list[list[int]] = []
    for r, c in sorted(map(tuple, cells.tolist())):
        if runs and runs[-1][0] == r and runs[-1][2] == c:
            runs[-1][2] = c + 1
        else:
            runs.append([r, c, c + 1])
    return runs


def scene_to_dict(scene: Scene) -> dict:
    return {
        "version": FORMAT_VERSION,
        "scene_id": scene.scene_id,
        "seed": scene.seed,
        "cell_size": scene.cell_size,
        "shape": list(scene.shape),
        "grid": rle_encode(scene.grid),
        "rooms": [
            {"id": r.id, "room_type": r.room_type, "center": list(r.center),
             "row_runs": _row_runs(r.cells)}
            for r in scene.rooms
        ],
        "objects": [
            {"category": o.category, "position": list(o.position), "room_id": o.room_id,
             "cells": [list(c) for c in o.cells]}
            for o in scene.objects
        ],
        "landmarks": [{"room_type": lm.room_type, "center": list(lm.center)}
                      for lm in scene.landmarks],
    }


def scene_from_dict(d: dict) -> Scene:
    if d.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported scene version {d.get('version')}")
    shape = tuple(d["shape"])
    grid = rle_decode(d["grid"], shape)
    grid.flags.writeable = False
    rooms = []
    for rd in d["rooms"]:
        cells = np.array([[r, c] for r, a, b in rd["row_runs"] for c in range(a, b)],
                         dtype=np.int64).reshape(-1, 2)
        cells.flags.writeable = False
        rooms.append(Room(rd["id"], rd["room_type"], cells, tuple(rd["center"])))
    objects = tuple(
        PlacedObject(o["category"], tuple(o["position"]), o["room_id"],
                     tuple(tuple(c) for c in o["cells"]))
        for o in d["objects"])
    landmarks = LandmarkList(tuple(Landmark(lm["room_type"], tuple(lm["center"]))
                                   for lm in d["landmarks"]))
    return Scene(grid, tuple(rooms), objects, landmarks, d["seed"], d["cell_size"], d["scene_id"])


def episode_to_dict(ep: EpisodeSpec) -> dict:
    return dataclasses.asdict(ep) | {"start_position": list(ep.start_position)}


def episode_from_dict(d: dict) -> EpisodeSpec:
    return EpisodeSpec(d["scene_id"], tuple(d["start_position"]), d["start_heading"],
                       d["goal_category"], d["shortest_path_length"], d.get("episode_id", 0))


def stats_to_dict(stats: RoomObjectStats) -> dict:
    return {
        "table": [[rt, c, p] for (rt, c), p in sorted(stats.table.items())],
        "counts": [[rt, c, n] for (rt, c), n in sorted(stats.counts.items())],
    }


def stats_from_dict(d: dict) -> RoomObjectStats:
    return RoomObjectStats({(rt, c): p for rt, c, p in d["table"]},
                           {(rt, c): n for rt, c, n in d.get("counts", [])})


def scenegen_config_to_dict(config: ScenegenConfig) -> dict:
    d = dataclasses.asdict(config)
    d["object_priors"] = {k: dict(v) for k, v in config.object_priors.items()}
    return d


def scenegen_config_from_dict(d: dict) -> ScenegenConfig:
    kw = dict(d)
    for key in ("grid_shape", "room_count", "room_types", "required_rooms", "categories"):
        if key in kw and kw[key] is not None:
            kw[key] = tuple(kw[key])
    if kw.get("room_type_weights") is not None:
        kw["room_type_weights"] = tuple(kw["room_type_weights"])
    return ScenegenConfig(**kw)


def write_json(path: Path, obj: Any) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True, default=_jsonable) + "\n")


def read_json(path: Path) -> Any:
    return json.loads(Path(path).read_text())


@dataclasses.dataclass
class Dataset:
    """Scenes plus an episode list, loaded from a manifest."""

    scenes: dict[str, Scene]
    episodes: list[EpisodeSpec]
    stats: RoomObjectStats | None
    manifest: dict

    def scene_of(self, ep: EpisodeSpec) -> Scene:
        return self.scenes[ep.scene_id]


def write_dataset(out_dir: Path, scenes: Iterable[Scene], episodes: list[EpisodeSpec],
                  stats: RoomObjectStats | None, provenance: dict) -> dict:
    out_dir = Path(out_dir)
    files = []
    for scene in scenes:
        name = f"scenes/{scene.scene_id}.json"
        write_json(out_dir / name, scene_to_dict(scene))
        files.append(name)
    write_json(out_dir / "episodes.json", [episode_to_dict(e) for e in episodes])
    if stats is not None:
        write_json(out_dir / "stats.json", stats_to_dict(stats))
    manifest = {
        "version": FORMAT_VERSION,
        "scene_files": files,
        "episodes_file": "episodes.json",
        "stats_file": "stats.json" if stats is not None else None,
        **provenance,
    }
    write_json(out_dir / "manifest.json", manifest)
    return manifest


def load_dataset(path: Path) -> Dataset:
    path = Path(path)
    root = path.parent if path.is_file() else path
    manifest = read_json(root / "manifest.json")
    scenes = {}
    for name in manifest["scene_files"]:
        s = scene_from_dict(read_json(root / name))
        scenes[s.scene_id] = s
    episodes = [episode_from_dict(e) for e in read_json(root / manifest["episodes_file"])]
    stats = None
    if manifest.get("stats_file"):
        stats = stats_from_dict(read_json(root / manifest["stats_file"]))
    return Dataset(scenes, episodes, stats, manifest)
