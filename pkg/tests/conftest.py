from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hlponav.scenegen import FREE, OBSTACLE, ScenegenConfig, generate_scene, scene_from_arrays


def box_grid(h: int, w: int) -> np.ndarray:
    """Free interior with a one-cell wall border."""
    g = np.full((h, w), FREE, dtype=np.uint8)
    g[0, :] = g[-1, :] = g[:, 0] = g[:, -1] = OBSTACLE
    return g


def interior(h: int, w: int, r0: int = 1, c0: int = 1) -> np.ndarray:
    rr, cc = np.mgrid[r0:r0 + h, c0:c0 + w]
    return np.stack([rr.ravel(), cc.ravel()], axis=1)


@pytest.fixture
def empty_room():
    """A 5 x 5 m room with no objects."""
    return scene_from_arrays(box_grid(22, 22), [("lounge", interior(20, 20))], scene_id="room")


@pytest.fixture
def couch_room():
    """A 5 x 5 m room with one couch against the east wall."""
    return scene_from_arrays(box_grid(22, 22), [("lounge", interior(20, 20))],
                             [("couch", [(10, 19), (10, 20), (11, 19), (11, 20)])],
                             scene_id="couch_room")


@pytest.fixture(scope="session")
def house():
    return generate_scene(ScenegenConfig(), 3, "house_3")


def write_tiny_checkpoints(root: Path, layout: str = "flat") -> dict:
    """Random-init policies for every skill kind; ``layout="runs"`` nests them as <kind>/checkpoint.npz."""
    from hlponav.rlcore import Adam, NetSpec, init_params, save_checkpoint
    from hlponav.skills import POLICY_KINDS, obs_dim
    out = {}
    for i, kind in enumerate(POLICY_KINDS):
        spec = NetSpec(obs_dim(kind), 8, 8)
        p = init_params(spec, np.random.default_rng(i))
        path = root / kind / "checkpoint.npz" if layout == "runs" else root / f"{kind}.npz"
        out[kind] = save_checkpoint(path, p, spec, Adam(), {"skill": kind})
    return out


@pytest.fixture(scope="session")
def tiny_checkpoints(tmp_path_factory):
    return write_tiny_checkpoints(tmp_path_factory.mktemp("ck"))


# ------------------------------------------------------------ acceptance report

_VERDICTS: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when != "call":
        return
    n, title = mark.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _VERDICTS[n] = ("PASS" if call.excinfo is None else "FAIL", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_VERDICTS):
        verdict, title, detail = _VERDICTS[n]
        terminalreporter.write_line(f"[{verdict}] criterion {n:2d} {title}: {detail}")
