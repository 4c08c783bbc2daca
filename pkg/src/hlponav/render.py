"""Top-down SVG maps of a scene with an episode trajectory coloured by skill."""
from __future__ import annotations

import html
import json
from itertools import groupby
from typing import Sequence

from .scenegen import OBSTACLE, EpisodeSpec, Scene

SKILL_COLORS = {
    "pointnav": "#1f77b4",
    "explore": "#2ca02c",
    "reacher": "#d62728",
    "e2e": "#9467bd",
    "": "#7f7f7f",
}
PX_PER_M = 20.0


def skill_segments(trajectory: Sequence[Sequence]) -> list[tuple[str, int, int]]:
    """Runs of consecutive steps under one skill as ``(tag, first, last)``.

    Step ``k`` is the transition from ``trajectory[k-1]`` to ``trajectory[k]``;
    the runs partition ``1..len(trajectory)-1``.
    """
    out = []
    k = 1
    for tag, grp in groupby(row[4] for row in trajectory[1:]):
        n = sum(1 for _ in grp)
        out.append((tag, k, k + n - 1))
        k += n
    return out


def _blocked_rects(scene: Scene) -> list[tuple[int, int, int]]:
    """Row runs of wall cells as ``(row, col0, length)``."""
    out = []
    for r, row in enumerate(scene.grid == OBSTACLE):
        c = 0
        W = len(row)
        while c < W:
            if row[c]:
                c0 = c
                while c < W and row[c]:
                    c += 1
                out.append((r, c0, c - c0))
            else:
                c += 1
    return out


def render_svg(scene: Scene, log: dict | None = None, episode: EpisodeSpec | None = None,
               landmark_radius: float = 2.0, provenance: dict | None = None) -> str:
    """Draw walls, objects, landmark disks, goal instances and the trajectory."""
    if log is not None and log.get("scene_id") not in (None, scene.scene_id):
        raise ValueError(f"log belongs to scene {log.get('scene_id')!r}, not {scene.scene_id!r}")
    if episode is not None and episode.scene_id != scene.scene_id:
        raise ValueError(f"episode belongs to scene {episode.scene_id!r}, not {scene.scene_id!r}")
    s = PX_PER_M
    cs = scene.cell_size
    H, W = scene.blocked.shape
    goal = (log or {}).get("goal_category") or (episode.goal_category if episode else None)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W * cs * s:.0f}" '
        f'height="{H * cs * s:.0f}" viewBox="0 0 {W * cs * s:.1f} {H * cs * s:.1f}">'
    ]
    if provenance:
        parts.append(f"<metadata>{html.escape(json.dumps(provenance, sort_keys=True))}</metadata>")
    parts.append('<rect width="100%" height="100%" fill="white"/>')
    parts.append('<g id="walls" fill="#333333">')
    for r, c0, n in _blocked_rects(scene):
        parts.append(f'<rect x="{c0 * cs * s:.1f}" y="{r * cs * s:.1f}" '
                     f'width="{n * cs * s:.1f}" height="{cs * s:.1f}"/>')
    parts.append("</g>")

    parts.append('<g id="landmarks">')
    for i, lm in enumerate(scene.landmarks):
        x, y = lm.center
        parts.append(f'<circle class="landmark" data-index="{i}" cx="{x * s:.1f}" cy="{y * s:.1f}" '
                     f'r="{landmark_radius * s:.1f}" fill="#ffbf00" fill-opacity="0.15" '
                     f'stroke="#ffbf00"/>')
        parts.append(f'<text x="{x * s:.1f}" y="{y * s:.1f}" font-size="10" '
                     f'text-anchor="middle">{html.escape(lm.room_type)}</text>')
    parts.append("</g>")

    parts.append('<g id="objects">')
    for obj in scene.objects:
        x0, y0, x1, y1 = obj.bounds(cs)
        is_goal = obj.category == goal
        parts.append(f'<rect class="{"goal" if is_goal else "object"}" '
                     f'x="{x0 * s:.1f}" y="{y0 * s:.1f}" '
                     f'width="{(x1 - x0) * s:.1f}" height="{(y1 - y0) * s:.1f}" '
                     f'fill="{"#e377c2" if is_goal else "#bbbbbb"}">'
                     f'<title>{html.escape(obj.category)}</title></rect>')
    parts.append("</g>")

    traj = (log or {}).get("trajectory") or []
    parts.append('<g id="trajectory" fill="none" stroke-width="2">')
    for tag, a, b in skill_segments(traj):
        pts = " ".join(f"{row[0] * s:.2f},{row[1] * s:.2f}" for row in traj[a - 1:b + 1])
        color = SKILL_COLORS.get(tag, SKILL_COLORS[""])
        parts.append(f'<polyline class="segment" data-skill="{html.escape(tag)}" '
                     f'data-steps="{a}-{b}" stroke="{color}" points="{pts}"/>')
    parts.append("</g>")
    start = traj[0][:2] if traj else (episode.start_position if episode else None)
    if start is not None:
        parts.append(f'<circle id="start" cx="{start[0] * s:.1f}" cy="{start[1] * s:.1f}" '
                     f'r="4" fill="black"/>')
    if traj:
        x, y = traj[-1][:2]
        parts.append(f'<circle id="end" cx="{x * s:.1f}" cy="{y * s:.1f}" r="4" '
                     f'fill="{"#2ca02c" if log.get("success") else "#d62728"}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
