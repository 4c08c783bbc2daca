"""Episode scoring (Success, SPL, SoftSPL) and aggregation over repeated runs."""
from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

METRICS = ("success", "spl", "soft_spl")


@dataclass(frozen=True)
class EpisodeResult:
    episode_id: int
    scene_id: str
    goal_category: str
    success: bool
    shortest_path: float      # l_i
    path_length: float        # p_i
    steps: int
    initial_distance: float   # geodesic to the success region at the start
    final_distance: float
    stopped: bool = False
    method: str = ""
    condition: str = "gt"
    seed: int = 0

    def __post_init__(self):
        if self.path_length < 0:
            raise ValueError("path length must be non-negative")
        if not self.shortest_path > 0:
            raise ValueError("shortest path length must be positive")
        if self.success and not self.stopped:
            raise ValueError("a successful episode must end with Stop")

    @property
    def key(self) -> tuple[str, int]:
        return (self.scene_id, self.episode_id)


def episode_spl(r: EpisodeResult) -> float:
    if not r.success:
        return 0.0
    return float(r.shortest_path / max(r.path_length, r.shortest_path))


def episode_soft_spl(r: EpisodeResult) -> float:
    if r.initial_distance <= 0:
        progress = 1.0
    else:
        progress = max(0.0, 1.0 - r.final_distance / r.initial_distance)
    return float(progress * r.shortest_path / max(r.path_length, r.shortest_path))


def success_rate(results: Sequence[EpisodeResult]) -> float:
    return _mean([float(r.success) for r in results])


def spl(results: Sequence[EpisodeResult]) -> float:
    return _mean([episode_spl(r) for r in results])


def soft_spl(results: Sequence[EpisodeResult]) -> float:
    return _mean([episode_soft_spl(r) for r in results])


def _mean(values: list[float]) -> float:
    if not values:
        raise ValueError("at least one episode required")
    return float(np.mean(values))


def summarize(results: Sequence[EpisodeResult]) -> dict[str, float]:
    return {"success": success_rate(results), "spl": spl(results),
            "soft_spl": soft_spl(results), "episodes": len(results)}


@dataclass
class SuiteReport:
    method: str
    condition: str
    runs: list[dict[str, float]]
    mean: dict[str, float]
    dispersion: dict[str, float]

    def row(self) -> dict:
        out = {"method": self.method, "condition": self.condition, "runs": len(self.runs)}
        for m in METRICS:
            out[m] = self.mean[m]
            out[f"{m}_dispersion"] = self.dispersion[m]
        return out


def aggregate(per_run: Sequence[Sequence[EpisodeResult]], method: str = "",
              condition: str = "") -> SuiteReport:
    """Means over runs and max-minus-min dispersion per metric."""
    if not per_run:
        raise ValueError("no runs to aggregate")
    keys = sorted(r.key for r in per_run[0])
    for i, run in enumerate(per_run[1:], 1):
        if sorted(r.key for r in run) != keys:
            raise ValueError(f"run {i} covers a different episode set than run 0")
    runs = [summarize(run) for run in per_run]
    mean = {m: float(np.mean([r[m] for r in runs])) for m in METRICS}
    disp = {m: float(max(r[m] for r in runs) - min(r[m] for r in runs)) for m in METRICS}
    if not method and per_run[0]:
        method, condition = per_run[0][0].method, per_run[0][0].condition
    return SuiteReport(method, condition, runs, mean, disp)


_FIELDS = [f.name for f in dataclasses.fields(EpisodeResult)]


def write_results_csv(path: Path, results: Iterable[EpisodeResult], run: int | None = None,
                      extra: dict | None = None) -> None:
    """Append episode rows; ``extra`` adds constant trailing columns (e.g. provenance)."""
    path = Path(path)
    new = not path.exists()
    extra = extra or {}
    with open(path, "a", newline="") as f:
        w = csv.writer(f)
        if new:
            w.writerow(["run"] + _FIELDS + ["spl", "soft_spl"] + list(extra))
        for r in results:
            w.writerow([run if run is not None else ""]
                       + [getattr(r, k) for k in _FIELDS]
                       + [repr(episode_spl(r)), repr(episode_soft_spl(r))]
                       + list(extra.values()))


def read_results_csv(path: Path) -> list[tuple[int | None, EpisodeResult]]:
    out = []
    types = {f.name: f.type for f in dataclasses.fields(EpisodeResult)}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            kw = {}
            for k in _FIELDS:
                v, t = row[k], types[k]
                if t == "bool":
                    kw[k] = v == "True"
                elif t == "int":
                    kw[k] = int(v)
                elif t == "float":
                    kw[k] = float(v)
                else:
                    kw[k] = v
            out.append((int(row["run"]) if row["run"] else None, EpisodeResult(**kw)))
    return out


def table1(reports: Sequence[SuiteReport]) -> str:
    """Method rows x (Success, SoftSPL) under each semantic condition."""
    conds = sorted({r.condition for r in reports}, key=lambda c: (c != "gt", c))
    methods = list(dict.fromkeys(r.method for r in reports))
    by = {(r.method, r.condition): r for r in reports}
    head = ["method"] + [f"{m}[{c}]" for c in conds for m in ("Success", "SoftSPL")]
    lines = [" | ".join(head), " | ".join("---" for _ in head)]
    for meth in methods:
        cells = [meth]
        for c in conds:
            r = by.get((meth, c))
            if r is None:
                cells += ["-", "-"]
            else:
                cells += [f"{r.mean['success']:.3f}±{r.dispersion['success']:.3f}",
                          f"{r.mean['soft_spl']:.3f}±{r.dispersion['soft_spl']:.3f}"]
        lines.append(" | ".join(cells))
    return "\n".join(lines)
