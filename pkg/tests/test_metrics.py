import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hlponav.metrics import (EpisodeResult, aggregate, episode_soft_spl, read_results_csv,
                             soft_spl, spl, success_rate, summarize, table1, write_results_csv)
from oracles import spl_recompute


def result(success=True, l=5.0, p=5.0, d0=5.0, d1=0.0, ep=0, **kw):
    return EpisodeResult(ep, "s", "sink", success, l, p, int(p / 0.25) + 1, d0, d1,
                         stopped=success or kw.pop("stopped", False), **kw)


def test_spl_optimal_path():
    assert spl([result(l=5.0, p=5.0)]) == 1.0


def test_spl_double_path():
    assert spl([result(l=5.0, p=10.0)]) == 0.5


def test_spl_failure_contributes_zero():
    assert spl([result(success=False, p=5.0), result(l=5.0, p=5.0)]) == 0.5


def test_spl_short_path_is_capped():
    # p < l can happen with a continuous l estimate; efficiency never exceeds 1
    assert spl([result(l=5.0, p=4.0)]) == 1.0


def test_soft_spl_examples():
    assert soft_spl([result(l=5.0, p=5.0, d0=5.0, d1=0.0)]) == 1.0
    assert soft_spl([result(success=False, l=5.0, p=0.0, d0=5.0, d1=5.0)]) == 0.0
    assert soft_spl([result(success=False, l=4.0, p=8.0, d0=4.0, d1=2.0)]) == 0.25


def test_soft_spl_ignores_success_flag():
    a = result(success=True, l=4.0, p=8.0, d0=4.0, d1=2.0)
    b = result(success=False, l=4.0, p=8.0, d0=4.0, d1=2.0)
    assert episode_soft_spl(a) == episode_soft_spl(b)


def test_invalid_results_rejected():
    with pytest.raises(ValueError):
        result(p=-1.0)
    with pytest.raises(ValueError):
        result(l=0.0)
    with pytest.raises(ValueError):
        EpisodeResult(0, "s", "sink", True, 5.0, 5.0, 3, 5.0, 0.0, stopped=False)


def random_results(rng, n):
    out = []
    for i in range(n):
        s = bool(rng.random() < 0.6)
        l = float(rng.uniform(0.5, 20.0))
        p = float(rng.uniform(0.0, 40.0))
        d0 = float(rng.uniform(0.5, 20.0))
        out.append(EpisodeResult(i, f"s{i}", "sink", s, l, p, 10, d0, float(rng.uniform(0, 25)),
                                 stopped=s or bool(rng.random() < 0.5)))
    return out


def test_spl_matches_recompute_oracle():
    rng = np.random.default_rng(0)
    res = random_results(rng, 1000)
    rows = [(r.success, r.shortest_path, r.path_length) for r in res]
    assert abs(spl(res) - spl_recompute(rows)) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 40), st.integers(0, 2**31 - 1))
def test_spl_bounded_by_success(n, seed):
    res = random_results(np.random.default_rng(seed), n)
    s, v = success_rate(res), spl(res)
    assert 0.0 <= v <= s + 1e-15 <= 1.0 + 1e-15


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 30), st.integers(0, 2**31 - 1))
def test_spl_order_invariant(n, seed):
    rng = np.random.default_rng(seed)
    res = random_results(rng, n)
    perm = [res[i] for i in rng.permutation(n)]
    assert math.isclose(spl(res), spl(perm), rel_tol=0, abs_tol=1e-15)


def _run(rate, n=50):
    k = round(rate * n)
    return [result(success=i < k, ep=i, p=5.0) for i in range(n)]


def test_aggregate_identical_runs_zero_dispersion():
    run = _run(0.7)
    rep = aggregate([run, run, run], "hlpo", "gt")
    assert rep.dispersion == {"success": 0.0, "spl": 0.0, "soft_spl": 0.0}


def test_aggregate_arithmetic():
    rep = aggregate([_run(0.70), _run(0.72), _run(0.74)], "hlpo", "gt")
    assert rep.mean["success"] == pytest.approx(0.72, abs=1e-12)
    assert rep.dispersion["success"] == pytest.approx(0.04, abs=1e-12)


def test_aggregate_matches_recomputation():
    rng = np.random.default_rng(1)
    runs = [random_results(rng, 30) for _ in range(3)]
    rep = aggregate(runs)
    per = [summarize(r) for r in runs]
    for m in ("success", "spl", "soft_spl"):
        vals = [p[m] for p in per]
        assert rep.mean[m] == pytest.approx(np.mean(vals), abs=1e-15)
        assert rep.dispersion[m] == pytest.approx(max(vals) - min(vals), abs=1e-15)


def test_aggregate_rejects_mismatched_episode_sets():
    with pytest.raises(ValueError):
        aggregate([_run(0.5, 10), _run(0.5, 11)])


def test_csv_round_trip(tmp_path):
    res = random_results(np.random.default_rng(2), 20)
    path = tmp_path / "r.csv"
    write_results_csv(path, res[:10], run=0, extra={"config_hash": "abc"})
    write_results_csv(path, res[10:], run=1, extra={"config_hash": "abc"})
    back = read_results_csv(path)
    assert [r for _, r in back] == res
    assert [run for run, _ in back] == [0] * 10 + [1] * 10


def test_table1_layout():
    reps = [aggregate([_run(0.7)] * 3, "hlpo", "gt"), aggregate([_run(0.4)] * 3, "hlpo", "noisy")]
    lines = table1(reps).splitlines()
    assert lines[0] == "method | Success[gt] | SoftSPL[gt] | Success[noisy] | SoftSPL[noisy]"
    assert lines[2].startswith("hlpo | 0.700±0.000")
