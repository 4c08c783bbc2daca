import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from hlponav import geometry
from oracles import march_ray


def random_blocked(rng, h=30, w=30, density=0.15):
    b = rng.random((h, w)) < density
    b[0, :] = b[-1, :] = b[:, 0] = b[:, -1] = True
    return b


def test_rays_match_fine_marching():
    rng = np.random.default_rng(0)
    cs = 0.25
    for _ in range(20):
        b = random_blocked(rng)
        free = np.argwhere(~b)
        r, c = free[rng.integers(len(free))]
        x, y = (c + rng.random()) * cs, (r + rng.random()) * cs
        angles = rng.uniform(-math.pi, math.pi, 16)
        dist, rows, cols = geometry.ray_scan(b, cs, x, y, angles, 5.0)
        for a, d, hr, hc in zip(angles, dist, rows, cols):
            ref = march_ray(b, cs, x, y, a, 5.0)
            assert abs(d - ref) <= 2e-4
            if hr >= 0:
                assert b[hr, hc]
                assert d < 5.0


def test_ray_inside_range_reports_miss():
    b = np.zeros((10, 10), dtype=bool)
    d, r, c = geometry.ray_scan(b, 1.0, 5.0, 5.0, np.array([0.0]), 2.0)
    assert d[0] == 2.0 and r[0] == -1 and c[0] == -1


def test_first_hit_wall_distance():
    b = np.zeros((5, 10), dtype=bool)
    b[:, 6] = True
    d, r, c = geometry.first_hit(b, 0.25, 0.125, 0.625, 2.5, 0.625)
    assert (r, c) == (2, 6)
    assert d == pytest_approx(6 * 0.25 - 0.125)


def pytest_approx(v):
    import pytest
    return pytest.approx(v, abs=1e-12)


def test_inflate_chebyshev():
    m = np.zeros((7, 7), dtype=bool)
    m[3, 3] = True
    out = geometry.inflate(m, 2)
    assert out.sum() == 25 and out[1:6, 1:6].all()
    np.testing.assert_array_equal(geometry.inflate(m, 0), m)


@given(st.floats(-100, 100, allow_nan=False))
def test_wrap_angle_range(a):
    w = geometry.wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)


@settings(max_examples=100)
@given(st.floats(0, 50), st.floats(0, 50))
def test_cell_round_trip(x, y):
    r, c = geometry.world_to_cell(x, y, 0.25)
    cx, cy = geometry.cell_center(r, c, 0.25)
    assert abs(cx - x) <= 0.125 + 1e-12 and abs(cy - y) <= 0.125 + 1e-12
