import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from alphaflow.geometry import (GeometryError, MapField, SphereTarget, TorusGrid, exp_point,
                                geodesic, log_point, periodic_displacement, project,
                                second_fundamental_form, sphere_distance, tangent_frame)

finite = st.floats(-10, 10, allow_nan=False)
vec3 = arrays(np.float64, 3, elements=finite)


def unit(v):
    return np.asarray(v, float) / np.linalg.norm(v)


def rotation_oracle(p, v):
    """Great-circle point via an explicit rotation in the plane spanned by p and v."""
    n = np.linalg.norm(v)
    e = v / n
    return math.cos(n) * p + math.sin(n) * e


@pytest.mark.parametrize("y, expected", [
    ((0, 0, 2), (0, 0, 1)),
    ((1, 0, 0), (1, 0, 0)),
    ((3, 4, 0), (0.6, 0.8, 0)),
])
def test_project_examples(y, expected):
    assert np.allclose(project(y), expected, atol=1e-15)


@pytest.mark.parametrize("y", [(0, 0, 0), (1e-7, 0, 0), (0, 5e-7, 5e-7)])
def test_project_rejects_near_zero(y):
    with pytest.raises(GeometryError, match="projection undefined at origin"):
        project(y)


@given(vec3)
def test_project_idempotent(y):
    if np.linalg.norm(y) <= 1e-6:
        return
    p = project(y)
    assert abs(np.linalg.norm(p) - 1) <= 1e-15
    assert np.allclose(project(p), p, atol=1e-15)


@pytest.mark.parametrize("p, X, Y, expected", [
    ((0, 0, 1), (1, 0, 0), (1, 0, 0), (0, 0, 1)),
    ((0, 0, 1), (1, 0, 0), (0, 1, 0), (0, 0, 0)),
    ((1, 0, 0), (0, 2, 0), (0, 2, 0), (4, 0, 0)),
])
def test_second_fundamental_form_examples(p, X, Y, expected):
    assert np.allclose(second_fundamental_form(p, X, Y), expected)


def test_second_fundamental_form_rejects_normal_input():
    with pytest.raises(GeometryError):
        second_fundamental_form((0, 0, 1), (0, 0, 1), (1, 0, 0))


@given(vec3, vec3, vec3, vec3)
def test_second_fundamental_form_is_normal(p, a, b, t):
    if np.linalg.norm(p) < 1e-3:
        return
    p = unit(p)
    X, Y, T = (v - np.dot(v, p) * p for v in (a, b, t))
    A = second_fundamental_form(p, X, Y)
    assert abs(np.dot(A, T)) <= 1e-12 * max(1.0, np.linalg.norm(X) * np.linalg.norm(Y) * np.linalg.norm(T))


@pytest.mark.parametrize("p, v, expected", [
    ((1, 0, 0), (0, math.pi / 2, 0), (0, 1, 0)),
    ((0, 0, 1), (math.pi / 4, 0, 0), (math.sin(math.pi / 4), 0, math.cos(math.pi / 4))),
    ((0, 0, 1), (0, 0, 0), (0, 0, 1)),
    ((0, 0, 1), (1e-16, 0, 0), (0, 0, 1)),
])
def test_exp_examples(p, v, expected):
    assert np.allclose(exp_point(p, v), expected, atol=1e-15)


def test_exp_matches_rotation_oracle():
    rng = np.random.default_rng(1)
    for _ in range(50):
        p = unit(rng.standard_normal(3))
        v = rng.standard_normal(3)
        v -= np.dot(v, p) * p
        v *= rng.uniform(0.01, 3.0) / np.linalg.norm(v)
        assert np.allclose(exp_point(p, v), rotation_oracle(p, v), atol=1e-14)


@pytest.mark.parametrize("length", [math.pi, 3.5, 10.0])
def test_exp_rejects_beyond_injectivity(length):
    with pytest.raises(GeometryError, match="outside injectivity radius"):
        exp_point((0, 0, 1), (length, 0, 0))


def test_log_examples():
    p = np.array([1.0, 0, 0])
    assert np.allclose(log_point(p, p), 0)
    assert math.isclose(np.linalg.norm(log_point(p, (0, 1, 0))), math.pi / 2, rel_tol=1e-14)
    q = unit([0.3, -0.2, 0.9])
    assert np.allclose(exp_point(p, log_point(p, q)), q, atol=1e-12)


def test_log_rejects_antipodal():
    with pytest.raises(GeometryError, match="log undefined at cut locus"):
        log_point((0, 0, 1), (0, 0, -1))


def test_exp_log_round_trip_many():
    rng = np.random.default_rng(7)
    p = rng.standard_normal((1000, 3))
    p /= np.linalg.norm(p, axis=1, keepdims=True)
    v = rng.standard_normal((1000, 3))
    v -= np.sum(v * p, axis=1, keepdims=True) * p
    v *= rng.uniform(0, 3, (1000, 1)) / np.linalg.norm(v, axis=1, keepdims=True)
    assert np.max(np.abs(log_point(p, exp_point(p, v)) - v)) <= 1e-10


@pytest.mark.parametrize("s, expected", [
    (0.0, (1, 0, 0)), (1.0, (0, 1, 0)), (0.5, (math.sqrt(0.5), math.sqrt(0.5), 0))])
def test_geodesic_examples(s, expected):
    assert np.allclose(geodesic((1, 0, 0), (0, 1, 0), s), expected, atol=1e-15)


def test_geodesic_degenerate_and_antipodal():
    p = np.array([0, 0, 1.0])
    for s in (0, 0.3, 1):
        assert np.allclose(geodesic(p, p, s), p)
    with pytest.raises(GeometryError):
        geodesic(p, -p, 0.5)


@settings(max_examples=200)
@given(vec3, vec3, st.floats(0, 1))
def test_geodesic_arc_length_additive(a, b, s):
    if np.linalg.norm(a) < 1e-3 or np.linalg.norm(b) < 1e-3:
        return
    p, q = unit(a), unit(b)
    if np.dot(p, q) <= -1 + 1e-6:
        return
    g = geodesic(p, q, s)
    total = sphere_distance(p, q)
    assert abs(sphere_distance(p, g) + sphere_distance(g, q) - total) <= 1e-10
    assert math.isclose(float(np.linalg.norm(log_point(p, q))), total, abs_tol=1e-12)


def test_torus_grid_validation():
    g = TorusGrid(16, 2.0)
    assert g.h == 0.125 and g.cutoff_radius == 0.5 and g.ny == 16
    for kw in ({"nx": 4}, {"nx": 16, "ny": 17}, {"nx": 16, "cutoff_radius": 0.3},
               {"nx": 16, "side_length": -1}):
        with pytest.raises(GeometryError):
            TorusGrid(**kw)


def test_periodic_displacement_examples():
    g = TorusGrid(10, 1.0)
    assert np.allclose(periodic_displacement(g, (3, 4), (3, 4)), 0)
    assert np.allclose(periodic_displacement(g, (9, 0), (1, 0)), (-0.2, 0))
    assert np.allclose(periodic_displacement(g, (5, 0), (0, 0)), (0.5, 0))  # tie -> +L/2
    assert np.allclose(periodic_displacement(g, (0, 0), (5, 0)), (0.5, 0))


@given(st.integers(0, 11), st.integers(0, 11), st.integers(0, 11), st.integers(0, 11))
def test_periodic_displacement_properties(i, j, k, m):
    g = TorusGrid(12, 1.5)
    d = periodic_displacement(g, (i, j), (k, m))
    assert np.all(d > -g.side_length / 2) and np.all(d <= g.side_length / 2)
    assert np.linalg.norm(d) <= math.sqrt(2) * g.side_length / 2 + 1e-15
    back = periodic_displacement(g, (k, m), (i, j))
    for c in range(2):
        if not math.isclose(abs(d[c]), g.side_length / 2):
            assert d[c] == -back[c]


def test_sphere_target_and_map_field():
    assert SphereTarget(3).contains([0, 0, 1])
    with pytest.raises(GeometryError):
        SphereTarget(2)
    g = TorusGrid(8)
    v = np.zeros((8, 8, 3))
    v[..., 2] = 1
    f = MapField(g, v).validate()
    assert f.k == 3 and f.norm_defect() == 0
    v2 = v.copy()
    v2[0, 0, 2] = 1.1
    with pytest.raises(GeometryError):
        MapField(g, v2).validate()
    with pytest.raises(GeometryError):
        MapField(g, np.zeros((7, 8, 3)))


def test_sample_reproduces_nodes_and_stays_on_sphere():
    g = TorusGrid(16)
    X, Y = g.coordinates()
    a = 2 * np.pi * X
    f = MapField(g, np.stack([np.cos(a), np.sin(a), np.zeros_like(a)], -1))
    pts = np.stack([X, Y], -1)
    assert np.allclose(f.sample(pts), f.values, atol=1e-14)
    rng = np.random.default_rng(0)
    s = f.sample(rng.uniform(-1, 2, (100, 2)))
    assert np.allclose(np.linalg.norm(s, axis=-1), 1, atol=1e-15)


def test_tangent_frame_orthonormal():
    for p in ([0, 0, 1.0], unit([1, 2, 3]), [1.0, 0, 0]):
        e1, e2 = tangent_frame(p)
        M = np.array([p, e1, e2])
        assert np.allclose(M @ M.T, np.eye(3), atol=1e-14)
