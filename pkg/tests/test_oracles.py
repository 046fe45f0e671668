import itertools
import warnings

import numpy as np
import pytest
from scipy.spatial import cKDTree

from pgeodist import oracles
from pgeodist.fixtures import generate_fixture, icosahedron
from pgeodist.mesh import TriangleMesh, mesh_stats, select_features

P = oracles.HEMISPHERE_POINT


def unit(v):
    v = np.asarray(v, float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def random_hemisphere(rng, n):
    x = unit(rng.normal(size=(n, 3)))
    x[:, 0] = np.abs(x[:, 0])
    return x


def test_sphere_distance_examples():
    assert oracles.sphere_point_distance(P, P) == 0.0
    assert oracles.sphere_point_distance([1, 0, 0], P) == pytest.approx(np.pi / 4, abs=1e-15)
    assert oracles.sphere_point_distance([1, 0, 0], [0, 0, 1]) == pytest.approx(np.pi / 2)


def test_sphere_distance_symmetric_and_clamped(rng):
    x, q = unit(rng.normal(size=(1000, 3))), unit(rng.normal(size=(1000, 3)))
    assert np.array_equal(oracles.sphere_point_distance(x, q), oracles.sphere_point_distance(q, x))
    assert oracles.sphere_point_distance(x[0], x[0] * (1 + 1e-12)) == 0.0


def test_off_sphere_rejected():
    with pytest.raises(oracles.OracleError):
        oracles.sphere_point_distance([1.1, 0, 0], P)
    with pytest.raises(oracles.OracleError):
        oracles.hemisphere_curve_point_distance([-0.6, 0.8, 0])


def test_curve_point_examples():
    assert oracles.hemisphere_curve_point_distance(P) == 0.0
    assert oracles.hemisphere_curve_point_distance([1, 0, 0]) == 0.0
    assert oracles.hemisphere_curve_point_distance([0, 1, 0]) == 0.0
    # off the arc's span: the nearer endpoint (1, 0, 0) is a quarter turn away
    assert oracles.hemisphere_curve_point_distance([0, -1, 0]) == pytest.approx(np.pi / 2)


def test_curve_point_against_dense_sampling(rng):
    x = random_hemisphere(rng, 10_000)
    t = np.linspace(0, np.pi / 2, 10 ** 6)
    arc = np.stack([np.cos(t), np.sin(t), np.zeros_like(t)], axis=1)
    gamma = np.vstack([arc, P])
    # chord length is monotone in geodesic distance on the sphere
    chord, _ = cKDTree(gamma).query(x)
    brute = 2 * np.arcsin(np.clip(chord / 2, 0, 1))
    np.testing.assert_allclose(oracles.hemisphere_curve_point_distance(x), brute, atol=2e-3)
    assert np.max(np.abs(oracles.hemisphere_curve_point_distance(x) - brute)) < 1e-5


def test_torus_examples():
    assert oracles.torus_meridian_distance([3, 0, 0]) == 0.0
    assert oracles.torus_meridian_distance([0, 0, 1]) == 0.0
    assert oracles.torus_meridian_distance([2, 1, 0]) == pytest.approx(np.pi / 2)
    assert oracles.torus_meridian_distance([0, -1, -2]) == pytest.approx(np.pi / 2)
    with pytest.raises(oracles.OracleError):
        oracles.torus_meridian_distance([0, 0, 0])


def test_torus_distance_bounded(torus2):
    d = oracles.torus_meridian_distance(torus2.vertices)
    assert np.all(d >= 0) and np.all(d <= np.pi / 2 + 1e-15)


@pytest.fixture(scope="module")
def fine_torus():
    m = generate_fixture("torus", 7)
    part = select_features(m, [{"band": {"axis": "y"}}])
    return m, part, oracles.graph_distance(m, part.gamma1)


def test_torus_dijkstra_sandwich(fine_torus, rng):
    m, part, g = fine_torus
    h = mesh_stats(m).h
    idx = rng.choice(m.n_vertices, 10_000, replace=False)
    d = oracles.torus_meridian_distance(m.vertices[idx])
    # edge paths are chords: allow their O(h^2) relative shortfall
    assert np.all(d <= g[idx] * (1 + h * h / 12) + 1e-12)
    assert np.all(d >= g[idx] - 3 * h)


def test_graph_distance_dominates_geodesics_up_to_chords(hemi3):
    part = select_features(hemi3, [{"nearest": P}])
    g = oracles.graph_distance(hemi3, part.gamma1)
    d = oracles.sphere_point_distance(hemi3.vertices, hemi3.vertices[part.gamma1[0]][None, :])
    h = mesh_stats(hemi3).h
    assert np.all(g >= d * (1 - h * h / 12) - 1e-9)
    assert np.any(g < d - 1e-9)


def test_exact_1d_examples():
    for p in (2, 5, 100):
        assert oracles.exact_1d_p_solution(0.0, p) == 0.0
        assert oracles.exact_1d_p_solution(1.0, p) == pytest.approx((p - 1) / p)
        assert oracles.exact_1d_p_solution(-1.0, p) == pytest.approx((p - 1) / p)
        assert 1.0 - oracles.exact_1d_p_solution(1.0, p) == pytest.approx(1 / p)
    assert oracles.exact_1d_p_solution(0.5, 2) == pytest.approx(3 / 8)
    with pytest.raises(ValueError):
        oracles.exact_1d_p_solution(0.5, 1.5)


def test_exact_1d_solves_ode():
    p = 7.0
    x = np.linspace(0.05, 0.95, 50)
    hstep = 1e-4
    u = lambda s: oracles.exact_1d_p_solution(s, p)  # noqa: E731
    du = lambda s: (u(s + hstep) - u(s - hstep)) / (2 * hstep)  # noqa: E731
    flux = lambda s: np.abs(du(s)) ** (p - 2) * du(s)  # noqa: E731
    lap = (flux(x + hstep) - flux(x - hstep)) / (2 * hstep)
    np.testing.assert_allclose(-lap, 1.0, atol=1e-4)


def test_graph_distance_trivial_cases():
    seg_tri = TriangleMesh([[0, 0, 0], [1, 0, 0], [0.5, np.sqrt(3) / 2, 0]], [[0, 1, 2]])
    np.testing.assert_allclose(oracles.graph_distance(seg_tri, [0]), [0, 1, 1])
    with pytest.raises(ValueError):
        oracles.graph_distance(seg_tri, [])


def test_graph_distance_matches_exhaustive_paths():
    m = icosahedron(1.0)
    n = m.n_vertices
    w = np.full((n, n), np.inf)
    np.fill_diagonal(w, 0)
    for a, b in m.edges:
        w[a, b] = w[b, a] = np.linalg.norm(m.vertices[a] - m.vertices[b])
    for k, i, j in itertools.product(range(n), repeat=3):
        w[i, j] = min(w[i, j], w[i, k] + w[k, j])
    for src in range(n):
        np.testing.assert_allclose(oracles.graph_distance(m, [src]), w[src], atol=1e-12)


def test_unreachable_vertices_flagged():
    v = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 0, 0], [6, 0, 0], [5, 1, 0]]
    m = TriangleMesh(v, [[0, 1, 2], [3, 4, 5]])
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        d = oracles.graph_distance(m, [0])
    assert np.isinf(d[3:]).all() and rec


def test_oracles_zero_on_features(hemi3, torus2):
    part = select_features(hemi3, [{"band": {"axis": "z", "ge": {"y": 0.0}}}])
    d = oracles.hemisphere_curve_point_distance(hemi3.vertices)
    assert np.all(d[part.gamma1] < 1e-15) and np.all(d >= 0)
    tp = select_features(torus2, [{"band": {"axis": "y"}}])
    assert np.all(oracles.torus_meridian_distance(torus2.vertices)[tp.gamma1] < 1e-12)


def test_oracle_lookup():
    assert oracles.oracle_for("strip_distance")(np.array([[-0.5, 0, 0]]))[0] == 0.5
    assert oracles.oracle_for("strip_1d")(np.array([[1.0, 0, 0]]), 4)[0] == pytest.approx(0.75)
    with pytest.raises(ValueError):
        oracles.oracle_for("bunny")
