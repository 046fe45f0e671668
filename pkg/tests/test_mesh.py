import warnings

import numpy as np
import pytest

from pgeodist.fixtures import generate_fixture, icosahedron
from pgeodist.mesh import (AllBoundary, FeatureWarning, MeshError, MeshQualityWarning,
                           NearestVertex, TriangleMesh, load_mesh, mesh_stats,
                           perturb_vertices, save_obj, save_off, select_features)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_off_single_triangle(tmp_path):
    p = write(tmp_path, "t.off", "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n")
    m = load_mesh(p)
    assert m.n_faces == 1
    assert len(m.boundary_edges) == 3
    assert m.n_boundary_loops == 1


def test_icosahedron_off_roundtrip(tmp_path, ico):
    p = tmp_path / "ico.off"
    save_off(ico, p)
    m = load_mesh(p)
    assert (m.n_vertices, m.n_faces, m.n_boundary_loops) == (12, 20, 0)
    assert len(m.edges) == 30
    assert m.n_vertices - len(m.edges) + m.n_faces == 2


def test_obj_roundtrip_preserves_everything(tmp_path, hemi3):
    p = tmp_path / "h.obj"
    save_obj(hemi3, p)
    m = load_mesh(p)
    np.testing.assert_allclose(m.vertices, hemi3.vertices, rtol=1e-12, atol=0)
    np.testing.assert_array_equal(m.faces, hemi3.faces)


def test_obj_with_texture_indices_and_quads(tmp_path):
    # unit-height quad stretched in x: the short diagonal is 1-3
    text = "v 0 0 0\nv 3 0 0\nv 3 1 0\nv 0.2 1 0\nf 1/1 2/2 3/3 4/4\n"
    m = load_mesh(write(tmp_path, "q.obj", text))
    assert m.n_faces == 2
    shared = set(m.faces[0]) & set(m.faces[1])
    d13 = np.linalg.norm(m.vertices[1] - m.vertices[3])
    d02 = np.linalg.norm(m.vertices[0] - m.vertices[2])
    assert d13 < d02
    assert shared == {1, 3}


def test_missing_file_and_parse_errors(tmp_path):
    with pytest.raises(MeshError):
        load_mesh(tmp_path / "absent.off")
    with pytest.raises(MeshError):
        load_mesh(write(tmp_path, "bad.off", "OFF\n3 1 0\n0 0 zero\n1 0 0\n0 1 0\n3 0 1 2\n"))
    with pytest.raises(MeshError):
        load_mesh(write(tmp_path, "pent.obj", "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
                                              "v -1 .5 0\nf 1 2 3 4 5\n"))


def test_non_manifold_edge_reported():
    v = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1]]
    f = [[0, 1, 2], [1, 0, 3], [0, 1, 4]]
    with pytest.raises(MeshError, match="non-manifold"):
        TriangleMesh(v, f)


def test_degenerate_face_rejected():
    with pytest.raises(MeshError, match="degenerate"):
        TriangleMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])


def test_inconsistent_orientation_rejected():
    v = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]]
    with pytest.raises(MeshError, match="orientation"):
        TriangleMesh(v, [[0, 1, 2], [1, 2, 3]])
    TriangleMesh(v, [[0, 1, 2], [2, 1, 3]])


def test_bad_index_rejected():
    with pytest.raises(MeshError):
        TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 3]])


def test_stats_right_triangle(right_triangle):
    st = mesh_stats(right_triangle)
    assert st.ell == pytest.approx((2 + np.sqrt(2)) / 3)
    assert st.h == pytest.approx(np.sqrt(2))
    assert 0 < st.ell <= st.h


def test_stats_scale_homogeneously(hemi3):
    a, b = mesh_stats(hemi3), mesh_stats(hemi3.scaled(2.0))
    assert b.ell == pytest.approx(2 * a.ell)
    assert b.h == pytest.approx(2 * a.h)


@pytest.mark.parametrize("kind,level", [("hemisphere", 3), ("torus", 2), ("strip", 1), ("disc", 2)])
def test_fixture_orientation_invariant(kind, level):
    m = generate_fixture(kind, level)
    he = np.concatenate([m.faces[:, [0, 1]], m.faces[:, [1, 2]], m.faces[:, [2, 0]]])
    assert len(np.unique(he, axis=0)) == len(he)
    assert m.edge_face_counts.max() <= 2


@pytest.mark.parametrize("kind,faces", [("hemisphere", lambda k: 4 * 4 ** k),
                                        ("torus", lambda k: 48 * 4 ** k),
                                        ("strip", lambda k: 40 * 4 ** k),
                                        ("disc", lambda k: 6 * 4 ** k)])
def test_refinement_quadruples_faces(kind, faces):
    for k in (1, 2):
        assert generate_fixture(kind, k).n_faces == faces(k)


def test_hemisphere_fixture_geometry(hemi3):
    assert np.max(np.abs(np.linalg.norm(hemi3.vertices, axis=1) - 1)) < 1e-12
    assert np.all(hemi3.vertices[hemi3.boundary_vertices, 0] == 0.0)
    assert hemi3.n_boundary_loops == 1


def test_hemisphere_anchor_lands_on_vertex():
    q = np.array([np.sqrt(2) / 2, 0.5, 0.5])
    m = generate_fixture("hemisphere", 2, anchors=[q])
    assert np.min(np.linalg.norm(m.vertices - q, axis=1)) < 1e-15


def test_strip_is_planar():
    m = generate_fixture("strip", 1)
    np.testing.assert_allclose(np.abs(m.face_normals), np.tile([0, 0, 1.0], (m.n_faces, 1)))


def test_torus_196608_faces_mean_edge():
    m = generate_fixture("torus", 6)
    st = mesh_stats(m)
    assert m.n_faces == 196608
    assert st.ell == pytest.approx(3.29e-2, rel=0.01)
    assert st.h == pytest.approx(5.49e-2, rel=0.01)
    # 196608 triangles covering area 8 pi^2 cannot have a mean edge near
    # 1.65e-2: even equilateral ones would need ~0.03
    side = np.sqrt(4 * m.face_areas.sum() / (np.sqrt(3) * m.n_faces))
    assert side > 1.8 * 1.65e-2


def test_perturb_zero_sigma_is_identity(hemi3):
    m = perturb_vertices(hemi3, 0.0, seed=1)
    assert np.array_equal(m.vertices, hemi3.vertices)
    assert np.array_equal(m.faces, hemi3.faces)


def test_perturb_reproducible(hemi3):
    a = perturb_vertices(hemi3, 0.01, seed=7)
    b = perturb_vertices(hemi3, 0.01, seed=7)
    c = perturb_vertices(hemi3, 0.01, seed=8)
    assert np.array_equal(a.vertices, b.vertices)
    assert not np.array_equal(a.vertices, c.vertices)


def test_perturb_mean_displacement_chi3():
    n = 100_000
    pts = np.zeros((n, 3))
    pts[:, 0] = np.arange(n)
    base = TriangleMesh(pts, np.zeros((0, 3), dtype=np.int64), validate=False)
    sigma = 0.3
    moved = perturb_vertices(base, sigma, seed=3)
    mean = np.linalg.norm(moved.vertices - base.vertices, axis=1).mean()
    assert mean == pytest.approx(sigma * 2 * np.sqrt(2) / np.sqrt(np.pi), rel=0.01)


def test_perturb_warns_on_flipped_faces(hemi3):
    with pytest.warns(MeshQualityWarning, match="inverted"):
        m = perturb_vertices(hemi3, 1.0, seed=0)
    assert m.n_faces == hemi3.n_faces


def test_negative_sigma_rejected(right_triangle):
    with pytest.raises(ValueError):
        perturb_vertices(right_triangle, -1.0, seed=0)


def test_select_all_boundary(hemi3):
    part = select_features(hemi3, [{"boundary": True}])
    np.testing.assert_array_equal(part.gamma1, hemi3.boundary_vertices)
    assert part.gamma2.size == 0


def test_select_nearest_point(hemi3):
    q = [np.sqrt(2) / 2, 0.5, 0.5]
    part = select_features(hemi3, [{"nearest": q}])
    assert part.gamma1.size == 1
    np.testing.assert_array_equal(part.gamma2, hemi3.boundary_vertices)


def test_nearest_tie_goes_to_lowest_index():
    m = TriangleMesh([[0, 0, 0], [2, 0, 0], [1, 1, 0]], [[0, 1, 2]])
    assert NearestVertex((1.0, 0.0, 0.0)).select(m)[0] == 0


def test_select_list_on_closed_mesh(ico):
    part = select_features(ico, [{"vertices": [0]}])
    assert part.gamma1.tolist() == [0]
    assert part.gamma2.size == 0


def test_select_band_with_half_space(hemi3):
    part = select_features(hemi3, [{"band": {"axis": "z", "ge": {"y": 0.0}}}])
    v = hemi3.vertices[part.gamma1]
    assert np.all(v[:, 2] == 0) and np.all(v[:, 1] >= 0)
    assert len(part.gamma1) == 2 ** 3 + 1


def test_select_idempotent(hemi3):
    spec = [{"nearest": [0, 0, 1]}, {"band": {"axis": "z"}}]
    a, b = select_features(hemi3, spec), select_features(hemi3, spec)
    assert np.array_equal(a.gamma1, b.gamma1) and np.array_equal(a.gamma2, b.gamma2)


def test_empty_selector_warns_and_empty_union_raises(hemi3):
    with pytest.warns(FeatureWarning):
        part = select_features(hemi3, [{"band": {"axis": "x", "center": 5.0}}, AllBoundary()])
    assert part.gamma1.size > 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FeatureWarning)
        with pytest.raises(ValueError):
            select_features(hemi3, [{"band": {"axis": "x", "center": 5.0}}])
