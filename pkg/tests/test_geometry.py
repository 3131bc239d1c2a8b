import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cadlabel.errors import EmptyMesh
from cadlabel.geometry import (Aabb, build_index, contains, dilate, mesh_aabb, query,
                               signed_distance, unsigned_distance)
from oracles import box_tris, brute_unsigned, displaced_sphere, ray_parity_inside


def test_cube_is_closed(cube):
    ix = build_index(cube)
    assert ix.closed
    assert ix.n_triangles == 12
    assert not ix.flipped


def test_single_triangle_is_open():
    ix = build_index([[[0, 0, 0], [1, 0, 0], [0, 1, 0]]])
    assert not ix.closed


def test_cube_missing_face_is_open(cube):
    # census: removing one face leaves 4 boundary edges used by one triangle
    tris = cube[2:]
    edges = {}
    for t in tris:
        for k in range(3):
            e = tuple(sorted((tuple(t[k]), tuple(t[(k + 1) % 3]))))
            edges[e] = edges.get(e, 0) + 1
    assert sorted(set(edges.values())) == [1, 2]
    assert len(tris) == 10
    assert not build_index(tris).closed


def test_inconsistent_winding_is_open(cube):
    tris = cube.copy()
    tris[0] = tris[0][[0, 2, 1]]
    assert not build_index(tris).closed


def test_inward_winding_is_flipped(cube):
    ix = build_index(cube[:, [0, 2, 1]])
    assert ix.closed and ix.flipped
    assert signed_distance(ix, [0, 0, 0]) == pytest.approx(-0.5)


def test_degenerate_triangles_dropped(cube):
    junk = np.array([[[0, 0, 0], [1, 0, 0], [2, 0, 0]]], float)
    ix = build_index(np.concatenate([cube, junk]))
    assert ix.dropped == 1
    assert ix.closed


def test_empty_mesh_rejected():
    with pytest.raises(EmptyMesh):
        build_index(np.array([[[0, 0, 0], [1, 1, 1], [2, 2, 2]]], float))
    with pytest.raises(EmptyMesh):
        build_index(np.zeros((0, 3, 3)))


def test_unsigned_examples(cube):
    ix = build_index(cube)
    d, q = unsigned_distance(ix, [1.0, 0.0, 0.0])
    assert d == pytest.approx(0.5, abs=1e-15)
    np.testing.assert_allclose(q, [0.5, 0.0, 0.0])
    assert unsigned_distance(ix, [0.1, 0.2, 0.5])[0] == 0.0
    assert unsigned_distance(ix, [0.5, 0.5, 0.5])[0] == 0.0


def test_signed_examples(cube):
    ix = build_index(cube)
    assert signed_distance(ix, [0, 0, 0]) == pytest.approx(-0.5, abs=1e-15)
    assert signed_distance(ix, [0.5, 0, 0]) == 0.0
    assert signed_distance(ix, [0, 0, 0.53]) == pytest.approx(0.03, abs=1e-12)


def test_open_mesh_signed_is_unsigned(cube):
    ix = build_index(cube[:10])
    pts = np.random.default_rng(1).uniform(-1, 1, (200, 3))
    s = signed_distance(ix, pts)
    u, _ = unsigned_distance(ix, pts)
    np.testing.assert_array_equal(s, u)
    assert np.all(s >= 0)


def test_box_helpers(cube):
    box = mesh_aabb(build_index(cube))
    np.testing.assert_array_equal(box.min, [-0.5] * 3)
    np.testing.assert_array_equal(box.max, [0.5] * 3)
    big = dilate(box, 0.04)
    np.testing.assert_allclose(big.min, [-0.54] * 3)
    np.testing.assert_allclose(big.max, [0.54] * 3)
    assert contains(box, [0.5, 0.5, 0.5])
    assert contains(box, [-0.5, 0.0, 0.5])
    assert not contains(box, [0.5000001, 0, 0])
    with pytest.raises(ValueError):
        Aabb([1, 0, 0], [0, 0, 0])
    with pytest.raises(ValueError):
        dilate(box, -1)


def test_sign_flips_across_face(cube):
    ix = build_index(cube)
    for x in (0.5 - 1e-6, 0.5 + 1e-6):
        s = signed_distance(ix, [x, 0.1, -0.2])
        assert np.sign(s) == np.sign(x - 0.5)


@pytest.mark.parametrize("name", ["cube", "open_box", "sphere"])
def test_indexed_matches_brute_force(name):
    tris = {"cube": box_tris([-0.5] * 3, [0.5] * 3),
            "open_box": box_tris([-0.5] * 3, [0.5] * 3)[:10],
            "sphere": displaced_sphere(nlon=30, nlat=17)}[name]
    ix = build_index(tris)
    pts = np.random.default_rng(3).uniform(-1.4, 1.4, (2000, 3))
    s, u, _, _ = query(ix, pts)
    bs, bu, _, _ = query(ix, pts, brute_force=True)
    np.testing.assert_array_equal(u, bu)
    np.testing.assert_array_equal(s, bs)
    ref = brute_unsigned(pts, tris)
    assert np.max(np.abs(u - ref) / np.maximum(ref, 1e-12)) <= 1e-9


def test_sign_matches_ray_parity_sphere():
    tris = displaced_sphere(nlon=40, nlat=22, seed=5)
    ix = build_index(tris)
    assert ix.closed
    pts = np.random.default_rng(9).uniform(-1.2, 1.2, (10_000, 3))
    s = signed_distance(ix, pts)
    off = np.abs(s) > 1e-9
    assert np.array_equal((s < 0)[off], ray_parity_inside(pts, tris)[off])


def test_nearest_point_realizes_distance(cube):
    ix = build_index(cube)
    pts = np.random.default_rng(4).uniform(-2, 2, (500, 3))
    d, q = unsigned_distance(ix, pts)
    np.testing.assert_allclose(np.linalg.norm(pts - q, axis=1), d, rtol=1e-12, atol=1e-15)
    # nearest points lie on the cube surface
    assert np.all(np.abs(q).max(axis=1) == pytest.approx(0.5))


coords = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


@settings(max_examples=200, deadline=None)
@given(st.tuples(coords, coords, coords), st.floats(0, 2))
def test_dilate_contains_ball(p, r):
    box = Aabb([-0.5, -0.2, 0.0], [0.5, 0.2, 1.0])
    p = np.array(p)
    nearest = np.clip(p, box.min, box.max)
    if np.linalg.norm(p - nearest) <= r:
        assert contains(dilate(box, r + 1e-12), p)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(coords, coords, coords), min_size=1, max_size=30))
def test_property_indexed_equals_linear(points):
    tris = displaced_sphere(nlon=12, nlat=8, seed=2)
    ix = build_index(tris)
    pts = np.array(points)
    a = query(ix, pts)
    b = query(ix, pts, brute_force=True)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


def test_index_is_read_only(cube):
    ix = build_index(cube)
    with pytest.raises(ValueError):
        ix.triangles[0, 0, 0] = 3.0
