import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cadlabel.errors import (AmbiguousObject, ClassUnknown, EmptyMesh, IndexOutOfRange,
                             ParseError, UnmatchedObject)
from cadlabel.geometry import triangle_normals
from cadlabel.meshio import (ClassManifest, format_mesh, load_scene, parse_mesh,
                             write_mesh)
from cadlabel.taxonomy import GOLD
from oracles import box_tris

CUBE_OBJ = """\
# unit cube
v -0.5 -0.5 -0.5
v 0.5 -0.5 -0.5
v 0.5 0.5 -0.5
v -0.5 0.5 -0.5
v -0.5 -0.5 0.5
v 0.5 -0.5 0.5
v 0.5 0.5 0.5
v -0.5 0.5 0.5
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
"""


def test_parse_cube():
    mesh = parse_mesh(CUBE_OBJ.encode())
    assert len(mesh) == 12
    np.testing.assert_allclose(np.linalg.norm(mesh.normals, axis=1), 1.0)


def test_quad_fan():
    mesh = parse_mesh(b"v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    assert len(mesh) == 2
    np.testing.assert_array_equal(mesh.triangles[1], [[0, 0, 0], [1, 1, 0], [0, 1, 0]])


def test_index_zero_rejected():
    with pytest.raises(IndexOutOfRange) as e:
        parse_mesh(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n")
    assert e.value.line == 4


def test_index_too_large():
    with pytest.raises(IndexOutOfRange):
        parse_mesh(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n")


def test_negative_indices_and_slashes():
    text = b"v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nvt 0 0\nf -3/1/1 -2/1/1 -1/1/1\n"
    mesh = parse_mesh(text)
    assert len(mesh) == 1
    np.testing.assert_allclose(mesh.normals[0], [0, 0, 1])
    assert mesh.ignored_records == 1


def test_vertex_normals_override_winding():
    text = b"v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 -1\nf 1//1 2//1 3//1\n"
    np.testing.assert_allclose(parse_mesh(text).normals[0], [0, 0, -1])
    # without normals the winding decides
    np.testing.assert_allclose(parse_mesh(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").normals[0],
                               [0, 0, 1])


def test_crlf_and_comments():
    text = CUBE_OBJ.replace("\n", "\r\n").encode()
    assert len(parse_mesh(io.BytesIO(text))) == 12


@pytest.mark.parametrize("text,exc", [
    (b"v 0 0\n", ParseError),
    (b"v a b c\n", ParseError),
    (b"v 0 0 0\nv 1 0 0\nf 1 2\n", ParseError),
    (b"v 0 0 0\n", EmptyMesh),
    (b"v 0 0 nan\nv 1 0 0\nv 0 1 0\nf 1 2 3\n", ParseError),
    (b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 x 3\n", ParseError),
])
def test_malformed(text, exc):
    with pytest.raises(exc):
        parse_mesh(text)


def test_parse_error_carries_line():
    with pytest.raises(ParseError, match="line 3"):
        parse_mesh(b"v 0 0 0\nv 1 0 0\nv 1 0\n")


coord = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
tri = st.tuples(*[st.tuples(coord, coord, coord)] * 3)


@settings(max_examples=100, deadline=None)
@given(st.lists(tri, min_size=1, max_size=20))
def test_round_trip_bit_exact(tris):
    tris = np.array(tris, dtype=np.float64)
    back = parse_mesh(format_mesh(tris).encode()).triangles
    assert back.shape == tris.shape
    assert back.tobytes() == tris.tobytes()


@settings(max_examples=100, deadline=None)
@given(st.integers(3, 40), st.floats(0.1, 10), st.floats(-5, 5), st.floats(-5, 5))
def test_fan_area_of_regular_polygon(n, r, cx, cy):
    ang = 2 * np.pi * np.arange(n) / n
    verts = "".join(f"v {float(cx + r * np.cos(a))!r} {float(cy + r * np.sin(a))!r} 0.0\n"
                    for a in ang)
    face = "f " + " ".join(str(i + 1) for i in range(n)) + "\n"
    mesh = parse_mesh((verts + face).encode())
    _, area = triangle_normals(mesh.triangles)
    expected = 0.5 * n * r * r * np.sin(2 * np.pi / n)
    assert area.sum() == pytest.approx(expected, rel=1e-9)


def test_manifest_parse_and_match():
    m = ClassManifest.parse("# classes\nwall* = Wall\nslab_* = Slab\n\n")
    assert m.match("wall_01") == "Wall"
    assert m.match("slab_01") == "Slab"
    with pytest.raises(UnmatchedObject):
        m.match("chair_3")
    with pytest.raises(AmbiguousObject):
        ClassManifest.parse("w* = Wall\nwa* = Wall\n").match("wall")
    with pytest.raises(ParseError):
        ClassManifest.parse("wall Wall\n")
    assert ClassManifest.parse(m.format()).entries == m.entries


def _write_dir(tmp_path, names):
    for i, n in enumerate(names):
        write_mesh(box_tris([i, 0, 0], [i + 0.5, 1, 1]), tmp_path / f"{n}.obj")


def test_load_scene(tmp_path):
    _write_dir(tmp_path, ["wall_01", "slab_01"])
    m = ClassManifest.parse("wall* = Wall\nslab* = Slab\n")
    scene = load_scene(tmp_path, m, "Gold")
    assert len(scene) == 2
    assert [o.name for o in scene.objects] == ["slab_01", "wall_01"]
    assert [o.object_id for o in scene.objects] == [0, 1]
    assert scene.objects[0].class_id == GOLD.index("Slab")
    assert all(o.index.closed for o in scene.objects)
    np.testing.assert_array_equal(scene.objects[0].box.min, [1, 0, 0])


def test_load_scene_unmatched(tmp_path):
    _write_dir(tmp_path, ["chair_3"])
    with pytest.raises(UnmatchedObject, match="chair_3"):
        load_scene(tmp_path, ClassManifest.parse("wall* = Wall\n"), GOLD)


def test_load_scene_unknown_class(tmp_path):
    _write_dir(tmp_path, ["sofa_1"])
    with pytest.raises(ClassUnknown, match="Sofa"):
        load_scene(tmp_path, ClassManifest.parse("sofa* = Sofa\n"), GOLD)


def test_load_scene_deterministic(tmp_path):
    names = ["b_wall", "a_wall", "c_slab"]
    _write_dir(tmp_path, names)
    m = ClassManifest.parse("*wall = Wall\n*slab = Slab\n")
    s1 = load_scene(tmp_path, m, GOLD)
    s2 = load_scene(tmp_path, m, GOLD, workers=3)
    for a, b in zip(s1.objects, s2.objects):
        assert (a.object_id, a.name, a.class_id) == (b.object_id, b.name, b.class_id)
        assert a.index.triangles.tobytes() == b.index.triangles.tobytes()


def test_class_lookup_is_lenient(tmp_path):
    _write_dir(tmp_path, ["ft"])
    scene = load_scene(tmp_path, ClassManifest.parse("ft = FireTerminal\n"), GOLD)
    assert scene.objects[0].class_id == 6
