import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parttex.errors import MeshFormatError
from parttex.mesh import Mesh
from parttex.meshio import load_mesh, save_mesh
from parttex.primitives import icosphere, unit_cube


def full_mesh():
    sph = icosphere(1)
    rng = np.random.default_rng(3)
    return sph.with_(
        vertex_colors=rng.uniform(size=(sph.n_vertices, 3)),
        vertex_labels=rng.integers(0, 6, sph.n_vertices),
    )


def assert_meshes_equal(a: Mesh, b: Mesh, color_tol=1 / 254):
    np.testing.assert_allclose(a.vertices, b.vertices, atol=1e-12)
    np.testing.assert_array_equal(a.faces, b.faces)
    if a.vertex_normals is None:
        assert b.vertex_normals is None
    else:
        np.testing.assert_allclose(a.vertex_normals, b.vertex_normals,
                                   atol=1e-12)
    if a.vertex_labels is None:
        assert b.vertex_labels is None
    else:
        np.testing.assert_array_equal(a.vertex_labels, b.vertex_labels)
    if a.vertex_colors is None:
        assert b.vertex_colors is None
    else:
        # colors are stored 8-bit
        assert np.abs(a.vertex_colors - b.vertex_colors).max() <= color_tol


@pytest.mark.parametrize("ascii_mode", [False, True])
def test_ply_round_trip_full_attributes(tmp_path, ascii_mode):
    mesh = full_mesh()
    path = tmp_path / "m.ply"
    save_mesh(mesh, path, ascii=ascii_mode)
    assert_meshes_equal(mesh, load_mesh(path))


def test_ply_round_trip_bare(tmp_path):
    mesh = unit_cube(normals=False)
    path = tmp_path / "bare.ply"
    save_mesh(mesh, path)
    assert_meshes_equal(mesh, load_mesh(path))


def test_ply_part_label_property_name(tmp_path):
    mesh = full_mesh()
    path = tmp_path / "m.ply"
    save_mesh(mesh, path)
    header = path.read_bytes().split(b"end_header")[0].decode()
    assert "property uchar part_label" in header


def test_ply_binary_is_deterministic(tmp_path):
    mesh = full_mesh()
    a, b = tmp_path / "a.ply", tmp_path / "b.ply"
    save_mesh(mesh, a)
    save_mesh(mesh, b)
    assert a.read_bytes() == b.read_bytes()


def test_obj_round_trip(tmp_path):
    mesh = unit_cube(center=True)
    path = tmp_path / "m.obj"
    save_mesh(mesh, path)
    back = load_mesh(path)
    np.testing.assert_allclose(back.vertices, mesh.vertices, atol=1e-9)
    np.testing.assert_array_equal(back.faces, mesh.faces)


def test_obj_negative_indices_and_quads(tmp_path):
    path = tmp_path / "quad.obj"
    path.write_text(
        "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
        "f -4 -3 -2 -1\n")
    mesh = load_mesh(path)
    assert mesh.n_vertices == 4
    # fan triangulation of the quad
    np.testing.assert_array_equal(mesh.faces, [[0, 1, 2], [0, 2, 3]])


def test_load_reports_malformed_ply_with_location(tmp_path):
    path = tmp_path / "bad.ply"
    path.write_text("ply\nformat ascii 1.0\nelement vertex x\nend_header\n")
    with pytest.raises(MeshFormatError) as err:
        load_mesh(path)
    assert err.value.line is not None


def test_load_rejects_truncated_binary(tmp_path):
    mesh = full_mesh()
    path = tmp_path / "m.ply"
    save_mesh(mesh, path)
    data = path.read_bytes()
    path.write_bytes(data[:-20])
    with pytest.raises(MeshFormatError):
        load_mesh(path)


def test_load_rejects_unknown_extension(tmp_path):
    path = tmp_path / "m.stl"
    path.write_text("whatever")
    with pytest.raises(MeshFormatError):
        load_mesh(path)


def test_load_rejects_out_of_range_face_index(tmp_path):
    path = tmp_path / "bad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
    with pytest.raises((MeshFormatError, Exception)):
        load_mesh(path)


@st.composite
def random_meshes(draw):
    n_verts = draw(st.integers(min_value=3, max_value=12))
    coords = draw(st.lists(
        st.floats(min_value=-10, max_value=10, allow_nan=False,
                  width=32),
        min_size=3 * n_verts, max_size=3 * n_verts))
    verts = np.array(coords, dtype=np.float64).reshape(n_verts, 3)
    n_faces = draw(st.integers(min_value=1, max_value=16))
    faces = np.array([
        draw(st.lists(st.integers(min_value=0, max_value=n_verts - 1),
                      min_size=3, max_size=3, unique=True))
        for _ in range(n_faces)])
    with_labels = draw(st.booleans())
    labels = None
    if with_labels:
        labels = np.array(draw(st.lists(
            st.integers(min_value=0, max_value=5),
            min_size=n_verts, max_size=n_verts)))
    return Mesh(vertices=verts, faces=faces, vertex_labels=labels)


@settings(max_examples=40, deadline=None)
@given(random_meshes())
def test_ply_round_trip_property(tmp_path_factory, mesh):
    path = tmp_path_factory.mktemp("ply") / "m.ply"
    save_mesh(mesh, path)
    assert_meshes_equal(mesh, load_mesh(path))
