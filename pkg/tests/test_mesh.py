import math

import numpy as np
import pytest

from microricci import (
    DegenerateTriangleError,
    ParseError,
    TopologyError,
    TriMesh,
    corner_angles,
    edge_lengths,
    gauss_curvature,
    gen_icosphere,
    load_obj,
    save_obj,
)

TETRA_OBJ = """\
v 1 1 1
v 1 -1 -1
v -1 1 -1
v -1 -1 1
f 1 2 3
f 1 3 4
f 1 4 2
f 2 4 3
"""


def test_load_obj_tetrahedron(tmp_path):
    p = tmp_path / "tetra.obj"
    p.write_text(TETRA_OBJ)
    m = load_obj(p)
    assert (m.n_vertices, m.n_edges, m.n_faces) == (4, 6, 4)
    assert m.euler_characteristic == 2


def test_load_obj_quad_face_is_topology_error(tmp_path):
    p = tmp_path / "quad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    with pytest.raises(TopologyError, match="face 0 has 4 vertices"):
        load_obj(p)


def test_load_obj_icosahedron_counts(tmp_path):
    m = gen_icosphere(0)
    p = tmp_path / "ico.obj"
    save_obj(m, p)
    m2 = load_obj(p)
    assert (m2.n_vertices, m2.n_edges, m2.n_faces) == (12, 30, 20)
    assert m2.euler_characteristic == 2


def test_load_obj_malformed_vertex_line(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("v 0 0\nf 1 2 3\n")
    with pytest.raises(ParseError, match="line 1"):
        load_obj(p)


def test_load_obj_boundary_edge_rejected(tmp_path):
    p = tmp_path / "open.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    with pytest.raises(TopologyError, match="boundary edge"):
        load_obj(p)


def test_nonmanifold_edge_rejected():
    # three faces share edge (0, 1)
    pos = np.zeros((5, 3))
    pos[:, 0] = np.arange(5)
    faces = np.array([[0, 1, 2], [0, 1, 3], [0, 1, 4]])
    with pytest.raises(TopologyError, match="non-manifold"):
        TriMesh(pos, faces)


def test_inconsistent_winding_rejected():
    pos = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], float)
    faces = np.array([[0, 1, 2], [0, 2, 3], [0, 3, 1], [1, 2, 3]])  # last flipped
    with pytest.raises(TopologyError, match="winding"):
        TriMesh(pos, faces)


def test_degenerate_face_rejected():
    pos = np.zeros((4, 3))
    faces = np.array([[0, 0, 1], [1, 2, 3], [0, 1, 3], [0, 2, 1]])
    with pytest.raises(TopologyError, match="repeats"):
        TriMesh(pos, faces)


def test_obj_roundtrip_exact(tmp_path, ico2):
    rng = np.random.default_rng(0)
    noisy = ico2.with_positions(ico2.positions + 1e-3 * rng.standard_normal(
        ico2.positions.shape))
    uv = rng.random((noisy.n_faces, 3, 2))
    mesh = TriMesh(noisy.positions, noisy.faces, uv=uv)
    p = tmp_path / "m.obj"
    save_obj(mesh, p)
    back = load_obj(p)
    assert np.array_equal(back.positions, mesh.positions)
    assert np.array_equal(back.faces, mesh.faces)
    assert np.array_equal(back.uv, mesh.uv)


def test_one_ring_matches_face_reconstruction(ico2):
    ring = {i: set(ico2.one_ring(i).tolist()) for i in range(ico2.n_vertices)}
    rebuilt = {i: set() for i in range(ico2.n_vertices)}
    for a, b, c in ico2.faces:
        rebuilt[a].update((b, c))
        rebuilt[b].update((a, c))
        rebuilt[c].update((a, b))
    assert ring == rebuilt


def test_mesh_arrays_immutable(ico1):
    with pytest.raises(ValueError):
        ico1.positions[0, 0] = 99.0
    with pytest.raises(ValueError):
        ico1.faces[0, 0] = 0


# -- icosphere -------------------------------------------------------------------


def test_icosphere_base_case():
    m = gen_icosphere(0)
    assert m.n_vertices == 12
    assert m.n_faces == 20


@pytest.mark.parametrize("s,faces,verts", [(1, 80, 42), (3, 1280, 642),
                                           (5, 20480, 10242)])
def test_icosphere_counts(s, faces, verts):
    m = gen_icosphere(s)
    assert m.n_faces == faces
    assert m.n_vertices == verts
    assert m.euler_characteristic == 2


def test_icosphere_radius():
    m = gen_icosphere(2, radius=3.5)
    r = np.linalg.norm(m.positions, axis=1)
    assert np.allclose(r, 3.5, atol=1e-12)


def test_icosphere_bad_args():
    with pytest.raises(ValueError):
        gen_icosphere(8)
    with pytest.raises(ValueError):
        gen_icosphere(-1)
    with pytest.raises(ValueError):
        gen_icosphere(2, radius=0.0)


# -- metric ----------------------------------------------------------------------


def test_edge_lengths_zero_log_radii(tetra):
    assert np.allclose(edge_lengths(tetra, np.zeros(4)), 1.0)


def test_edge_lengths_half_exponent_convention(tetra):
    # lengths are exp((x_i + x_j)/2): the convention under which the curvature
    # Jacobian equals the half-cotangent Laplacian (see test_energy)
    x = np.array([math.log(2.0), math.log(3.0), 0.0, 0.0])
    lengths = edge_lengths(tetra, x)
    eid = int(np.flatnonzero((tetra.edges == [0, 1]).all(axis=1))[0])
    assert lengths[eid] == pytest.approx(math.sqrt(6.0), rel=1e-15)


def test_edge_lengths_constant_shift(tetra):
    c = 0.3
    lengths = edge_lengths(tetra, np.full(4, c))
    assert np.allclose(lengths, math.exp(c))


def test_edge_lengths_symmetric_in_endpoints(ico1):
    rng = np.random.default_rng(1)
    x = 0.1 * rng.standard_normal(ico1.n_vertices)
    lengths = edge_lengths(ico1, x)
    i, j = ico1.edges[:, 0], ico1.edges[:, 1]
    assert np.array_equal(lengths, np.exp(0.5 * (x[j] + x[i])))


def test_corner_angles_equilateral(tetra):
    ang = corner_angles(tetra, np.ones(6))
    assert np.allclose(ang, np.pi / 3, atol=1e-15)


def test_corner_angles_pythagorean():
    # one 3-4-5 face: realize a closed tetra metric abstractly
    pos = np.array([[0, 0, 0], [3, 0, 0], [0, 4, 0], [1, 1, 1]], float)
    faces = np.array([[0, 1, 2], [0, 2, 3], [0, 3, 1], [1, 3, 2]])
    m = TriMesh(pos, faces)
    lengths = np.ones(6)
    e01 = int(np.flatnonzero((m.edges == [0, 1]).all(axis=1))[0])
    e02 = int(np.flatnonzero((m.edges == [0, 2]).all(axis=1))[0])
    e12 = int(np.flatnonzero((m.edges == [1, 2]).all(axis=1))[0])
    lengths[e01] = 3.0
    lengths[e02] = 4.0
    lengths[e12] = 5.0
    lengths[[i for i in range(6) if i not in (e01, e02, e12)]] = 4.0
    ang = corner_angles(m, lengths)
    # the right angle sits at vertex 0 of face 0, opposite the 5-edge
    f0 = 0
    corner_of_v0 = int(np.flatnonzero(m.faces[f0] == 0)[0])
    assert ang[f0, corner_of_v0] == pytest.approx(np.pi / 2, abs=1e-12)


def test_corner_angles_sum_to_pi(ico2):
    rng = np.random.default_rng(2)
    x = 0.05 * rng.standard_normal(ico2.n_vertices)
    ang = corner_angles(ico2, edge_lengths(ico2, x))
    assert np.abs(ang.sum(axis=1) - np.pi).max() < 1e-12


def test_corner_angles_degenerate_raises(tetra):
    lengths = np.ones(6)
    lengths[0] = 2.1
    with pytest.raises(DegenerateTriangleError) as ei:
        corner_angles(tetra, lengths)
    assert "2.1" in str(ei.value)


def test_corner_angles_clamp_mode_flags(tetra):
    lengths = np.ones(6)
    lengths[0] = 2.1
    flagged = []
    ang = corner_angles(tetra, lengths, clamp=True, clamped_out=flagged)
    assert len(flagged) > 0
    assert np.all(np.isfinite(ang))


def test_gauss_curvature_tetra(tetra):
    K = gauss_curvature(tetra, np.zeros(4))
    assert np.allclose(K, np.pi, atol=1e-14)
    assert K.sum() == pytest.approx(4 * np.pi, rel=1e-12)


def test_gauss_bonnet_icosphere_s4():
    m = gen_icosphere(4)
    K = gauss_curvature(m, np.zeros(m.n_vertices))
    assert abs(K.sum() - 4 * np.pi) / (4 * np.pi) < 1e-9


def test_gauss_bonnet_perturbed(ico3):
    rng = np.random.default_rng(3)
    x = rng.uniform(-0.01, 0.01, ico3.n_vertices)
    K = gauss_curvature(ico3, x)
    assert abs(K.sum() - 4 * np.pi) / (4 * np.pi) < 1e-9


def test_gauss_bonnet_on_decimated():
    from microricci import DistortionSpec, apply_distortion
    m = apply_distortion(gen_icosphere(2), DistortionSpec("decimate", 0.5))
    rng = np.random.default_rng(4)
    x = rng.uniform(-0.05, 0.05, m.n_vertices)
    K = gauss_curvature(m, x)
    assert abs(K.sum() - 4 * np.pi) / (4 * np.pi) < 1e-9


def test_log_radii_validation(tetra):
    with pytest.raises(ValueError, match="shape"):
        edge_lengths(tetra, np.zeros(5))
    with pytest.raises(ValueError, match="finite"):
        edge_lengths(tetra, np.array([0.0, np.nan, 0.0, 0.0]))
