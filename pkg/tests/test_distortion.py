import numpy as np
import pytest

from microricci import (
    DecimationError,
    DistortionSpec,
    apply_distortion,
    gen_icosphere,
)


def test_zero_noise_is_bit_identical(ico2):
    out = apply_distortion(ico2, DistortionSpec("gaussian_noise", 0.0, seed=1))
    assert np.array_equal(out.positions, ico2.positions)
    assert np.array_equal(out.faces, ico2.faces)


def test_noise_same_seed_reproducible(ico2):
    spec = DistortionSpec("gaussian_noise", 0.05, seed=123)
    a = apply_distortion(ico2, spec)
    b = apply_distortion(ico2, spec)
    assert np.array_equal(a.positions, b.positions)
    c = apply_distortion(ico2, DistortionSpec("gaussian_noise", 0.05, seed=124))
    assert not np.array_equal(a.positions, c.positions)


def test_quantize_displacement_bound(ico2):
    # direct bound check over all vertices: displacement <= diag / 2^bits
    bits = 30
    out = apply_distortion(ico2, DistortionSpec("quantize_position", bits))
    disp = np.linalg.norm(out.positions - ico2.positions, axis=1)
    assert disp.max() <= ico2.bbox_diagonal / 2**bits


def test_quantize_keeps_topology(ico1):
    out = apply_distortion(ico1, DistortionSpec("quantize_position", 6))
    assert np.array_equal(out.faces, ico1.faces)


def test_decimate_identity_fraction(ico1):
    out = apply_distortion(ico1, DistortionSpec("decimate", 1.0))
    assert out.n_vertices == ico1.n_vertices
    assert np.array_equal(out.faces, ico1.faces)


@pytest.mark.parametrize("fraction", [0.3, 0.5, 0.75])
def test_decimate_hits_target_and_stays_closed(ico2, fraction):
    out = apply_distortion(ico2, DistortionSpec("decimate", fraction))
    assert out.n_vertices == round(ico2.n_vertices * fraction)
    assert out.euler_characteristic == 2  # TriMesh validation also ran


def test_decimate_deterministic(ico2):
    a = apply_distortion(ico2, DistortionSpec("decimate", 0.5, seed=1))
    b = apply_distortion(ico2, DistortionSpec("decimate", 0.5, seed=2))
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.faces, b.faces)


def test_decimate_below_four_vertices_fails():
    m = gen_icosphere(0)
    with pytest.raises(DecimationError, match="< 4"):
        apply_distortion(m, DistortionSpec("decimate", 0.1))


def test_decimate_drops_uv(ico1):
    from microricci import TriMesh
    uv = np.zeros((ico1.n_faces, 3, 2))
    m = TriMesh(ico1.positions, ico1.faces, uv=uv)
    out = apply_distortion(m, DistortionSpec("decimate", 0.8))
    assert out.uv is None


def test_spec_validation():
    with pytest.raises(ValueError, match="kind"):
        DistortionSpec("melt", 0.1)
    with pytest.raises(ValueError, match="integer"):
        DistortionSpec("quantize_position", 3.5)
    with pytest.raises(ValueError):
        DistortionSpec("quantize_position", 0)
    with pytest.raises(ValueError):
        DistortionSpec("decimate", 0.0)
    with pytest.raises(ValueError):
        DistortionSpec("decimate", 1.2)
    with pytest.raises(ValueError):
        DistortionSpec("gaussian_noise", 0.5)
