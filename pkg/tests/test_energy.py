import numpy as np
import pytest

from microricci import (
    DegenerateMetricError,
    SolveConfig,
    convexity_probe,
    gen_icosphere,
    gradient_check,
    hessian_check,
    ricci_energy,
    segment_energy,
    solve_greedy,
)


def test_energy_zero_at_origin(ico1):
    rep = ricci_energy(ico1, np.zeros(ico1.n_vertices))
    assert rep.value == 0.0
    assert len(rep.gradient) == ico1.n_vertices


def test_energy_uniform_scaling_tetra(tetra):
    # angles are scale invariant, so K(t*c*1) = (pi,...) and E = 4*pi*c
    c = 0.41
    rep = ricci_energy(tetra, np.full(4, c))
    assert rep.value == pytest.approx(4 * np.pi * c, rel=1e-12)
    assert np.allclose(rep.gradient, np.pi, atol=1e-12)


def test_quadrature_self_convergence(ico2):
    rng = np.random.default_rng(0)
    x = rng.uniform(-0.05, 0.05, ico2.n_vertices)
    e8 = ricci_energy(ico2, x, quadrature_nodes=8).value
    e64 = ricci_energy(ico2, x, quadrature_nodes=64).value
    assert abs(e8 - e64) <= 1e-8 * abs(e64)


def test_energy_degenerate_path_reports_t(tetra):
    # valid at t=0, degenerate well inside the segment
    x = np.array([3.0, 3.0, -3.0, -3.0])
    with pytest.raises(DegenerateMetricError) as ei:
        ricci_energy(tetra, x)
    assert 0.0 < ei.value.t <= 1.0


def test_gradient_check_tetra(tetra):
    assert gradient_check(tetra, np.zeros(4), h=1e-5) <= 1e-6


def test_gradient_check_icosphere(ico2):
    rng = np.random.default_rng(1)
    x = rng.uniform(-0.05, 0.05, ico2.n_vertices)
    assert gradient_check(ico2, x, h=1e-5) <= 1e-5


def test_gradient_check_quadratic_in_h(ico1):
    rng = np.random.default_rng(2)
    x = rng.uniform(-0.03, 0.03, ico1.n_vertices)
    e1 = gradient_check(ico1, x, h=1e-3)
    e2 = gradient_check(ico1, x, h=1e-4)
    # central differences: order h^2 until the roundoff floor
    assert e2 <= e1 / 50.0 or e2 < 1e-9


def test_hessian_check_icosphere(ico1):
    hc = hessian_check(ico1, np.zeros(ico1.n_vertices), h=1e-5)
    assert hc.pattern_max_rel_err <= 1e-4
    assert hc.off_pattern_max_abs <= 1e-6


def test_hessian_fd_jacobian_symmetric(tetra):
    from microricci import gauss_curvature
    h = 1e-6
    n = 4
    x = np.zeros(n)
    J = np.zeros((n, n))
    for i in range(n):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        J[i] = (gauss_curvature(tetra, xp) - gauss_curvature(tetra, xm)) / (2 * h)
    assert np.abs(J - J.T).max() <= 1e-8


def test_hessian_check_random_x(ico1):
    rng = np.random.default_rng(3)
    x = rng.uniform(-0.05, 0.05, ico1.n_vertices)
    hc = hessian_check(ico1, x, h=1e-5)
    assert hc.pattern_max_rel_err <= 1e-4


def test_convexity_probe_positive(ico2):
    rep = convexity_probe(ico2, np.zeros(ico2.n_vertices), samples=1000, seed=0)
    assert rep.min_quadform > 0.0
    assert rep.positive_offdiagonal_count == 0
    assert rep.samples == 1000


def test_convexity_probe_flags_non_delaunay(tetra):
    # stretching edge (0,1) makes both opposite angles obtuse
    rep = convexity_probe(tetra, np.array([1.0, 1.0, 0.0, 0.0]), samples=50)
    assert rep.positive_offdiagonal_count >= 1


def test_path_independence_two_segment(ico1):
    rng = np.random.default_rng(4)
    x = rng.uniform(-0.05, 0.05, ico1.n_vertices)
    direct = ricci_energy(ico1, x, 32).value
    half = segment_energy(ico1, np.zeros_like(x), x / 2, 32)
    rest = segment_energy(ico1, x / 2, x, 32)
    assert abs(direct - (half + rest)) <= 1e-7 * max(1.0, abs(direct))


def test_energy_decreases_along_curvature_flow(ico1):
    # exact-curvature residual mode is a true gradient flow of the energy
    rng = np.random.default_rng(5)
    x0 = 0.05 * rng.standard_normal(ico1.n_vertices)
    cfg = SolveConfig(residual_mode="curvature", max_steps=200,
                      record_energy_every=1, tau=1e-12)
    rep = solve_greedy(ico1, x0, cfg)
    e = rep.energy_trace
    steps = np.diff(e)
    frac_decreasing = float((steps <= 1e-12).mean())
    assert frac_decreasing >= 0.95
