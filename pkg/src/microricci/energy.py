"""Ricci energy by path quadrature, plus the finite-difference verifications
of the gradient/Hessian identities and the sampled convexity probe.

The energy is the line integral of the curvature field from 0 to x; the field
is conservative (its Jacobian is the symmetric cotangent Laplacian), so the
straight segment is as good as any path. Energy is verification/reporting
machinery only — the solver never evaluates it."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMetricError, DegenerateTriangleError
from .laplacian import build_cotan_laplacian
from .mesh import gauss_curvature, _check_log_radii

__all__ = [
    "EnergyReport",
    "HessianCheck",
    "ConvexityReport",
    "ricci_energy",
    "segment_energy",
    "gradient_check",
    "hessian_check",
    "convexity_probe",
]


@dataclass
class EnergyReport:
    value: float
    gradient: np.ndarray  # = K(x)
    path_samples: int


@dataclass
class HessianCheck:
    pattern_max_rel_err: float
    off_pattern_max_abs: float


@dataclass
class ConvexityReport:
    min_quadform: float
    positive_offdiagonal_count: int
    samples: int


def _gauss_legendre_unit(total_nodes):
    """Composite Gauss-Legendre nodes/weights on [0, 1], panels of <= 16 nodes.

    Returns (t, w, count); count is the number of nodes actually used (the
    requested total rounded up to a whole number of equal panels).
    """
    total = max(1, int(total_nodes))
    order = min(total, 16)
    panels = -(-total // order)
    t_ref, w_ref = np.polynomial.legendre.leggauss(order)
    t_ref = 0.5 * (t_ref + 1.0)  # to [0, 1]
    w_ref = 0.5 * w_ref
    width = 1.0 / panels
    t = (np.arange(panels)[:, None] * width + t_ref[None, :] * width).ravel()
    w = np.tile(w_ref * width, panels)
    return t, w, order * panels


def segment_energy(mesh, x_from, x_to, quadrature_nodes=16, clamp=False):
    """Integral of K along the straight segment from ``x_from`` to ``x_to``."""
    x_from = _check_log_radii(mesh, x_from)
    x_to = _check_log_radii(mesh, x_to)
    delta = x_to - x_from
    t, w, _ = _gauss_legendre_unit(quadrature_nodes)
    total = 0.0
    for tk, wk in zip(t, w):
        try:
            K = gauss_curvature(mesh, x_from + tk * delta, clamp=clamp)
        except DegenerateTriangleError as exc:
            raise DegenerateMetricError(tk, exc) from exc
        total += wk * float(K @ delta)
    return total


def ricci_energy(mesh, x, quadrature_nodes=16, clamp=False):
    """Energy E(x) = integral of K(u) du from 0 to x, with gradient K(x).

    Uses composite Gauss-Legendre quadrature along the straight segment;
    ``path_samples`` reports the node count actually used.
    """
    x = _check_log_radii(mesh, x)
    _, _, used = _gauss_legendre_unit(quadrature_nodes)
    value = segment_energy(mesh, np.zeros_like(x), x, quadrature_nodes, clamp=clamp)
    return EnergyReport(value=value, gradient=gauss_curvature(mesh, x, clamp=clamp),
                        path_samples=used)


def gradient_check(mesh, x, h=1e-5, quadrature_nodes=16):
    """Max over i of the normalized error between the central difference of E
    and K_i(x): |dE/dx_i - K_i| / (1 + |K_i|)."""
    x = _check_log_radii(mesh, x)
    K = gauss_curvature(mesh, x)
    worst = 0.0
    for i in range(mesh.n_vertices):
        xp = x.copy()
        xp[i] += h
        xm = x.copy()
        xm[i] -= h
        ep = ricci_energy(mesh, xp, quadrature_nodes).value
        em = ricci_energy(mesh, xm, quadrature_nodes).value
        fd = (ep - em) / (2.0 * h)
        worst = max(worst, abs(fd - K[i]) / (1.0 + abs(K[i])))
    return worst


def hessian_check(mesh, x, h=1e-5):
    """Central-difference Jacobian of K versus the assembled Laplacian.

    Returns the max normalized error over H's sparsity pattern and the max
    absolute Jacobian entry off the pattern. The Jacobian row i is
    dK/dx_i, which equals row i of H by symmetry of the identity.
    """
    x = _check_log_radii(mesh, x)
    n = mesh.n_vertices
    H = build_cotan_laplacian(mesh, x)
    J = np.empty((n, n))
    for i in range(n):
        xp = x.copy()
        xp[i] += h
        xm = x.copy()
        xm[i] -= h
        J[i] = (gauss_curvature(mesh, xp) - gauss_curvature(mesh, xm)) / (2.0 * h)
    pattern_err = 0.0
    off = np.abs(J.copy())
    for i in range(n):
        cols, vals = H.row(i)
        err = np.abs(J[i, cols] - vals) / (1.0 + np.abs(vals))
        pattern_err = max(pattern_err, float(err.max()))
        off[i, cols] = 0.0
    return HessianCheck(pattern_max_rel_err=pattern_err,
                        off_pattern_max_abs=float(off.max()))


def convexity_probe(mesh, x, samples=1000, seed=0):
    """Sample v' H v over random unit sum-zero vectors.

    Also counts positive off-diagonal entries (edges violating the Delaunay
    condition, under which the form is positive on the hyperplane).
    """
    H = build_cotan_laplacian(mesh, x)
    pos_offdiag = 0
    for i in range(H.n):
        cols, vals = H.row(i)
        pos_offdiag += int(((cols != i) & (vals > 0)).sum())
    pos_offdiag //= 2  # counted from both symmetric halves
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(int(samples)):
        v = rng.standard_normal(H.n)
        v -= v.mean()
        nrm = np.linalg.norm(v)
        if nrm == 0.0:
            continue
        v /= nrm
        worst = min(worst, float(v @ H.matvec(v)))
    return ConvexityReport(min_quadform=worst,
                           positive_offdiagonal_count=pos_offdiag,
                           samples=int(samples))
