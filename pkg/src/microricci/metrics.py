"""Solution-quality metrics and benchmark statistics: curvature spread,
UV-distortion RMS, per-face angular deviation and area-ratio error against a
reference, corpus aggregation, and rank correlation."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import MicroRicciError
from .mesh import corner_angles, gauss_curvature

logger = logging.getLogger("microricci")

__all__ = [
    "QualityReport",
    "curvature_spread",
    "uv_distortion_rms",
    "uv_distortion_report",
    "angular_deviation",
    "area_ratio_error",
    "corpus_stats",
    "rank_correlation",
    "compute_quality",
]


@dataclass
class QualityReport:
    curvature_mean: float
    curvature_std: float
    uv_rms: float | None
    angle_dev_median: float
    angle_dev_p95: float
    area_ratio_median: float
    area_ratio_p95: float
    iterations: int

    def to_dict(self):
        return {
            "curvature_mean": self.curvature_mean,
            "curvature_std": self.curvature_std,
            "uv_rms": self.uv_rms,
            "angle_dev_median_deg": self.angle_dev_median,
            "angle_dev_p95_deg": self.angle_dev_p95,
            "area_ratio_median": self.area_ratio_median,
            "area_ratio_p95": self.area_ratio_p95,
            "iterations": self.iterations,
        }


def curvature_spread(K):
    """(arithmetic mean, population standard deviation) of a curvature vector."""
    K = np.asarray(K, dtype=np.float64)
    if K.size == 0:
        raise ValueError("empty curvature vector")
    return float(K.mean()), float(K.std())


def _heron_areas(lengths, face_edges):
    L = lengths[face_edges]
    a, b, c = L[:, 0], L[:, 1], L[:, 2]
    s = 0.5 * (a + b + c)
    under = s * (s - a) * (s - b) * (s - c)
    return np.sqrt(np.maximum(under, 0.0))


def _realize_triangle(l0, l1, l2):
    """Plane coordinates of a triangle with edge lengths (l0 opposite corner 0,
    etc.): corner 0 at origin, corner 1 on the +x axis."""
    # corner 0 -> corner 1 edge is the one opposite corner 2, length l2
    x1 = l2
    # corner 2 at distance l1 from corner 0 and l0 from corner 1
    cx = (l1 * l1 + l2 * l2 - l0 * l0) / (2.0 * l2)
    cy = np.sqrt(max(l1 * l1 - cx * cx, 0.0))
    return np.array([[0.0, 0.0], [x1, 0.0], [cx, cy]])


def uv_distortion_report(mesh, lengths):
    """Area-weighted RMS of the per-face best-similarity residual.

    Per face: fit the orientation-preserving similarity (complex regression)
    from the UV triangle to the triangle realized from the three metric edge
    lengths; the face deviation is the RMS corner displacement divided by the
    metric triangle's RMS edge length. Faces with a degenerate (zero-area) UV
    triangle are excluded and counted. Zero exactly when every UV triangle is
    a similarity image of its metric triangle (conformal map).
    """
    if mesh.uv is None:
        raise MicroRicciError("mesh carries no UV coordinates")
    areas = _heron_areas(lengths, mesh.face_edges)
    total_w = 0.0
    total = 0.0
    excluded = 0
    for fi in range(mesh.n_faces):
        L = lengths[mesh.face_edges[fi]]
        target = _realize_triangle(*L)
        z = target[:, 0] + 1j * target[:, 1]
        w = mesh.uv[fi, :, 0] + 1j * mesh.uv[fi, :, 1]
        e1 = mesh.uv[fi, 1] - mesh.uv[fi, 0]
        e2 = mesh.uv[fi, 2] - mesh.uv[fi, 0]
        uv_area = 0.5 * abs(e1[0] * e2[1] - e1[1] * e2[0])
        if uv_area == 0.0:
            excluded += 1
            continue
        z = z - z.mean()
        w = w - w.mean()
        denom = float(np.vdot(w, w).real)
        a = complex(np.vdot(w, z)) / denom
        resid = z - a * w
        scale_sq = float((L * L).mean())
        dev_sq = float(np.vdot(resid, resid).real / 3.0) / scale_sq
        total += areas[fi] * dev_sq
        total_w += areas[fi]
    if excluded:
        logger.warning("uv_distortion: excluded %d degenerate UV face(s)", excluded)
    if total_w == 0.0:
        raise MicroRicciError("no non-degenerate UV faces")
    return float(np.sqrt(total / total_w)), excluded


def uv_distortion_rms(mesh, lengths):
    """See :func:`uv_distortion_report`; returns just the RMS."""
    return uv_distortion_report(mesh, lengths)[0]


def angular_deviation(reference, metric_after):
    """Per-face max |corner angle difference| in degrees between the
    reference's embedded metric and ``metric_after`` (per-edge lengths)."""
    metric_after = np.asarray(metric_after, dtype=np.float64)
    if metric_after.shape != (reference.n_edges,):
        raise ValueError(
            f"metric has {metric_after.shape} lengths, mesh has "
            f"{reference.n_edges} edges")
    ang_ref = corner_angles(reference, reference.embedded_edge_lengths())
    ang_new = corner_angles(reference, metric_after)
    return np.degrees(np.abs(ang_new - ang_ref).max(axis=1))


def area_ratio_error(reference, metric_after):
    """Per-face |A'/A - 1| between Heron areas of the two metrics."""
    metric_after = np.asarray(metric_after, dtype=np.float64)
    if metric_after.shape != (reference.n_edges,):
        raise ValueError(
            f"metric has {metric_after.shape} lengths, mesh has "
            f"{reference.n_edges} edges")
    A = _heron_areas(reference.embedded_edge_lengths(), reference.face_edges)
    A2 = _heron_areas(metric_after, reference.face_edges)
    if (A == 0.0).any():
        raise ValueError(
            f"reference face {int(np.flatnonzero(A == 0.0)[0])} has zero area")
    return np.abs(A2 / A - 1.0)


def corpus_stats(reports):
    """(mean iterations, population std, mean ms per iteration, total seconds)
    over a list of :class:`SolveReport`."""
    if not reports:
        raise ValueError("no reports to aggregate")
    iters = np.array([r.iterations_used for r in reports], dtype=np.float64)
    wall_s = np.array([r.wall_ns * 1e-9 for r in reports])
    total_iters = float(iters.sum())
    ms_per_iter = 1e3 * float(wall_s.sum()) / total_iters if total_iters else 0.0
    return float(iters.mean()), float(iters.std()), ms_per_iter, float(wall_s.sum())


def rank_correlation(a, b):
    """(Pearson r, Spearman rho with average ranks for ties)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 3:
        raise ValueError("need two equal-length vectors of at least 3 values")

    def pearson(u, v):
        du = u - u.mean()
        dv = v - v.mean()
        su = float(np.sqrt((du * du).sum()))
        sv = float(np.sqrt((dv * dv).sum()))
        if su == 0.0 or sv == 0.0:
            raise ValueError("correlation undefined for zero-variance input")
        return float((du * dv).sum() / (su * sv))

    return pearson(a, b), pearson(_average_ranks(a), _average_ranks(b))


def _average_ranks(v):
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v))
    sv = v[order]
    i = 0
    while i < len(sv):
        j = i
        while j + 1 < len(sv) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def compute_quality(mesh, lengths_after, iterations, x_final=None):
    """Assemble a :class:`QualityReport` for a converged solve."""
    if x_final is not None:
        K = gauss_curvature(mesh, x_final, clamp=True)
        cmean, cstd = curvature_spread(K)
    else:
        cmean = cstd = float("nan")
    ang = angular_deviation(mesh, lengths_after)
    area = area_ratio_error(mesh, lengths_after)
    uv = None
    if mesh.uv is not None:
        try:
            uv = uv_distortion_rms(mesh, lengths_after)
        except MicroRicciError:
            uv = None
    return QualityReport(
        curvature_mean=cmean,
        curvature_std=cstd,
        uv_rms=uv,
        angle_dev_median=float(np.median(ang)),
        angle_dev_p95=float(np.percentile(ang, 95)),
        area_ratio_median=float(np.median(area)),
        area_ratio_p95=float(np.percentile(area, 95)),
        iterations=int(iterations),
    )
