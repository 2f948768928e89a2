"""Reproducible synthetic corpora.

The stock corpus (small meshes, <= ~330 vertices) backs the verification
suite; the bench corpora (icosphere-3 scale, decimation-heavy) back the
training/evaluation comparisons. Every entry is (mesh, x0) with x0 white
noise scaled to a fixed sup norm, seeded per entry.
"""
from __future__ import annotations

import numpy as np

from .distortion import DistortionSpec, apply_distortion
from .mesh import gen_icosphere

__all__ = ["make_x0", "stock_corpus", "bench_corpus"]


def make_x0(mesh, magnitude, seed):
    """White-noise log-radii rescaled so the largest |x0_i| equals ``magnitude``."""
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal(mesh.n_vertices)
    peak = np.max(np.abs(x0))
    if peak > 0:
        x0 *= magnitude / peak
    return x0


_STOCK_SPECS = [
    # (subdivisions, distortion kind or None, magnitude)
    (0, None, 0.0),
    (1, None, 0.0),
    (2, None, 0.0),
    (1, "decimate", 0.5),
    (1, "decimate", 0.7),
    (2, "decimate", 0.35),
    (2, "decimate", 0.45),
    (2, "decimate", 0.55),
    (2, "decimate", 0.65),
    (2, "decimate", 0.8),
    (2, "gaussian_noise", 0.02),
    (2, "gaussian_noise", 0.05),
    (2, "quantize_position", 8),
    (3, "decimate", 0.2),
    (3, "decimate", 0.3),
    (2, "decimate", 0.4),
    (2, "decimate", 0.5),
    (2, "decimate", 0.6),
    (2, "decimate", 0.75),
    (1, "gaussian_noise", 0.03),
]


def stock_corpus(seed=0, magnitude=0.25):
    """20 small meshes with seeded x0; the default verification corpus."""
    out = []
    for k, (sub, kind, mag) in enumerate(_STOCK_SPECS):
        mesh = gen_icosphere(sub)
        if kind is not None:
            mesh = apply_distortion(mesh, DistortionSpec(kind, mag,
                                                         seed=seed * 1000 + k))
        out.append((mesh, make_x0(mesh, magnitude, seed * 10000 + 7 * k + 1)))
    return out


_BENCH_SPECS = [
    (3, "decimate", 0.45),
    (3, "decimate", 0.55),
    (3, "decimate", 0.65),
    (3, "decimate", 0.75),
    (2, "decimate", 0.5),
    (2, "decimate", 0.7),
    (3, "gaussian_noise", 0.02),
    (2, "gaussian_noise", 0.04),
    (3, "quantize_position", 9),
    (2, None, 0.0),
]

_HELDOUT_SPECS = [
    (3, "decimate", 0.4),
    (3, "decimate", 0.5),
    (3, "decimate", 0.6),
    (3, "decimate", 0.7),
    (2, "decimate", 0.45),
    (2, "decimate", 0.65),
    (3, "gaussian_noise", 0.03),
    (2, "gaussian_noise", 0.05),
    (3, "quantize_position", 8),
    (3, None, 0.0),
]


def bench_corpus(seed=0, magnitude=0.15, held_out=False):
    """10 meshes (<= 642 vertices) for training, or the held-out set when
    ``held_out``; decimation-heavy, mirroring distorted-dataset conditions."""
    specs = _HELDOUT_SPECS if held_out else _BENCH_SPECS
    base = 500_000 if held_out else 0
    out = []
    for k, (sub, kind, mag) in enumerate(specs):
        mesh = gen_icosphere(sub)
        if kind is not None:
            mesh = apply_distortion(
                mesh, DistortionSpec(kind, mag, seed=base + seed * 1000 + k))
        out.append((mesh, make_x0(mesh, magnitude, base + seed * 10000 + 3 * k + 2)))
    return out
