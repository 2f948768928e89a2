"""Synthetic mesh distortions: Gaussian position noise, coordinate
quantization, and shortest-edge-collapse decimation. All are deterministic
given the spec's seed."""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .errors import DecimationError
from .mesh import TriMesh

__all__ = ["DistortionSpec", "apply_distortion"]

DISTORTION_KINDS = ("gaussian_noise", "quantize_position", "decimate")

# documented magnitude ranges per kind
_RANGES = {
    "gaussian_noise": (0.0, 0.2),     # sigma as fraction of bbox diagonal
    "quantize_position": (1, 52),     # bit depth
    "decimate": (0.0, 1.0),           # target vertex fraction, (0, 1]
}


@dataclass(frozen=True)
class DistortionSpec:
    """One distortion to apply: ``kind``, ``magnitude``, 64-bit ``seed``."""

    kind: str
    magnitude: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DISTORTION_KINDS:
            raise ValueError(f"unknown distortion kind {self.kind!r}")
        lo, hi = _RANGES[self.kind]
        if self.kind == "quantize_position":
            if int(self.magnitude) != self.magnitude or not lo <= self.magnitude <= hi:
                raise ValueError(f"bit depth must be an integer in [{lo}, {hi}]")
        elif self.kind == "decimate":
            if not lo < self.magnitude <= hi:
                raise ValueError(f"vertex fraction must be in ({lo}, {hi}]")
        elif not lo <= self.magnitude <= hi:
            raise ValueError(f"noise magnitude must be in [{lo}, {hi}]")

    def to_dict(self):
        return {"kind": self.kind, "magnitude": self.magnitude, "seed": self.seed}


def apply_distortion(mesh, spec):
    """Return a new distorted mesh; the input is never modified.

    gaussian_noise and quantize_position keep the topology (and UVs);
    decimate re-triangulates by iterative shortest-edge collapse and drops UVs.
    """
    if spec.kind == "gaussian_noise":
        if spec.magnitude == 0.0:
            return mesh.with_positions(mesh.positions.copy())
        rng = np.random.default_rng(spec.seed)
        sigma = spec.magnitude * mesh.bbox_diagonal
        noise = rng.normal(0.0, sigma, size=mesh.positions.shape)
        return mesh.with_positions(mesh.positions + noise)
    if spec.kind == "quantize_position":
        bits = int(spec.magnitude)
        step = mesh.bbox_diagonal / float(2**bits)
        lo = mesh.positions.min(axis=0)
        q = lo + np.round((mesh.positions - lo) / step) * step
        return mesh.with_positions(q)
    return _decimate(mesh, spec.magnitude)


def _decimate(mesh, fraction):
    """Collapse shortest embedded edges until round(n * fraction) vertices remain.

    A collapse (u, v) -> midpoint is allowed only under the link condition
    (shared neighbors of u and v are exactly the two face apexes), which keeps
    the mesh closed and manifold. Deterministic: ties break on vertex ids.
    """
    n = mesh.n_vertices
    target = int(round(n * fraction))
    if target < 4:
        raise DecimationError(
            f"target fraction {fraction} would leave {target} < 4 vertices"
        )
    if target >= n:
        return TriMesh(mesh.positions.copy(), mesh.faces.copy(), uv=None,
                       validate=False)

    pos = mesh.positions.copy()
    adj = [set(mesh.one_ring(i).tolist()) for i in range(n)]
    # oriented faces, dropped by setting to None
    faces = [tuple(f) for f in mesh.faces.tolist()]
    vert_faces = [set() for _ in range(n)]
    for fi, f in enumerate(faces):
        for v in f:
            vert_faces[v].add(fi)

    def length(u, v):
        return float(np.linalg.norm(pos[u] - pos[v]))

    heap = [(length(i, j), int(i), int(j)) for i, j in mesh.edges]
    heapq.heapify(heap)
    alive = n

    while alive > target and heap:
        ln, u, v = heapq.heappop(heap)
        if v not in adj[u]:
            continue  # stale: edge no longer exists
        cur = length(u, v)
        if abs(cur - ln) > 1e-12 * max(1.0, cur):
            heapq.heappush(heap, (cur, u, v))  # stale priority after a reposition
            continue
        shared = vert_faces[u] & vert_faces[v]
        if len(shared) != 2:
            continue
        apexes = set()
        for fi in shared:
            apexes.update(faces[fi])
        apexes -= {u, v}
        if adj[u] & adj[v] != apexes:
            continue  # link condition fails: collapse would pinch the surface
        if alive - 1 < 4:
            break

        pos[u] = 0.5 * (pos[u] + pos[v])
        for fi in shared:
            for w in faces[fi]:
                vert_faces[w].discard(fi)
            faces[fi] = None
        for fi in list(vert_faces[v]):
            f = faces[fi]
            faces[fi] = tuple(u if w == v else w for w in f)
            vert_faces[v].discard(fi)
            vert_faces[u].add(fi)
        for w in adj[v]:
            if w != u:
                adj[w].discard(v)
                adj[w].add(u)
                adj[u].add(w)
        adj[u].discard(v)
        adj[u].discard(u)
        adj[v] = set()
        alive -= 1
        for w in sorted(adj[u]):
            heapq.heappush(heap, (length(u, w), u, w))

    if alive > target:
        raise DecimationError(
            f"no valid collapse remains at {alive} vertices (target {target})"
        )

    kept = sorted({w for f in faces if f is not None for w in f})
    remap = {old: new for new, old in enumerate(kept)}
    new_faces = np.array(
        [[remap[a], remap[b], remap[c]] for f in faces if f is not None
         for a, b, c in [f]],
        dtype=np.int64,
    )
    try:
        return TriMesh(pos[kept], new_faces)
    except Exception as exc:  # pragma: no cover - link condition should prevent this
        raise DecimationError(f"collapse produced an invalid mesh: {exc}") from exc
