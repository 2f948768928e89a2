"""Triangle mesh representation, OBJ I/O, icosphere generation, and the
discrete metric quantities (edge lengths, corner angles, angle-deficit
curvature) induced by per-vertex log-radii.

The metric is purely combinatorial-conformal: every edge length is
exp((x_i + x_j)/2) for the log-radius vector x, so x = 0 gives the unit
equilateral metric on any mesh. Embedded vertex positions play no role in
curvature; they are kept for geometric-fidelity metrics and I/O.
"""
from __future__ import annotations

import numpy as np

from .errors import DegenerateTriangleError, ParseError, TopologyError

__all__ = [
    "TriMesh",
    "load_obj",
    "save_obj",
    "gen_icosphere",
    "edge_lengths",
    "corner_angles",
    "gauss_curvature",
    "project_sum_zero",
]


class TriMesh:
    """Closed orientable triangle mesh.

    Parameters
    ----------
    positions : (n, 3) float array
        Vertex coordinates in model units.
    faces : (F, 3) int array
        Vertex indices per face, counterclockwise.
    uv : (F, 3, 2) float array, optional
        Per-corner texture coordinates (wedge UVs, so seams are representable).
    validate : bool
        Check the closed-manifold invariants (on by default).

    Attributes
    ----------
    edges : (m, 2) int array
        Unique undirected edges, each row sorted, rows in lexicographic order.
    face_edges : (F, 3) int array
        ``face_edges[f, c]`` is the edge id opposite corner ``c`` of face ``f``.
    ring_offsets, ring_indices : int arrays
        CSR layout of the one-ring: neighbors of vertex ``i`` are
        ``ring_indices[ring_offsets[i]:ring_offsets[i+1]]``, sorted.
    """

    def __init__(self, positions, faces, uv=None, validate=True):
        positions = np.ascontiguousarray(positions, dtype=np.float64)
        faces = np.ascontiguousarray(faces, dtype=np.int64)
        if positions.ndim != 2 or positions.shape[1] != 3:
            raise TopologyError(f"positions must be (n, 3), got {positions.shape}")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise TopologyError(f"faces must be (F, 3), got {faces.shape}")
        self.positions = positions
        self.faces = faces
        self.uv = None if uv is None else np.ascontiguousarray(uv, dtype=np.float64)
        if self.uv is not None and self.uv.shape != (len(faces), 3, 2):
            raise TopologyError(
                f"uv must be (F, 3, 2) = {(len(faces), 3, 2)}, got {self.uv.shape}"
            )

        n = len(positions)
        if validate:
            self._validate_faces(n)

        # Undirected edge table from halfedges; every edge must appear exactly twice.
        half = np.vstack([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
        und = np.sort(half, axis=1)
        self.edges, inverse, counts = np.unique(
            und, axis=0, return_inverse=True, return_counts=True
        )
        if validate:
            self._validate_manifold(half, counts, n)

        # face_edges: halfedge k of face f is (v_k, v_{k+1}), which is the edge
        # opposite corner (k+2) mod 3.  Reorder so column c is opposite corner c.
        F = len(faces)
        fe = inverse.reshape(3, F).T  # columns: (01, 12, 20) -> opposite (2, 0, 1)
        self.face_edges = np.ascontiguousarray(fe[:, [1, 2, 0]])

        # One-ring CSR, neighbors sorted per vertex.
        src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        order = np.lexsort((dst, src))
        self.ring_indices = np.ascontiguousarray(dst[order])
        self.ring_offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n), out=self.ring_offsets[1:])

        if validate and np.any(np.diff(self.ring_offsets) == 0):
            lonely = int(np.flatnonzero(np.diff(self.ring_offsets) == 0)[0])
            raise TopologyError(f"vertex {lonely} is not referenced by any face")
        chi = self.euler_characteristic
        if validate and chi % 2 != 0:
            raise TopologyError(f"Euler characteristic {chi} is odd")

        for arr in (self.positions, self.faces, self.edges, self.face_edges,
                    self.ring_indices, self.ring_offsets):
            arr.setflags(write=False)
        if self.uv is not None:
            self.uv.setflags(write=False)

    def _validate_faces(self, n):
        f = self.faces
        if f.size and (f.min() < 0 or f.max() >= n):
            raise TopologyError("face references a vertex index out of range")
        degen = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 2] == f[:, 0])
        if degen.any():
            raise TopologyError(
                f"face {int(np.flatnonzero(degen)[0])} repeats a vertex index"
            )

    def _validate_manifold(self, half, counts, n):
        if (counts != 2).any():
            eid = int(np.flatnonzero(counts != 2)[0])
            i, j = self.edges[eid]
            kind = "boundary" if counts[eid] == 1 else "non-manifold"
            raise TopologyError(
                f"{kind} edge ({i}, {j}): shared by {counts[eid]} faces, need 2"
            )
        # Orientability: each *directed* halfedge must occur exactly once.
        _, dcounts = np.unique(half, axis=0, return_counts=True)
        if (dcounts != 1).any():
            raise TopologyError("inconsistent winding: repeated directed halfedge")

    # -- basic counts ---------------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.positions)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_faces(self):
        return len(self.faces)

    @property
    def euler_characteristic(self):
        return self.n_vertices - self.n_edges + self.n_faces

    @property
    def degrees(self):
        """Vertex valences, shape (n,)."""
        return np.diff(self.ring_offsets)

    def one_ring(self, i):
        """Sorted neighbor indices of vertex ``i``."""
        return self.ring_indices[self.ring_offsets[i]:self.ring_offsets[i + 1]]

    @property
    def bbox_diagonal(self):
        ext = self.positions.max(axis=0) - self.positions.min(axis=0)
        return float(np.linalg.norm(ext))

    def embedded_edge_lengths(self):
        """Euclidean lengths of the embedded edges, shape (m,)."""
        d = self.positions[self.edges[:, 0]] - self.positions[self.edges[:, 1]]
        return np.linalg.norm(d, axis=1)

    def with_positions(self, positions, uv="keep"):
        """New mesh with the same topology and different coordinates."""
        return TriMesh(positions, self.faces,
                       uv=self.uv if uv == "keep" else uv, validate=False)

    def __repr__(self):
        return (f"TriMesh(n={self.n_vertices}, m={self.n_edges}, "
                f"F={self.n_faces}, chi={self.euler_characteristic})")


# -- OBJ I/O -------------------------------------------------------------------


def load_obj(path):
    """Read a Wavefront OBJ file into a :class:`TriMesh`.

    Supports ``v``, ``vt`` and triangular ``f`` records (``a b c``, ``a/at ...``
    or ``a/at/an ...``; normal indices are ignored). Raises
    :class:`ParseError` with a line number on malformed records and
    :class:`TopologyError` on non-triangles or manifold violations.
    """
    verts, uvs = [], []
    face_v, face_t = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            tok = raw.split()
            if not tok or tok[0].startswith("#"):
                continue
            key = tok[0]
            if key == "v":
                if len(tok) < 4:
                    raise ParseError("vertex needs 3 coordinates", lineno)
                try:
                    verts.append([float(t) for t in tok[1:4]])
                except ValueError as exc:
                    raise ParseError(f"bad vertex coordinate: {exc}", lineno) from None
            elif key == "vt":
                if len(tok) < 3:
                    raise ParseError("texture vertex needs 2 coordinates", lineno)
                try:
                    uvs.append([float(tok[1]), float(tok[2])])
                except ValueError as exc:
                    raise ParseError(f"bad texture coordinate: {exc}", lineno) from None
            elif key == "f":
                corners = tok[1:]
                if len(corners) != 3:
                    raise TopologyError(
                        f"face {len(face_v)} has {len(corners)} vertices "
                        f"(line {lineno}); only triangles are supported"
                    )
                vi, ti = [], []
                for c in corners:
                    parts = c.split("/")
                    try:
                        v = int(parts[0])
                        t = int(parts[1]) if len(parts) > 1 and parts[1] else None
                    except ValueError:
                        raise ParseError(f"bad face corner {c!r}", lineno) from None
                    if v < 0 or (t is not None and t < 0):
                        raise ParseError("negative OBJ indices unsupported", lineno)
                    vi.append(v - 1)
                    ti.append(None if t is None else t - 1)
                face_v.append(vi)
                face_t.append(ti)
            # o/g/s/vn/usemtl/mtllib records are ignored

    if not verts:
        raise ParseError("no vertices in file")
    if not face_v:
        raise ParseError("no faces in file")

    uv = None
    has_t = [all(t is not None for t in ti) for ti in face_t]
    if any(has_t):
        if not all(has_t):
            bad = has_t.index(False)
            raise ParseError(f"face {bad} lacks texture indices while others have them")
        uvarr = np.asarray(uvs, dtype=np.float64)
        tind = np.asarray(face_t, dtype=np.int64)
        if tind.size and (tind.min() < 0 or tind.max() >= len(uvarr)):
            raise ParseError("face texture index out of range")
        uv = uvarr[tind]

    return TriMesh(np.asarray(verts), np.asarray(face_v), uv=uv)


def save_obj(mesh, path):
    """Write ``mesh`` as ASCII OBJ. Coordinates use 17 significant digits so a
    load/save round trip reproduces positions exactly."""
    lines = []
    for p in mesh.positions:
        lines.append(f"v {p[0]:.17g} {p[1]:.17g} {p[2]:.17g}")
    if mesh.uv is None:
        for f in mesh.faces:
            lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    else:
        uv_index = {}
        uv_lines = []
        corner_ids = np.empty((mesh.n_faces, 3), dtype=np.int64)
        for fi in range(mesh.n_faces):
            for c in range(3):
                key = (mesh.uv[fi, c, 0], mesh.uv[fi, c, 1])
                if key not in uv_index:
                    uv_index[key] = len(uv_index)
                    uv_lines.append(f"vt {key[0]:.17g} {key[1]:.17g}")
                corner_ids[fi, c] = uv_index[key]
        lines.extend(uv_lines)
        for fi, f in enumerate(mesh.faces):
            t = corner_ids[fi]
            lines.append(
                f"f {f[0] + 1}/{t[0] + 1} {f[1] + 1}/{t[1] + 1} {f[2] + 1}/{t[2] + 1}"
            )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


# -- synthetic generation --------------------------------------------------------

_PHI = (1.0 + np.sqrt(5.0)) / 2.0
_ICO_VERTS = np.array([
    [-1, _PHI, 0], [1, _PHI, 0], [-1, -_PHI, 0], [1, -_PHI, 0],
    [0, -1, _PHI], [0, 1, _PHI], [0, -1, -_PHI], [0, 1, -_PHI],
    [_PHI, 0, -1], [_PHI, 0, 1], [-_PHI, 0, -1], [-_PHI, 0, 1],
], dtype=np.float64)
_ICO_FACES = np.array([
    [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
    [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
    [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
    [5, 4, 9], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
], dtype=np.int64)


def gen_icosphere(subdivisions, radius=1.0):
    """Icosahedron subdivided ``subdivisions`` times and projected to a sphere.

    Gives |F| = 20·4^s faces and n = 10·4^s + 2 vertices; subdivisions must be
    at most 7 (|F| = 327 680).
    """
    s = int(subdivisions)
    if s < 0 or s > 7:
        raise ValueError(f"subdivisions must be in [0, 7], got {subdivisions}")
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    v = _ICO_VERTS.copy()
    f = _ICO_FACES.copy()
    for _ in range(s):
        und = np.sort(np.vstack([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
        edges, inv = np.unique(und, axis=0, return_inverse=True)
        mid = v[edges[:, 0]] + v[edges[:, 1]]
        mids = len(v) + inv.reshape(3, len(f)).T  # columns: edges (01, 12, 20)
        v = np.vstack([v, mid])
        a, b, c = f[:, 0], f[:, 1], f[:, 2]
        ab, bc, ca = mids[:, 0], mids[:, 1], mids[:, 2]
        f = np.vstack([
            np.column_stack([a, ab, ca]),
            np.column_stack([b, bc, ab]),
            np.column_stack([c, ca, bc]),
            np.column_stack([ab, bc, ca]),
        ])
    v *= radius / np.linalg.norm(v, axis=1, keepdims=True)
    return TriMesh(v, f)


# -- discrete metric -------------------------------------------------------------


def edge_lengths(mesh, x):
    """Per-edge lengths exp((x_i + x_j)/2) of the metric induced by log-radii x."""
    x = _check_log_radii(mesh, x)
    return np.exp(0.5 * (x[mesh.edges[:, 0]] + x[mesh.edges[:, 1]]))


def corner_angles(mesh, lengths, clamp=False, clamped_out=None):
    """Corner angles (F, 3) from per-edge lengths via the law of cosines.

    Column ``c`` holds the angle at corner ``c`` (opposite edge
    ``mesh.face_edges[:, c]``). Angles of a valid face sum to pi to machine
    precision. Without ``clamp``, a triangle-inequality violation raises
    :class:`DegenerateTriangleError` naming the face; with ``clamp`` the cosine
    is clipped to [-1, 1] and offending face ids are appended to
    ``clamped_out`` (a list) when provided.
    """
    L = lengths[mesh.face_edges]  # (F, 3); L[:, c] opposite corner c
    opp = L
    adj1 = L[:, [1, 2, 0]]
    adj2 = L[:, [2, 0, 1]]
    cos = (adj1**2 + adj2**2 - opp**2) / (2.0 * adj1 * adj2)
    bad = np.abs(cos) >= 1.0
    if bad.any():
        if not clamp:
            fi = int(np.flatnonzero(bad.any(axis=1))[0])
            raise DegenerateTriangleError(fi, L[fi])
        if clamped_out is not None:
            clamped_out.extend(np.flatnonzero(bad.any(axis=1)).tolist())
        cos = np.clip(cos, -1.0, 1.0)
    return np.arccos(cos)


def gauss_curvature(mesh, x, clamp=False, clamped_out=None):
    """Angle-deficit curvature K_i = 2*pi - sum of corner angles at vertex i.

    Sums to 2*pi*chi over any closed mesh (discrete Gauss-Bonnet) regardless
    of x, because each valid face contributes exactly pi.
    """
    ang = corner_angles(mesh, edge_lengths(mesh, x), clamp=clamp,
                        clamped_out=clamped_out)
    K = np.full(mesh.n_vertices, 2.0 * np.pi)
    K -= np.bincount(mesh.faces.ravel(), weights=ang.ravel(),
                     minlength=mesh.n_vertices)
    return K


def project_sum_zero(x):
    """Remove the mean: the component along the all-ones nullspace direction."""
    x = np.asarray(x, dtype=np.float64)
    return x - x.mean()


def _check_log_radii(mesh, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (mesh.n_vertices,):
        raise ValueError(
            f"log-radii shape {x.shape} does not match vertex count {mesh.n_vertices}"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError("log-radii must be finite")
    return x
