"""Cotangent-weight Laplacian assembly and the sparse operations the solver
is built on: the O(nnz) syndrome product, the infinity norm, and quadratic
forms. Storage is plain compressed-row with sorted columns; nothing here
factorizes or solves anything."""
from __future__ import annotations

import logging

import numpy as np

from .errors import ParseError
from .mesh import corner_angles, edge_lengths, _check_log_radii

logger = logging.getLogger("microricci")

__all__ = [
    "SparseSym",
    "build_cotan_laplacian",
    "syndrome",
    "inf_norm",
    "quadratic_form",
    "dump_matrix",
    "load_matrix",
]

COT_CAP = 1e12  # |cot| above this is clamped (near-degenerate corner)


class SparseSym:
    """Symmetric sparse matrix in compressed-row form.

    ``values[row_offsets[i]:row_offsets[i+1]]`` are row i's entries at columns
    ``col_indices[...]``, sorted ascending. Assembly stores (i, j) and (j, i)
    from the same accumulated weight, so symmetry is exact.
    """

    __slots__ = ("n", "row_offsets", "col_indices", "values")

    def __init__(self, n, row_offsets, col_indices, values):
        self.n = int(n)
        self.row_offsets = np.ascontiguousarray(row_offsets, dtype=np.int64)
        self.col_indices = np.ascontiguousarray(col_indices, dtype=np.int64)
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        for a in (self.row_offsets, self.col_indices, self.values):
            a.setflags(write=False)

    @classmethod
    def from_triplets(cls, n, rows, cols, vals):
        """Build from COO triplets, accumulating duplicates."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if len(rows):
            new = np.empty(len(rows), dtype=bool)
            new[0] = True
            new[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            idx = np.flatnonzero(new)
            vals = np.add.reduceat(vals, idx)
            rows, cols = rows[idx], cols[idx]
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n), out=offsets[1:])
        return cls(n, offsets, cols, vals)

    @property
    def nnz(self):
        return len(self.values)

    def matvec(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise ValueError(f"dimension mismatch: matrix is {self.n}, vector {x.shape}")
        prod = self.values * x[self.col_indices]
        # rows are never empty here (diagonal always stored), so reduceat is safe
        return np.add.reduceat(prod, self.row_offsets[:-1])

    def row(self, i):
        """(column indices, values) of row i — equals column i by symmetry."""
        lo, hi = self.row_offsets[i], self.row_offsets[i + 1]
        return self.col_indices[lo:hi], self.values[lo:hi]

    def diagonal(self):
        d = np.zeros(self.n)
        for i in range(self.n):
            cols, vals = self.row(i)
            k = np.searchsorted(cols, i)
            if k < len(cols) and cols[k] == i:
                d[i] = vals[k]
        return d

    def to_dense(self):
        A = np.zeros((self.n, self.n))
        for i in range(self.n):
            cols, vals = self.row(i)
            A[i, cols] = vals
        return A

    def __repr__(self):
        return f"SparseSym(n={self.n}, nnz={self.nnz})"


def build_cotan_laplacian(mesh, x, clamp=False, cot_cap=COT_CAP, clamped_out=None):
    """Assemble H for the metric induced by x.

    Off-diagonal H_ij = -(cot a_ij + cot b_ij)/2 over the two angles opposite
    edge (i, j); diagonal H_ii = -sum of the row's off-diagonals, so row sums
    vanish. Cotangents beyond ``cot_cap`` in magnitude are clamped with a
    logged warning so sweeps over badly distorted meshes can finish.
    """
    x = _check_log_radii(mesh, x)
    ang = corner_angles(mesh, edge_lengths(mesh, x), clamp=clamp,
                        clamped_out=clamped_out)
    with np.errstate(divide="ignore"):
        cot = np.cos(ang) / np.sin(ang)
    over = ~np.isfinite(cot) | (np.abs(cot) > cot_cap)
    if over.any():
        logger.warning(
            "clamping %d cotangent(s) with |cot| > %.1e (near-degenerate corners)",
            int(over.sum()), cot_cap,
        )
        cot = np.clip(np.nan_to_num(cot, nan=cot_cap, posinf=cot_cap,
                                    neginf=-cot_cap), -cot_cap, cot_cap)

    m = mesh.n_edges
    w = np.bincount(mesh.face_edges.ravel(), weights=(0.5 * cot).ravel(),
                    minlength=m)
    e0, e1 = mesh.edges[:, 0], mesh.edges[:, 1]
    n = mesh.n_vertices
    diag = np.bincount(e0, weights=w, minlength=n) + np.bincount(
        e1, weights=w, minlength=n)
    rows = np.concatenate([e0, e1, np.arange(n)])
    cols = np.concatenate([e1, e0, np.arange(n)])
    vals = np.concatenate([-w, -w, diag])
    return SparseSym.from_triplets(n, rows, cols, vals)


def syndrome(H, x):
    """Residual s = H x in O(nnz)."""
    return H.matvec(x)


def inf_norm(H):
    """max_i sum_j |H_ij|."""
    if H.nnz == 0:
        return 0.0
    return float(np.add.reduceat(np.abs(H.values), H.row_offsets[:-1]).max())


def quadratic_form(H, v):
    """v' H v. Equals the edge sum over (-H_ij)(v_i - v_j)^2 when rows sum to 0."""
    v = np.asarray(v, dtype=np.float64)
    return float(v @ H.matvec(v))


def dump_matrix(H, path):
    """Text triplet dump: header ``n nnz``, then one ``i j value`` line per
    stored entry (both symmetric halves and the diagonal)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{H.n} {H.nnz}\n")
        for i in range(H.n):
            cols, vals = H.row(i)
            for j, v in zip(cols, vals):
                fh.write(f"{i} {j} {v:.17g}\n")


def load_matrix(path):
    """Inverse of :func:`dump_matrix`."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ParseError("matrix header must be 'n nnz'", 1)
        n, nnz = int(header[0]), int(header[1])
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=np.float64)
        for k in range(nnz):
            parts = fh.readline().split()
            if len(parts) != 3:
                raise ParseError("expected 'i j value'", k + 2)
            rows[k], cols[k], vals[k] = int(parts[0]), int(parts[1]), float(parts[2])
    return SparseSym.from_triplets(n, rows, cols, vals)
