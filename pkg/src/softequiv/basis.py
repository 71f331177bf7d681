"""Orthonormal bases of equivariant linear maps and invariant vectors.

Constraints are assembled from lifted group generators; a full dense SVD of
the stacked constraint matrix yields the null space, whose right singular
vectors below a relative cutoff form the basis columns.  ``vec`` is
column-stacking throughout, so for a map basis each column reshapes
(Fortran order) to an ``n_out x n_in`` matrix.

For direct-sum representations, ``structured_map_basis`` assembles the same
subspace block pair by block pair, which keeps every SVD small; the spanned
space (and hence every projector) is identical to the direct computation.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .groups import Group, Representation

__all__ = [
    "EquivariantBasis",
    "equivariant_map_basis",
    "invariant_vector_basis",
    "joint_basis",
    "joint_invariant_basis",
    "structured_map_basis",
    "structured_invariant_basis",
    "project",
    "residual",
    "residual_norm",
    "dump_basis_csv",
    "clear_basis_cache",
]

DEFAULT_TOLERANCE = 1e-8
DEFAULT_MAX_ENTRIES = 10_000_000

_SPARSE_DENSITY_CUTOFF = 0.25


@dataclass
class EquivariantBasis:
    """Orthonormal columns spanning a constraint null space.

    ambient_kind is ``("map", n_in, n_out)`` or ``("vector", n_out)``.
    """

    columns: np.ndarray
    ambient_kind: tuple
    tolerance: float
    groups: tuple[Group, ...]
    _csr: "sp.csr_matrix | None" = field(default=None, repr=False, compare=False)
    _csc: "sp.csc_matrix | None" = field(default=None, repr=False, compare=False)

    @property
    def ambient_dim(self) -> int:
        return self.columns.shape[0]

    @property
    def basis_dim(self) -> int:
        return self.columns.shape[1]

    def _ensure_sparse(self) -> None:
        if self._csr is None and self.basis_dim > 0:
            density = np.count_nonzero(self.columns) / self.columns.size
            if density < _SPARSE_DENSITY_CUTOFF:
                self._csr = sp.csr_matrix(self.columns)
                self._csc = sp.csc_matrix(self.columns)

    def coords(self, v: np.ndarray) -> np.ndarray:
        """Coefficients Q^T v of the projection onto the span."""
        self._ensure_sparse()
        if self._csc is not None:
            return self._csc.T @ v
        return self.columns.T @ v

    def expand(self, c: np.ndarray) -> np.ndarray:
        """Combination Q c of the basis columns."""
        self._ensure_sparse()
        if self._csr is not None:
            return self._csr @ c
        return self.columns @ c


def _null_space_basis(constraints: np.ndarray | None, ambient: int, tol: float) -> np.ndarray:
    if constraints is None or constraints.shape[0] == 0:
        return np.eye(ambient)
    # catalog generators have O(1) entries, so a max entry below the floor
    # means the constraint is satisfied identically up to rounding
    if np.abs(constraints).max() <= 1e-12:
        return np.eye(ambient)
    _, s, vt = np.linalg.svd(constraints, full_matrices=True)
    cutoff = tol * s[0]
    rank = int(np.sum(s >= cutoff))
    return vt[rank:].T.copy()


def _check_entries(rows: int, cols: int, max_entries: int) -> None:
    if rows * cols > max_entries:
        raise ValueError(
            f"constraint matrix would hold {rows * cols} entries "
            f"(> cap {max_entries}); raise max_entries or use the structured path"
        )


def _map_constraint_rows(rep_in: Representation, rep_out: Representation) -> list[np.ndarray]:
    """One constraint block per generator, acting on vec(W), W: n_out x n_in."""
    n_in, n_out = rep_in.dim, rep_out.dim
    eye_in, eye_out = np.eye(n_in), np.eye(n_out)
    rows = []
    for a in rep_in.group.lie_generators:
        da_in = rep_in.lift_lie(a)
        da_out = rep_out.lift_lie(a)
        rows.append(np.kron(da_in.T, eye_out) - np.kron(eye_in, da_out))
    for h in rep_in.group.discrete_generators:
        h_in = rep_in.lift(h)
        h_out_inv = np.linalg.inv(rep_out.lift(h))
        rows.append(np.kron(h_in.T, h_out_inv) - np.eye(n_in * n_out))
    return rows


def _vector_constraint_rows(rep_out: Representation) -> list[np.ndarray]:
    rows = []
    for a in rep_out.group.lie_generators:
        rows.append(rep_out.lift_lie(a))
    for h in rep_out.group.discrete_generators:
        rows.append(rep_out.lift(h) - np.eye(rep_out.dim))
    return rows


def joint_basis(
    groups: list[Group] | tuple[Group, ...],
    rep_in: Representation,
    rep_out: Representation,
    tolerance: float = DEFAULT_TOLERANCE,
    max_entries: int = DEFAULT_MAX_ENTRIES,
) -> EquivariantBasis:
    """Basis of maps equivariant to every group in the list simultaneously."""
    groups = tuple(groups)
    if not groups:
        raise ValueError("joint_basis requires at least one group")
    ambient = rep_in.dim * rep_out.dim
    rows: list[np.ndarray] = []
    for g in groups:
        ri, ro = rep_in.with_group(g), rep_out.with_group(g)
        blocks = _map_constraint_rows(ri, ro)
        _check_entries(ambient * (len(rows) + len(blocks)), ambient, max_entries)
        rows.extend(blocks)
    constraints = np.vstack(rows) if rows else None
    cols = _null_space_basis(constraints, ambient, tolerance)
    return EquivariantBasis(cols, ("map", rep_in.dim, rep_out.dim), tolerance, groups)


def equivariant_map_basis(
    rep_in: Representation,
    rep_out: Representation,
    tolerance: float = DEFAULT_TOLERANCE,
    max_entries: int = DEFAULT_MAX_ENTRIES,
) -> EquivariantBasis:
    """Basis of linear maps W with rho_out(g) W = W rho_in(g) for all g."""
    if rep_in.group != rep_out.group:
        raise ValueError("input and output representations belong to different groups")
    return joint_basis([rep_in.group], rep_in, rep_out, tolerance, max_entries)


def joint_invariant_basis(
    groups: list[Group] | tuple[Group, ...],
    rep_out: Representation,
    tolerance: float = DEFAULT_TOLERANCE,
    max_entries: int = DEFAULT_MAX_ENTRIES,
) -> EquivariantBasis:
    groups = tuple(groups)
    if not groups:
        raise ValueError("joint_invariant_basis requires at least one group")
    rows: list[np.ndarray] = []
    for g in groups:
        blocks = _vector_constraint_rows(rep_out.with_group(g))
        _check_entries(rep_out.dim * (len(rows) + len(blocks)), rep_out.dim, max_entries)
        rows.extend(blocks)
    constraints = np.vstack(rows) if rows else None
    cols = _null_space_basis(constraints, rep_out.dim, tolerance)
    return EquivariantBasis(cols, ("vector", rep_out.dim), tolerance, groups)


def invariant_vector_basis(
    rep_out: Representation,
    tolerance: float = DEFAULT_TOLERANCE,
    max_entries: int = DEFAULT_MAX_ENTRIES,
) -> EquivariantBasis:
    """Basis of vectors fixed by every representation matrix."""
    return joint_invariant_basis([rep_out.group], rep_out, tolerance, max_entries)


# ---------------------------------------------------------------------------
# Structured (blockwise) assembly for direct-sum representations
# ---------------------------------------------------------------------------

_cache_lock = threading.Lock()
_block_cache: dict[tuple, EquivariantBasis] = {}


def clear_basis_cache() -> None:
    with _cache_lock:
        _block_cache.clear()


def _cached_block_map_basis(
    groups: tuple[Group, ...], rep_in: Representation, rep_out: Representation, tol: float
) -> EquivariantBasis:
    key = (
        "map",
        tuple(g.name for g in groups),
        rep_in.structure_key(),
        rep_out.structure_key(),
        tol,
    )
    with _cache_lock:
        hit = _block_cache.get(key)
    if hit is not None:
        return hit
    basis = joint_basis(groups, rep_in, rep_out, tol)
    with _cache_lock:
        _block_cache.setdefault(key, basis)
    return basis


def _cached_block_vector_basis(
    groups: tuple[Group, ...], rep_out: Representation, tol: float
) -> EquivariantBasis:
    key = ("vector", tuple(g.name for g in groups), rep_out.structure_key(), tol)
    with _cache_lock:
        hit = _block_cache.get(key)
    if hit is not None:
        return hit
    basis = joint_invariant_basis(groups, rep_out, tol)
    with _cache_lock:
        _block_cache.setdefault(key, basis)
    return basis


def structured_map_basis(
    groups: list[Group] | tuple[Group, ...],
    rep_in: Representation,
    rep_out: Representation,
    tolerance: float = DEFAULT_TOLERANCE,
) -> EquivariantBasis:
    """Equivariant-map basis assembled per direct-sum block pair.

    Spans the same subspace as the direct computation but never runs an SVD
    larger than the biggest block pair, so it stays cheap for wide layers.
    """
    groups = tuple(groups)
    n_in, n_out = rep_in.dim, rep_out.dim
    blocks_in = rep_in.blocks()
    blocks_out = rep_out.blocks()
    col_chunks: list[np.ndarray] = []
    for ci, bi in blocks_in:
        for ro, bo in blocks_out:
            small = _cached_block_map_basis(groups, bi, bo, tolerance)
            d = small.basis_dim
            if d == 0:
                continue
            # vec index (col-major) of block entry (rr, cc): (ci+cc)*n_out + ro+rr
            rr, cc = np.meshgrid(np.arange(bo.dim), np.arange(bi.dim), indexing="ij")
            idx = ((ci + cc) * n_out + (ro + rr)).reshape(-1, order="F")
            chunk = np.zeros((n_in * n_out, d))
            chunk[idx, :] = small.columns
            col_chunks.append(chunk)
    if col_chunks:
        cols = np.hstack(col_chunks)
    else:
        cols = np.zeros((n_in * n_out, 0))
    return EquivariantBasis(cols, ("map", n_in, n_out), tolerance, groups)


def structured_invariant_basis(
    groups: list[Group] | tuple[Group, ...],
    rep_out: Representation,
    tolerance: float = DEFAULT_TOLERANCE,
) -> EquivariantBasis:
    groups = tuple(groups)
    n_out = rep_out.dim
    col_chunks: list[np.ndarray] = []
    for ro, bo in rep_out.blocks():
        small = _cached_block_vector_basis(groups, bo, tolerance)
        if small.basis_dim == 0:
            continue
        chunk = np.zeros((n_out, small.basis_dim))
        chunk[ro : ro + bo.dim, :] = small.columns
        col_chunks.append(chunk)
    cols = np.hstack(col_chunks) if col_chunks else np.zeros((n_out, 0))
    return EquivariantBasis(cols, ("vector", n_out), tolerance, groups)


# ---------------------------------------------------------------------------
# Projection operators
# ---------------------------------------------------------------------------


def project(basis: EquivariantBasis, v: np.ndarray) -> np.ndarray:
    """Orthogonal projection Q (Q^T v) onto the spanned subspace."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] != basis.ambient_dim:
        raise ValueError(f"vector dim {v.shape[0]} != ambient dim {basis.ambient_dim}")
    if basis.basis_dim == 0:
        return np.zeros_like(v)
    return basis.expand(basis.coords(v))


def residual(basis: EquivariantBasis, v: np.ndarray) -> np.ndarray:
    """Component of v orthogonal to the spanned subspace."""
    return np.asarray(v, dtype=float) - project(basis, v)


def residual_norm(basis: EquivariantBasis, v: np.ndarray) -> float:
    return float(np.linalg.norm(residual(basis, v)))


def dump_basis_csv(basis: EquivariantBasis, path: str) -> None:
    """Write the basis columns as headerless CSV, one column per line."""
    with open(path, "w", encoding="ascii") as fh:
        for j in range(basis.basis_dim):
            fh.write(",".join(repr(float(x)) for x in basis.columns[:, j]) + "\n")
