"""Additive Schwarz and block-Jacobi smoothers on structured grids.

Both smoothers precompute their local factorizations once per level and
reuse them across all applications.  An application always starts from
a zero correction, so smoothers are linear operators on the residual;
overlap contributions in the Schwarz sweep are summed without damping
because the surrounding minimization absorbs any overcorrection.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NumericalFailureError, SingularMatrixError
from .sparse import DenseMatrix, lu_factor, lu_solve, spmv

__all__ = [
    "Partition",
    "partition_cells",
    "SchwarzSmoother",
    "schwarz_setup",
    "schwarz_apply",
    "BlockJacobiSmoother",
    "bj_setup",
    "bj_apply",
]


@dataclass(eq=False)
class Partition:
    """Disjoint core cells plus overlap-extended cells per subdomain."""

    n_subdomains: int
    core_cells: list
    extended_cells: list
    overlap_width: int


class _UnsplittableError(Exception):
    pass


def _bisect(lo, hi, n_parts, out):
    """Recursively halve the box ``[lo, hi)`` into ``n_parts`` boxes."""
    if n_parts == 1:
        out.append((lo, hi))
        return
    n_left = (n_parts + 1) // 2
    n_right = n_parts - n_left
    extents = [h - l for l, h in zip(lo, hi)]
    total = int(np.prod(extents))
    for axis in sorted(range(len(lo)), key=lambda a: -extents[a]):
        e = extents[axis]
        if e < 2:
            continue
        slab = total // e  # cells per unit cut along this axis
        t_min = -(-n_left // slab)  # ceil: left box must hold n_left parts
        t_max = e - (-(-n_right // slab))
        if t_min > t_max:
            continue
        t = min(max(round(e * n_left / n_parts), t_min), t_max)
        mid_hi = list(hi)
        mid_hi[axis] = lo[axis] + t
        mid_lo = list(lo)
        mid_lo[axis] = lo[axis] + t
        _bisect(lo, tuple(mid_hi), n_left, out)
        _bisect(tuple(mid_lo), hi, n_right, out)
        return
    raise _UnsplittableError


def _feasible(cells_per_axis, dimension, n_subdomains):
    try:
        _bisect((0,) * dimension, (cells_per_axis,) * dimension, n_subdomains, [])
        return True
    except _UnsplittableError:
        return False


def _grow_mask(mask, layers):
    """Add ``layers`` rings of face neighbours to a boolean cell mask."""
    m = mask
    for _ in range(layers):
        grown = m.copy()
        for axis in range(m.ndim):
            src_lo = [slice(None)] * m.ndim
            dst_lo = [slice(None)] * m.ndim
            src_lo[axis] = slice(1, None)
            dst_lo[axis] = slice(None, -1)
            grown[tuple(dst_lo)] |= m[tuple(src_lo)]
            grown[tuple(src_lo)] |= m[tuple(dst_lo)]
        m = grown
    return m


def partition_cells(cells_per_axis, dimension, n_subdomains, overlap):
    """Partition a structured grid by recursive coordinate bisection.

    Parameters
    ----------
    cells_per_axis : int
        Cells along each axis (the grid is ``cells_per_axis**dimension``).
    dimension : int
    n_subdomains : int
        Number of parts; cores cover the grid disjointly and their sizes
        differ by at most one cut slab.
    overlap : int
        Rings of face neighbours added to each core to form the extended
        sets.

    Raises
    ------
    ValueError
        If the requested count cannot be reached by bisecting this grid;
        the message names the closest achievable count.
    """
    if dimension < 1:
        raise ValueError("dimension must be at least 1")
    if cells_per_axis < 1:
        raise ValueError("cells_per_axis must be at least 1")
    if overlap < 0:
        raise ValueError("overlap must be non-negative")
    total = cells_per_axis**dimension
    if not 1 <= n_subdomains <= total:
        raise ValueError(
            f"n_subdomains must lie in [1, {total}] for this grid, got {n_subdomains}"
        )
    boxes = []
    try:
        _bisect((0,) * dimension, (cells_per_axis,) * dimension, n_subdomains, boxes)
    except _UnsplittableError:
        achievable = next(
            m
            for m in range(n_subdomains - 1, 0, -1)
            if _feasible(cells_per_axis, dimension, m)
        )
        raise ValueError(
            f"bisection of this grid cannot produce {n_subdomains} subdomains; "
            f"achievable count: {achievable}"
        ) from None

    shape = (cells_per_axis,) * dimension
    cores = []
    extended = []
    for lo, hi in boxes:
        mask = np.zeros(shape, dtype=bool)
        mask[tuple(slice(l, h) for l, h in zip(lo, hi))] = True
        cores.append(np.flatnonzero(mask.ravel()))
        ext = _grow_mask(mask, overlap) if overlap else mask
        extended.append(np.flatnonzero(ext.ravel()))
    return Partition(n_subdomains, cores, extended, overlap)


@dataclass(eq=False)
class SchwarzSmoother:
    """Overlapping subdomain solves with cached LU factors."""

    partition: Partition
    local_factors: list
    precision: str

    def apply(self, a, r, n_iterations=1, executor=None):
        return schwarz_apply(self, a, r, n_iterations, executor=executor)


def schwarz_setup(a, partition, precision="float64"):
    """Factorize the extended principal submatrix of every subdomain.

    Raises
    ------
    SingularMatrixError
        If a local block is singular; the message names the subdomain.
    """
    if a.n_rows != a.n_cols:
        raise ValueError("Schwarz setup requires a square matrix")
    covered = sum(core.size for core in partition.core_cells)
    if covered != a.n_rows:
        raise ValueError(
            f"partition covers {covered} cells but the matrix has {a.n_rows} rows"
        )
    factors = []
    sp = a._scipy
    for i, ext in enumerate(partition.extended_cells):
        block = sp[ext][:, ext].toarray()
        try:
            factors.append(lu_factor(DenseMatrix.from_array(block), precision))
        except SingularMatrixError as exc:
            raise SingularMatrixError(
                f"singular local matrix in subdomain {i}: {exc}"
            ) from None
    return SchwarzSmoother(partition, factors, precision)


def schwarz_apply(smoother, a, r, n_iterations=1, executor=None):
    """Run ``n_iterations`` additive Schwarz sweeps against residual ``r``.

    Every sweep recomputes the defect of the accumulated correction,
    solves each extended subdomain against it, and sums the local
    corrections; overlapping cells simply receive both contributions.
    Returns the correction ``z`` (the caller folds it into the iterate).
    """
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (a.n_rows,):
        raise ValueError("residual length does not match the matrix")
    if n_iterations < 1:
        raise ValueError("n_iterations must be at least 1")
    parts = smoother.partition.extended_cells
    factors = smoother.local_factors
    z = np.zeros_like(r)
    for sweep in range(n_iterations):
        defect = r if sweep == 0 else r - spmv(a, z)
        if not np.isfinite(defect).all():
            raise NumericalFailureError("non-finite defect in Schwarz sweep")
        if executor is not None:
            locals_ = list(
                executor.map(lambda i: lu_solve(factors[i], defect[parts[i]]),
                             range(len(parts)))
            )
        else:
            locals_ = [lu_solve(factors[i], defect[parts[i]]) for i in range(len(parts))]
        for ext, correction in zip(parts, locals_):
            z[ext] += correction
    return z


@dataclass(eq=False)
class BlockJacobiSmoother:
    """Damped block-Jacobi smoother with precomputed block inverses."""

    blocks: list
    block_inverses: list
    omega: float = 1.0
    sweeps_per_apply: int = 5

    def apply(self, a, r, executor=None):
        return bj_apply(self, a, r, executor=executor)


def bj_setup(a, tile_cells_per_axis, geometry=None, omega=1.0, sweeps_per_apply=5):
    """Tile the grid into dense diagonal blocks and invert each one.

    Parameters
    ----------
    a : SparseMatrixCsr
    tile_cells_per_axis : int
        Edge length of a tile; must divide the axis cell count.
    geometry : (cells_per_axis, dimension), optional
        Grid shape behind the matrix rows.  Without it the index space
        is treated as one-dimensional, so blocks are contiguous ranges.
    omega : float
        Relaxation weight applied to every block update.
    sweeps_per_apply : int
        Jacobi sweeps performed by one smoother application.

    Raises
    ------
    SingularMatrixError
        If a diagonal block is singular; the message names the block.
    """
    if a.n_rows != a.n_cols:
        raise ValueError("block-Jacobi setup requires a square matrix")
    if geometry is None:
        cells, dimension = a.n_rows, 1
    else:
        cells, dimension = geometry
        if cells**dimension != a.n_rows:
            raise ValueError(
                f"geometry {cells}^{dimension} does not match {a.n_rows} matrix rows"
            )
    if tile_cells_per_axis < 1 or cells % tile_cells_per_axis != 0:
        raise ValueError(
            f"tile size {tile_cells_per_axis} does not divide the "
            f"axis cell count {cells}"
        )
    if omega <= 0.0:
        raise ValueError("omega must be positive")
    if sweeps_per_apply < 1:
        raise ValueError("sweeps_per_apply must be at least 1")

    tiles_per_axis = cells // tile_cells_per_axis
    shape = (cells,) * dimension
    flat = np.arange(a.n_rows, dtype=np.int64).reshape(shape)
    blocks = []
    for tile in np.ndindex(*((tiles_per_axis,) * dimension)):
        window = tuple(
            slice(t * tile_cells_per_axis, (t + 1) * tile_cells_per_axis)
            for t in tile
        )
        blocks.append(np.sort(flat[window].ravel()))
    inverses = []
    sp = a._scipy
    for i, block in enumerate(blocks):
        dense = sp[block][:, block].toarray()
        try:
            inv = np.linalg.inv(dense)
        except np.linalg.LinAlgError:
            raise SingularMatrixError(f"singular diagonal block {i}") from None
        inverses.append(DenseMatrix.from_array(inv))
    return BlockJacobiSmoother(blocks, inverses, float(omega), int(sweeps_per_apply))


def bj_apply(smoother, a, r, executor=None):
    """Apply the configured number of simultaneous block-Jacobi sweeps.

    All blocks of one sweep read the same defect, so the update order
    is immaterial and sweeps parallelize trivially.  Returns the
    correction ``z``.
    """
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (a.n_rows,):
        raise ValueError("residual length does not match the matrix")
    blocks = smoother.blocks
    inverses = smoother.block_inverses
    omega = smoother.omega
    z = np.zeros_like(r)
    for sweep in range(smoother.sweeps_per_apply):
        defect = r if sweep == 0 else r - spmv(a, z)
        if not np.isfinite(defect).all():
            raise NumericalFailureError("non-finite defect in block-Jacobi sweep")
        if executor is not None:
            updates = list(
                executor.map(
                    lambda i: inverses[i].values @ defect[blocks[i]],
                    range(len(blocks)),
                )
            )
        else:
            updates = [inverses[i].values @ defect[blocks[i]] for i in range(len(blocks))]
        for block, update in zip(blocks, updates):
            z[block] += omega * update
    return z
