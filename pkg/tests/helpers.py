"""Shared builders for the test suite."""

import numpy as np

import orthomg as om


def random_sparse(rng, n_rows, n_cols, density=0.3):
    """Random CSR matrix with entries in [-1, 1)."""
    mask = rng.random((n_rows, n_cols)) < density
    dense = np.where(mask, rng.uniform(-1.0, 1.0, (n_rows, n_cols)), 0.0)
    return om.SparseMatrixCsr.from_dense(dense)


def random_spd(rng, n):
    """Random symmetric positive definite matrix as CSR."""
    a = rng.standard_normal((n, n))
    return om.SparseMatrixCsr.from_dense(a @ a.T + n * np.eye(n))


def benchmark_setup(cells=16, dimension=2, l_min=64, smoother="schwarz",
                    n_subdomains=4, overlap=1, precision="float64",
                    smoother_iterations=1, tile=4, k_outer=1000.0):
    """Assembled benchmark plus one smoother per level above the coarsest.

    Returns ``(spec, hierarchy, b, smoothers)`` where ``smoothers`` is a
    tuple ready for a :class:`~orthomg.CycleConfig`.
    """
    spec = om.ProblemSpec(dimension=dimension, cells_per_axis=cells, k_outer=k_outer)
    hierarchy = om.build_hierarchy(spec, l_min=l_min)
    _, b = om.assemble_poisson(spec)
    smoothers = []
    for level in hierarchy.levels[:-1]:
        if smoother == "schwarz":
            count = min(n_subdomains, level.n_dofs)
            part = om.partition_cells(level.cells_per_axis, dimension, count, overlap)
            sm = om.schwarz_setup(level.matrix, part, precision)
            smoothers.append(om.LevelSmoother(sm, iterations=smoother_iterations))
        else:
            sm = om.bj_setup(level.matrix, min(tile, level.cells_per_axis),
                             (level.cells_per_axis, dimension))
            smoothers.append(om.LevelSmoother(sm))
    smoothers.append(None)
    return spec, hierarchy, b, tuple(smoothers)


def cycle_config(variant, smoothers, **kwargs):
    return om.CycleConfig(
        variant=variant,
        criteria=kwargs.pop("criteria", om.ConvergenceCriteria()),
        smoothers=smoothers,
        **kwargs,
    )
