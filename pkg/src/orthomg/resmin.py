"""Residual orthonormalization and minimization shared by every cycle.

Corrections produced by smoothers and coarse-grid solves are not applied
directly.  Each candidate direction ``z`` is mapped through the
operator, orthonormalized against the image vectors accepted so far,
and folded into the iterate with the coefficient that minimizes the
residual norm over the span of all accepted directions.  The residual
norm is therefore non-increasing no matter how poor an individual
correction is, which is what lets the task-parallel cycles tolerate
stale coarse corrections.
"""

import numpy as np

from .sparse import norm2, spmv

__all__ = ["SearchSpace", "rm_init", "rm_update", "rm_reset"]

# Directions whose operator image nearly vanishes after projection carry
# no new information; they are discarded rather than normalized.
BREAKDOWN_TOLERANCE = 1e-13

# A second orthogonalization pass is run when cancellation removed most
# of the vector's mass in the first one.
REORTHOGONALIZE_THRESHOLD = 0.1

DEFAULT_RESTART_CAP = 200


class SearchSpace:
    """Orthonormalized search directions anchored at an initial guess.

    ``basis[i]`` is the operator image of ``directions[i]`` after
    modified Gram-Schmidt and normalization, so the basis stays
    orthonormal and ``coeffs[i]`` is the share of the residual it
    removed.  The iterate and its residual advance together as an exact
    pair: ``x`` gains ``coeff * direction`` while ``r`` loses
    ``coeff * (A @ direction)``.
    """

    __slots__ = (
        "anchor_x",
        "anchor_r",
        "basis",
        "directions",
        "coeffs",
        "breakdown_count",
        "restart_cap",
        "_x",
        "_r",
        "_anchor_norm",
    )

    def __init__(self, x0, r0, restart_cap=DEFAULT_RESTART_CAP):
        x0 = np.asarray(x0, dtype=np.float64)
        r0 = np.asarray(r0, dtype=np.float64)
        if x0.shape != r0.shape or x0.ndim != 1:
            raise ValueError("initial guess and residual must be equal-length vectors")
        if restart_cap < 1:
            raise ValueError("restart_cap must be at least 1")
        self.restart_cap = int(restart_cap)
        self.breakdown_count = 0
        self._set_anchor(x0, r0)

    def _set_anchor(self, x0, r0):
        self.anchor_x = x0
        self.anchor_r = r0
        self.basis = []
        self.directions = []
        self.coeffs = []
        self._x = x0
        self._r = r0
        self._anchor_norm = norm2(r0)

    @property
    def size(self):
        return len(self.basis)

    def current_solution(self):
        """Current minimizer and its residual (the anchors before any update)."""
        return self._x, self._r


def rm_init(x0, r0, restart_cap=DEFAULT_RESTART_CAP):
    """Create an empty search space anchored at ``(x0, r0)``."""
    return SearchSpace(x0, r0, restart_cap=restart_cap)


def rm_reset(space, x_new, r_new):
    """Clear all stored directions and re-anchor at ``(x_new, r_new)``."""
    x_new = np.asarray(x_new, dtype=np.float64)
    r_new = np.asarray(r_new, dtype=np.float64)
    if x_new.shape != space.anchor_x.shape or r_new.shape != space.anchor_r.shape:
        raise ValueError("new anchors must match the original vector length")
    space._set_anchor(x_new, r_new)
    return space


def rm_update(space, a, z):
    """Fold correction ``z`` into the space and return the new minimizer.

    Parameters
    ----------
    space : SearchSpace
    a : SparseMatrixCsr
        The level operator; all updates of one space must use the same
        operator.
    z : array_like
        Candidate correction.

    Returns
    -------
    (x, r)
        Residual-norm minimizer over every accepted direction and its
        residual.  If the direction breaks down (its operator image
        lies in the span of the existing basis, or the anchor residual
        is already zero) the previous minimizer is returned unchanged
        and ``space.breakdown_count`` is incremented.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape != space.anchor_x.shape:
        raise ValueError("correction length does not match the space")
    if not np.isfinite(z).all():
        raise ValueError("correction contains NaN or Inf")
    if space._anchor_norm == 0.0:
        space.breakdown_count += 1
        return space._x, space._r
    if space.size >= space.restart_cap:
        # Re-anchor at the current minimizer so the basis stays small.
        space._set_anchor(space._x, space._r)

    w = spmv(a, z)
    image_norm = norm2(w)
    if image_norm == 0.0:
        space.breakdown_count += 1
        return space._x, space._r
    z = z.copy()

    # modified Gram-Schmidt against the accepted basis, paired on (w, z)
    for w_i, z_i in zip(space.basis, space.directions):
        beta = float(np.dot(w_i, w))
        w -= beta * w_i
        z -= beta * z_i
    remaining = norm2(w)
    if remaining < REORTHOGONALIZE_THRESHOLD * image_norm and space.size:
        # heavy cancellation: one more pass removes the drift
        for w_i, z_i in zip(space.basis, space.directions):
            beta = float(np.dot(w_i, w))
            w -= beta * w_i
            z -= beta * z_i
        remaining = norm2(w)
    if remaining <= BREAKDOWN_TOLERANCE * image_norm:
        space.breakdown_count += 1
        return space._x, space._r

    scale = 1.0 / remaining
    w *= scale
    z *= scale

    # Optimal share of the current residual along the new basis vector.
    # The residual is advanced with an explicit product A z rather than
    # with w: after heavy cancellation w and A z agree only to a few
    # digits, and using w here would let the stored residual drift away
    # from the true residual of the iterate.
    coeff = float(np.dot(w, space._r))
    x = space._x + coeff * z
    r = space._r - coeff * spmv(a, z)
    if norm2(r) > norm2(space._r):
        # only possible through rounding noise on a useless direction
        space.breakdown_count += 1
        return space._x, space._r
    space.basis.append(w)
    space.directions.append(z)
    space.coeffs.append(coeff)
    space._x = x
    space._r = r
    return x, r
