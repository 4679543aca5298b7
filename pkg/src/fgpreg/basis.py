"""Tensor-product B-spline bases over the global-predictor space.

A basis is built from clamped, uniformly spaced knot vectors, one per
predictor dimension, and evaluated as products of marginal B-splines.
Component ordering is row-major over dimensions with the last dimension
varying fastest, so component ``k`` decomposes as mixed-radix digits
``(k_1, ..., k_p)`` over the per-dimension counts.  This ordering is fixed
so that coefficient indices mean the same thing across runs.

Inputs outside the configured bounds are clamped to the boundary before
evaluation, which keeps the partition-of-unity property at prediction time
for points slightly outside the training hull.
"""

from dataclasses import dataclass
from functools import reduce

import numpy as np
from scipy.interpolate import BSpline

from .errors import InvalidInputError


@dataclass(frozen=True)
class SplineSpec:
    """Configuration of a tensor-product B-spline basis.

    Attributes
    ----------
    counts : tuple of int
        Marginal basis count per dimension; each must be >= degree + 1.
    bounds : tuple of (float, float)
        Per-dimension (min, max) range of the global predictors.
    degree : int
        Polynomial degree of the marginal splines (default cubic).
    """

    counts: tuple
    bounds: tuple
    degree: int = 3

    def __post_init__(self):
        counts = tuple(int(m) for m in np.atleast_1d(self.counts))
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "bounds", bounds)
        if self.degree < 0:
            raise InvalidInputError("degree must be nonnegative")
        if len(counts) != len(bounds):
            raise InvalidInputError("counts and bounds must have equal length")
        for m in counts:
            if m < self.degree + 1:
                raise InvalidInputError(
                    f"need at least degree+1={self.degree + 1} bases per dimension, got {m}"
                )
        for lo, hi in bounds:
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise InvalidInputError(f"invalid bounds ({lo}, {hi})")

    @property
    def ndim(self):
        return len(self.counts)


@dataclass(frozen=True)
class TensorBasis:
    """A built basis: knot vectors plus the total component count K."""

    spec: SplineSpec
    knots: tuple  # one nondecreasing knot vector per dimension
    K: int

    @property
    def ndim(self):
        return self.spec.ndim


def clamped_knots(m, degree, lo, hi):
    """Clamped uniform knot vector with ``m`` bases: m + degree + 1 entries.

    Boundary knots are repeated degree+1 times; the m - degree - 1 interior
    knots are equally spaced strictly inside (lo, hi).
    """
    interior = np.linspace(lo, hi, m - degree + 1)[1:-1]
    t = np.concatenate([np.full(degree + 1, lo), interior, np.full(degree + 1, hi)])
    t.setflags(write=False)
    return t


def build_basis(spec):
    """Construct the tensor basis for a spec; deterministic given the spec."""
    knots = tuple(
        clamped_knots(m, spec.degree, lo, hi)
        for m, (lo, hi) in zip(spec.counts, spec.bounds)
    )
    k_total = int(np.prod(spec.counts))
    return TensorBasis(spec=spec, knots=knots, K=k_total)


def _marginal_values(basis, dim, x):
    """Marginal B-spline values for one dimension: (len(x), counts[dim])."""
    lo, hi = basis.spec.bounds[dim]
    xc = np.clip(np.asarray(x, dtype=np.float64), lo, hi)
    design = BSpline.design_matrix(xc, basis.knots[dim], basis.spec.degree)
    return design.toarray()


def eval_basis_vector(basis, z):
    """Evaluate all K tensor components at one global-predictor vector.

    Entry k is the product over dimensions of the marginal spline values at
    ``z``, with component ordering row-major (last dimension fastest).
    Entries are in [0, 1] and sum to 1.
    """
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if z.shape[0] != basis.ndim:
        raise InvalidInputError(
            f"expected {basis.ndim} predictor values, got {z.shape[0]}"
        )
    marginals = [_marginal_values(basis, d, z[d : d + 1])[0] for d in range(basis.ndim)]
    return reduce(lambda a, b: np.multiply.outer(a, b), marginals).ravel()


def basis_matrix(basis, Z):
    """Row-wise basis evaluation for a matrix of predictor vectors (S x K)."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.shape[1] != basis.ndim:
        raise InvalidInputError(
            f"expected {basis.ndim} predictor columns, got {Z.shape[1]}"
        )
    marginals = [_marginal_values(basis, d, Z[:, d]) for d in range(basis.ndim)]
    out = marginals[0]
    for b in marginals[1:]:
        out = (out[:, :, None] * b[:, None, :]).reshape(Z.shape[0], -1)
    return out
