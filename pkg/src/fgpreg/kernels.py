"""Matern covariance functions over 2-D point sets.

Kernels are parameterized by a variance, a decay rate and a half-integer
smoothness.  The decay rate ``phi`` is the reciprocal of the usual Matern
length-scale, so the smoothness-1/2 member is exactly the exponential
kernel ``sigma^2 * exp(-phi * ||u - v||)``; the generator conventions in
:mod:`fgpreg.simulation` quote decay rates directly.

Closed-form correlations, with ``t = phi * d``:

=========== =====================================
smoothness  correlation m(t)
=========== =====================================
1/2         exp(-t)
3/2         (1 + sqrt(3) t) exp(-sqrt(3) t)
5/2         (1 + sqrt(5) t + 5 t^2 / 3) exp(-sqrt(5) t)
=========== =====================================

Only these three smoothness values are supported; general real smoothness
(modified-Bessel evaluation) is out of scope.
"""

from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import InvalidInputError

SUPPORTED_SMOOTHNESS = (0.5, 1.5, 2.5)


@dataclass(frozen=True)
class KernelParams:
    """Parameters of one Matern kernel.

    Attributes
    ----------
    variance : float
        Marginal variance sigma^2 (response units squared), > 0.
    decay : float
        Decay rate phi (1 / distance units), > 0.  The length-scale is
        ``1 / decay``.
    smoothness : float
        One of 0.5, 1.5, 2.5.
    """

    variance: float
    decay: float
    smoothness: float = 0.5

    def __post_init__(self):
        if not (np.isfinite(self.variance) and self.variance > 0.0):
            raise InvalidInputError(f"variance must be positive, got {self.variance!r}")
        if not (np.isfinite(self.decay) and self.decay > 0.0):
            raise InvalidInputError(f"decay must be positive, got {self.decay!r}")
        if self.smoothness not in SUPPORTED_SMOOTHNESS:
            raise InvalidInputError(
                f"smoothness must be one of {SUPPORTED_SMOOTHNESS}, got {self.smoothness!r}"
            )

    @property
    def length_scale(self):
        return 1.0 / self.decay

    def replace(self, **kwargs):
        fields = {"variance": self.variance, "decay": self.decay,
                  "smoothness": self.smoothness}
        fields.update(kwargs)
        return KernelParams(**fields)


class LocationSet:
    """An ordered, immutable set of 2-D coordinates.

    The ordering is significant: every covariance-matrix builder indexes
    rows and columns by position in this set.
    """

    __slots__ = ("points",)

    def __init__(self, points):
        pts = np.ascontiguousarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise InvalidInputError(f"expected (n, 2) coordinates, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __setattr__(self, name, value):
        raise AttributeError("LocationSet is immutable")

    def __len__(self):
        return self.points.shape[0]

    def __getitem__(self, i):
        return self.points[i]

    def __eq__(self, other):
        return isinstance(other, LocationSet) and np.array_equal(self.points, other.points)

    def __reduce__(self):
        return (LocationSet, (np.array(self.points),))


def _as_points(locations):
    if isinstance(locations, LocationSet):
        return locations.points
    pts = np.ascontiguousarray(locations, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidInputError(f"expected (n, 2) coordinates, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("coordinates must be finite")
    return pts


def matern_cov(u, v, params):
    """Matern covariance between two 2-D points.

    Parameters
    ----------
    u, v : array-like, shape (2,)
    params : KernelParams

    Returns
    -------
    float
        ``variance * m(decay * ||u - v||)``; equals ``variance`` at u == v.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != (2,) or v.shape != (2,):
        raise InvalidInputError("points must be 2-D coordinates")
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise InvalidInputError("coordinates must be finite")
    if np.array_equal(u, v):
        return params.variance
    # same arithmetic as the matrix builders so entries match them exactly
    dx = u[0] - v[0]
    dy = u[1] - v[1]
    d = np.sqrt(dx * dx + dy * dy)
    value = _backend.matern_from_dist(
        np.asarray(d), params.variance, params.decay, params.smoothness
    )
    return float(np.asarray(value).reshape(-1)[0])


def cov_matrix(locations, params):
    """Covariance matrix of a location set under one Matern kernel.

    Entry (i, j) equals ``matern_cov(locations[i], locations[j], params)``;
    the result is symmetric with ``variance`` on the diagonal.  No jitter is
    added here; factorization helpers apply their own.
    """
    pts = _as_points(locations)
    if pts.shape[0] == 0:
        raise InvalidInputError("location set must be non-empty")
    c = _backend.matern_pairwise(pts, pts, params.variance, params.decay,
                                 params.smoothness)
    # exact variance at zero distance (matches matern_cov's u == v branch)
    np.fill_diagonal(c, params.variance)
    return c


def cross_cov_matrix(a, b, params):
    """Cross-covariance matrix between two location sets (|a| x |b|)."""
    pa, pb = _as_points(a), _as_points(b)
    if pa.shape[0] == 0 or pb.shape[0] == 0:
        raise InvalidInputError("location sets must be non-empty")
    return _backend.matern_pairwise(pa, pb, params.variance, params.decay,
                                    params.smoothness)


def distance_matrix(a, b=None):
    """Pairwise Euclidean distances; ``b`` defaults to ``a``."""
    pa = _as_points(a)
    pb = pa if b is None else _as_points(b)
    return _backend.pairwise_distances(pa, pb)
