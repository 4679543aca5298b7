import numpy as np
import pytest

from fgpreg import Dataset, KernelParams, LocationSet, ParamState
from fgpreg.basis import SplineSpec, build_basis
from fgpreg.model import ObsPoint, _basis_values


def random_instance(rng, S=3, n=6, q=2, K=3, domain=100.0, tensor_basis=False):
    """A small random problem: dataset, basis (values or TensorBasis) and a
    valid parameter state."""
    locations = LocationSet(rng.uniform(0, domain, (n, 2)))
    X = np.column_stack([np.ones(n), rng.standard_normal((n, q - 1))]) if q else np.empty((n, 0))
    Z = rng.uniform(0, 1, (S, 2))
    Y = rng.standard_normal(S * n)
    data = Dataset(locations=locations, X=X, Z=Z, Y=Y)
    if tensor_basis:
        counts = {4: (4,), 9: (3, 3), 16: (4, 4), 25: (5, 5)}[K]
        spec = SplineSpec(counts=counts, bounds=tuple((0.0, 1.0) for _ in counts), degree=2 if K == 9 else 3)
        data = Dataset(locations=locations, X=X,
                       Z=rng.uniform(0, 1, (S, len(counts))), Y=Y)
        basis = build_basis(spec)
    elif K:
        basis = rng.uniform(0, 1, (S, K))
    else:
        basis = None
    state = random_state(rng, q, K)
    return data, basis, state


def random_state(rng, q, K, nu=0.5):
    beta = tuple(
        KernelParams(rng.uniform(0.3, 2.0), rng.uniform(0.03, 0.5), nu) for _ in range(q)
    )
    eta = tuple(
        KernelParams(rng.uniform(0.5, 5.0), rng.uniform(0.03, 0.5), nu) for _ in range(K)
    )
    return ParamState(beta, eta, rng.uniform(0.1, 1.5))


def obs_point(data, basis, s, i):
    """ObsPoint for an on-grid training observation."""
    bmat = _basis_values(basis, data.Z)
    return ObsPoint(
        realization=("train", s),
        location=tuple(data.locations[i]),
        x_values=data.X[i],
        basis_values=bmat[s],
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
