"""Shared fixtures and independent oracles.

The oracles here deliberately avoid the library's fast paths: partial
traces are explicit index loops and covariance matrices come from global
identity-padded embeddings, so theorem checks compare two genuinely
different computations.
"""

from itertools import product as iproduct

import numpy as np
import pytest

from netcm.observables import embed
from netcm.states import DensityOperator, random_source


def naive_partial_trace(rho, dims, keep):
    """Loop-based partial trace; ``keep`` holds factor indices, order preserved."""
    n = len(dims)
    keep = sorted(keep)
    traced = [i for i in range(n) if i not in keep]
    dk = int(np.prod([dims[i] for i in keep])) if keep else 1
    out = np.zeros((dk, dk), dtype=complex)

    def flat(idx):
        f = 0
        for i, d in zip(idx, dims):
            f = f * d + i
        return f

    def flat_keep(idx):
        f = 0
        for i in keep:
            f = f * dims[i] + idx[i]
        return f

    for row in iproduct(*[range(d) for d in dims]):
        for col in iproduct(*[range(d) for d in dims]):
            if all(row[i] == col[i] for i in traced):
                out[flat_keep(row), flat_keep(col)] += rho[flat(row), flat(col)]
    return out


def brute_force_cm(obs_set, rho: DensityOperator) -> np.ndarray:
    """Covariance matrix from global embeddings and explicit operator products."""
    mats = [embed(o, rho.layout) for o in obs_set]
    r = rho.matrix
    means = np.array([np.trace(m @ r).real for m in mats])
    n = len(mats)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            sym = 0.5 * (mats[i] @ mats[j] + mats[j] @ mats[i])
            out[i, j] = np.trace(sym @ r).real - means[i] * means[j]
    return out


def expectation(op, rho: DensityOperator) -> float:
    val = complex(np.trace(np.asarray(op) @ rho.matrix))
    assert abs(val.imag) < 1e-10
    return val.real


@pytest.fixture
def rng():
    return np.random.default_rng(20230817)


@pytest.fixture
def random_triangle_sources(rng):
    return [random_source(2, rng) for _ in range(3)]
