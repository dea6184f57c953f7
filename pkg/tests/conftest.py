import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from openadiabatic.lindblad import Schedule
from openadiabatic.models import SIGMA_MINUS, SIGMA_X, SIGMA_Y, SIGMA_Z, TwoLevelModel, build_two_level

settings.register_profile("default", deadline=None, max_examples=30, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def paulis():
    return SIGMA_X, SIGMA_Y, SIGMA_Z, SIGMA_MINUS


def two_level(eps, gamma, total_time=1.0):
    """Two-level generator; eps and gamma may be numbers or (start, slope) pairs."""

    def sched(x):
        return Schedule.linear(*x) if isinstance(x, tuple) else Schedule.constant(x)

    return build_two_level(TwoLevelModel(sched(eps), sched(gamma), None, total_time))


def two_level_matrix(eps, gamma, omega):
    """Hand-derived two-level supermatrix in the (I, sx, sy, sz) basis."""
    e2, g2 = eps * eps, gamma * gamma
    return np.array(
        [
            [0, 0, 0, 0],
            [0, -2 * e2, -omega, 0],
            [0, omega, -2 * e2 - 2 * g2, 0],
            [-4 * e2, 0, 0, -4 * e2 - 2 * g2],
        ],
        dtype=float,
    )


def random_hermitian(rng, D):
    a = rng.normal(size=(D, D)) + 1j * rng.normal(size=(D, D))
    return (a + a.conj().T) / 2


def random_density(rng, D):
    a = rng.normal(size=(D, D)) + 1j * rng.normal(size=(D, D))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def planted(rng, segre, cond_max=1e3, spread=2.0):
    """Matrix with prescribed Jordan structure.

    ``segre`` lists the block sizes of each distinct eigenvalue.
    """
    n = sum(sum(g) for g in segre)
    while True:
        S0 = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        if np.linalg.cond(S0) < cond_max:
            break
    k = len(segre)
    while True:
        lam = spread * (rng.normal(size=k) + 1j * rng.normal(size=k))
        if k == 1 or (np.abs(lam[:, None] - lam[None, :]) + 10 * np.eye(k)).min() > 0.3:
            break
    J = np.zeros((n, n), dtype=complex)
    start = 0
    for l, sizes in zip(lam, segre):
        for s in sizes:
            for i in range(s):
                J[start + i, start + i] = l
                if i + 1 < s:
                    J[start + i, start + i + 1] = 1.0
            start += s
    return S0 @ J @ np.linalg.inv(S0), lam


def segre_of(dec):
    """Sorted per-eigenvalue block sizes of a decomposition."""
    return sorted(tuple(sorted((dec.blocks[b].size for b in g), reverse=True)) for g in dec.clusters())
