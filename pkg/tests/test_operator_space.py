import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from openadiabatic.errors import ModelError, NonHermitianError
from openadiabatic.operator_space import (
    bloch_vector,
    build_basis,
    devectorize,
    from_bloch,
    hs_inner,
    hs_inner_matrices,
    vectorize,
)

from .conftest import random_density, random_hermitian

dims = st.integers(min_value=2, max_value=6)


@pytest.mark.parametrize("D", range(2, 7))
def test_gram_matrix_is_uniform(D):
    basis = build_basis(D)
    assert basis.size == D * D
    assert np.abs(basis.gram() - 2 * np.eye(D * D)).max() <= 1e-12


@pytest.mark.parametrize("D", range(2, 7))
def test_elements_hermitian_traceless(D):
    F = build_basis(D).elements
    assert np.allclose(F, np.conj(np.transpose(F, (0, 2, 1))), atol=0)
    assert np.allclose(F[0], np.sqrt(2 / D) * np.eye(D))
    assert np.abs(np.trace(F[1:], axis1=1, axis2=2)).max() <= 1e-14


def test_qubit_basis_is_pauli(paulis):
    sx, sy, sz, _ = paulis
    F = build_basis(2).elements
    assert np.allclose(F[0], np.eye(2))
    assert np.allclose(F[1], sx) and np.allclose(F[2], sy) and np.allclose(F[3], sz)
    assert abs(np.trace(sx @ sy)) == 0


def test_three_level_gram():
    basis = build_basis(3)
    assert len(basis.elements) == 9
    assert np.abs(basis.gram() - 2 * np.eye(9)).max() <= 1e-12


@pytest.mark.parametrize("D", [1, 7, 0, 2.5])
def test_dimension_out_of_range(D):
    with pytest.raises(ModelError):
        build_basis(D)


def test_maximally_mixed_has_only_identity_component():
    basis = build_basis(2)
    v = vectorize(np.eye(2) / 2, basis)
    assert np.allclose(v[1:], 0) and v[0] > 0
    assert np.allclose(v, basis.identity_vector())


def test_bloch_convention(paulis):
    _, _, sz, _ = paulis
    v = vectorize((np.eye(2) + sz) / 2, build_basis(2))
    assert np.allclose(bloch_vector(v), [0, 0, 1])
    assert np.allclose(v, from_bloch([0, 0, 1]))


@pytest.mark.parametrize("D", range(2, 7))
def test_round_trip_random_hermitian(D, rng):
    basis = build_basis(D)
    for _ in range(100):
        rho = random_hermitian(rng, D)
        v = vectorize(rho, basis)
        assert v.dtype == float
        assert np.abs(devectorize(v, basis) - rho).max() <= 1e-12


@given(D=dims, seed=st.integers(0, 2**31 - 1))
def test_coefficients_real_for_hermitian(D, seed):
    rng = np.random.default_rng(seed)
    c = vectorize(random_hermitian(rng, D), build_basis(D), hermitian=False)
    assert np.abs(c.imag).max() <= 1e-12


@given(D=st.integers(2, 4), seed=st.integers(0, 2**31 - 1))
def test_vectorize_inverts_devectorize(D, seed):
    rng = np.random.default_rng(seed)
    basis = build_basis(D)
    v = rng.normal(size=D * D)
    assert np.abs(vectorize(devectorize(v, basis), basis) - v).max() <= 1e-12


@given(D=dims, seed=st.integers(0, 2**31 - 1))
def test_trace_from_first_component(D, seed):
    rng = np.random.default_rng(seed)
    basis = build_basis(D)
    rho = random_hermitian(rng, D)
    assert basis.trace_of(vectorize(rho, basis)) == pytest.approx(np.trace(rho).real, abs=1e-12)


@given(D=dims, seed=st.integers(0, 2**31 - 1))
def test_inner_product_two_ways(D, seed):
    rng = np.random.default_rng(seed)
    basis = build_basis(D)
    a = rng.normal(size=(D, D)) + 1j * rng.normal(size=(D, D))
    b = rng.normal(size=(D, D)) + 1j * rng.normal(size=(D, D))
    u, v = vectorize(a, basis, hermitian=False), vectorize(b, basis, hermitian=False)
    assert abs(hs_inner(u, v) - hs_inner_matrices(a, b, basis)) <= 1e-12 * (1 + abs(hs_inner(u, v)))
    assert abs(hs_inner(u, v) - np.conj(hs_inner(v, u))) <= 1e-14
    assert hs_inner(u, u).real > 0


def test_unit_vectors_orthonormal():
    for k in range(9):
        e = np.zeros(9)
        e[k] = 1
        assert hs_inner(e, e) == 1


def test_purity_bounds_norm(rng):
    basis = build_basis(3)
    for _ in range(20):
        v = vectorize(random_density(rng, 3), basis)
        assert np.linalg.norm(v) <= 1 + 1e-12


def test_errors():
    basis = build_basis(2)
    with pytest.raises(ModelError):
        vectorize(np.eye(3), basis)
    with pytest.raises(ModelError):
        devectorize(np.zeros(3), basis)
    with pytest.raises(ModelError):
        hs_inner(np.zeros(4), np.zeros(9))
    with pytest.raises(NonHermitianError):
        vectorize(np.array([[0, 1], [0, 0]]), basis)
    assert np.allclose(devectorize(np.zeros(4), basis), 0)
    assert np.allclose(devectorize(np.array([1.0, 0, 0, 0]), basis), np.eye(2))
