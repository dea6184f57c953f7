import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from openadiabatic.errors import ModelError, NonHermitianError
from openadiabatic.lindblad import (
    Schedule,
    TimeDependentOperator,
    TimeDependentSuperoperator,
    apply_generator,
    supermatrix,
    supermatrix_derivative,
    supermatrix_direct,
    supermatrix_fd,
)
from openadiabatic.models import BUNDLED, load_model, random_generator
from openadiabatic.operator_space import bloch_vector, build_basis, from_bloch, vectorize

from .conftest import two_level_matrix, random_density, random_hermitian, two_level

seeds = st.integers(0, 2**31 - 1)


def test_two_level_supermatrix_matches_hand_derivation():
    for eps, gamma in [(1.0, 0.5), (0.7, 0.4), (2.0, 0.2)]:
        L = supermatrix(two_level(eps, gamma), 0.3)
        assert np.abs(L - two_level_matrix(eps, gamma, gamma**2)).max() <= 1e-12


def test_unlocked_splitting():
    from openadiabatic.models import TwoLevelModel, build_two_level

    m = TwoLevelModel(Schedule.constant(0.7), Schedule.constant(0.4), Schedule.constant(1.3))
    L = supermatrix(build_two_level(m), 0.0)
    expected = np.array([[0, 0, 0, 0], [0, -0.98, -1.3, 0], [0, 1.3, -1.3, 0], [-1.96, 0, 0, -2.28]])
    assert np.abs(L - expected).max() <= 1e-12


def test_bloch_equations(paulis):
    sx, sy, sz, sm = paulis
    eps, gamma, omega = 0.8, 0.6, 1.7
    v = np.array([0.3, -0.4, 0.5])
    rho = (np.eye(2) + v[0] * sx + v[1] * sy + v[2] * sz) / 2
    out = apply_generator(rho, omega * sz / 2, [eps * sm, gamma * sx])
    vdot = np.real([np.trace(out @ p) for p in (sx, sy, sz)])
    expected = [
        -omega * v[1] - 2 * eps**2 * v[0],
        omega * v[0] - 2 * (gamma**2 + eps**2) * v[1],
        -4 * eps**2 - 2 * (gamma**2 + 2 * eps**2) * v[2],
    ]
    assert np.allclose(vdot, expected, atol=1e-12)


def test_pure_commutator(paulis):
    sx, _, sz, _ = paulis
    H = 0.9 * sz / 2
    rho = (np.eye(2) + sx) / 2
    assert np.allclose(apply_generator(rho, H), -1j * (H @ rho - rho @ H))


@pytest.mark.parametrize("D", [2, 3, 4])
def test_generator_output_traceless_hermitian(D, rng):
    for _ in range(10):
        rho = random_hermitian(rng, D)
        H = random_hermitian(rng, D)
        gammas = [rng.normal(size=(D, D)) + 1j * rng.normal(size=(D, D)) for _ in range(2)]
        out = apply_generator(rho, H, gammas)
        assert abs(np.trace(out)) <= 1e-12 * (1 + np.abs(out).max())
        assert np.abs(out - out.conj().T).max() <= 1e-12 * (1 + np.abs(out).max())


def test_apply_generator_dimension_mismatch():
    with pytest.raises(ModelError):
        apply_generator(np.eye(2), np.eye(3))
    with pytest.raises(ModelError):
        apply_generator(np.eye(2), np.eye(2), [np.eye(3)])


@pytest.mark.parametrize("D", [2, 3])
def test_supermatrix_action_matches_generator(D, rng):
    gen = random_generator(rng, D)
    basis = build_basis(D)
    for s in (0.0, 0.37, 1.0):
        L = supermatrix(gen, s)
        H, gammas = gen.hamiltonian_at(s), gen.lindblad_at(s)
        for _ in range(20):
            rho = random_density(rng, D)
            lhs = vectorize(apply_generator(rho, H, gammas), basis)
            assert np.abs(lhs - L @ vectorize(rho, basis)).max() <= 1e-10


@given(D=st.integers(2, 3), seed=seeds, s=st.floats(0, 1))
def test_stack_matches_direct_assembly(D, seed, s):
    gen = random_generator(np.random.default_rng(seed), D)
    assert np.abs(supermatrix(gen, s) - supermatrix_direct(gen, s)).max() <= 1e-10


@given(D=st.integers(2, 4), seed=seeds, s=st.floats(0, 1))
def test_trace_row_zero_and_real(D, seed, s):
    L = supermatrix(random_generator(np.random.default_rng(seed), D), s)
    assert L.dtype == float
    assert np.abs(L[0]).max() <= 1e-12


@given(seed=seeds)
def test_unitary_generator_antisymmetric(seed):
    rng = np.random.default_rng(seed)
    H = TimeDependentOperator(((random_hermitian(rng, 3), Schedule.constant(1.0)),))
    L = supermatrix(TimeDependentSuperoperator(3, H), 0.5)
    assert np.abs(L + L.T).max() <= 1e-12


@given(seed=seeds, s=st.floats(0, 1))
def test_linearity_in_terms(seed, s):
    rng = np.random.default_rng(seed)
    g1 = random_generator(rng, 2)
    g2 = random_generator(rng, 2)
    both = TimeDependentSuperoperator(
        2,
        TimeDependentOperator(g1.hamiltonian.terms + g2.hamiltonian.terms),
        g1.lindblad_ops + g2.lindblad_ops,
    )
    assert np.abs(supermatrix(both, s) - supermatrix(g1, s) - supermatrix(g2, s)).max() <= 1e-10


def test_multi_term_lindblad_operator(rng):
    # cross terms between the pieces of one operator
    A, B = (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)) for _ in range(2))
    op = TimeDependentOperator(((A, Schedule.linear(1.0, 0.5)), (B, Schedule.poly([0.3, 0, 1.0]))))
    gen = TimeDependentSuperoperator(2, lindblad_ops=(op,))
    for s in (0.0, 0.4, 1.0):
        assert np.abs(supermatrix(gen, s) - supermatrix_direct(gen, s)).max() <= 1e-10
        dA = supermatrix_derivative(gen, s)
        assert np.abs(dA - supermatrix_fd(gen, s)).max() <= 1e-6 * (1 + np.abs(dA).max())


@pytest.mark.parametrize("name", BUNDLED)
def test_derivative_vs_finite_difference_bundled(name):
    gen = load_model(name)
    for s in np.linspace(0, 1, 11):
        A = supermatrix_derivative(gen, s)
        assert np.linalg.norm(A - supermatrix_fd(gen, s)) <= 1e-6 * (1 + np.linalg.norm(A))


@given(D=st.integers(2, 3), seed=seeds, s=st.floats(0.01, 0.99))
def test_derivative_vs_finite_difference_random(D, seed, s):
    gen = random_generator(np.random.default_rng(seed), D)
    A = supermatrix_derivative(gen, s)
    assert np.linalg.norm(A - supermatrix_fd(gen, s)) <= 1e-6 * (1 + np.linalg.norm(A))


def test_constant_schedules_have_zero_derivative():
    assert not supermatrix_derivative(two_level(1.0, 0.5), 0.5).any()


def test_linear_schedule_derivative_entry():
    eps0, gamma0, a = 1.0, 0.5, 0.2
    gen = two_level((eps0, a), (gamma0, a))
    for s in (0.0, 0.5, 1.0):
        dA = supermatrix_derivative(gen, s)
        assert dA[1, 1] == pytest.approx(-4 * (eps0 + a * s) * a, abs=1e-12)


def test_table_schedule_right_derivative():
    sched = Schedule.table([(0, 0.0), (0.5, 1.0), (1, 1.5)])
    assert sched(0.25) == pytest.approx(0.5)
    assert sched.derivative(0.5) == pytest.approx(1.0)
    assert sched.derivative(0.49) == pytest.approx(2.0)
    assert sched.derivative(1.0) == pytest.approx(1.0)
    assert sched.is_knot(0.5) and not sched.is_knot(0.3) and not sched.is_knot(0.0)
    H = TimeDependentOperator(((np.diag([1.0, -1.0]).astype(complex), sched),))
    gen = TimeDependentSuperoperator(2, H)
    assert gen.nondifferentiable_at(0.5)
    assert np.allclose(supermatrix_derivative(gen, 0.5), supermatrix(TimeDependentSuperoperator(2, H), 1.0) / 1.5)


def test_schedule_validation():
    with pytest.raises(ModelError):
        Schedule.table([(0, 1.0)])
    with pytest.raises(ModelError):
        Schedule.table([(0, 1.0), (0.5, 1.0)])
    with pytest.raises(ModelError):
        Schedule.table([(0, 1.0), (0.6, 1.0), (0.5, 2.0), (1, 0)])
    with pytest.raises(ModelError):
        Schedule("spline", (1.0,))
    with pytest.raises(ModelError):
        Schedule.poly([np.nan])


def test_generator_validation(paulis):
    sx, sy, _, _ = paulis
    with pytest.raises(NonHermitianError):
        TimeDependentSuperoperator(2, TimeDependentOperator(((sx + 1j * sx, Schedule.constant(1.0)),)))
    with pytest.raises(ModelError):
        TimeDependentSuperoperator(3, TimeDependentOperator(((sx, Schedule.constant(1.0)),)))
    with pytest.raises(ModelError):
        TimeDependentSuperoperator(2, total_time=0.0)
    with pytest.raises(ModelError):
        TimeDependentSuperoperator(2, raw_terms=((np.eye(3), Schedule.constant(1.0)),))
    with pytest.raises(ModelError):
        supermatrix(TimeDependentSuperoperator(2), 1.5)


def test_bloch_helpers_consistent():
    v = np.array([0.1, 0.2, -0.3])
    assert np.allclose(bloch_vector(from_bloch(v)), v)
