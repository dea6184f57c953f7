"""Exact and block-decoupled integration of the master equation.

States are coherence vectors.  Block coefficients follow the expansion
``|rho>> = 1/2 sum_beta sum_j r_beta^(j) |D_beta^(j)>>`` so that
``r = 2 S^{-1} |rho>>``.  All integrators are classical fixed-step RK4 over
the normalized time ``s`` with results stored at grid nodes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicSpline, interp1d

from .errors import ModelError, TrackingError
from .jordan import JordanDecomposition, TrackedDecomposition, _uniform, coupling_matrices
from .lindblad import TimeDependentOperator, TimeDependentSuperoperator, supermatrices
from .operator_space import IMAG_TOL, bloch_vector, build_basis, vectorize

DEFAULT_STEPS = 10_000
MIN_STEPS = 10
DEFAULT_GRID = 101
EXPANSION_FACTOR = 2.0


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Integrated states and block coefficients at grid nodes.

    Attributes
    ----------
    grid : ndarray
        Normalized times.
    states : ndarray
        (nodes, D^2) coherence vectors (real for physical runs).
    r : ndarray or None
        (nodes, n) block coefficients in flattened chain order.
    p : ndarray or None
        ``r`` with the dynamical factor ``exp(T int lam ds)`` removed.
    residuals : ndarray or None
        Per-node mismatch between ``states`` and ``1/2 S r``.
    """

    grid: np.ndarray
    total_time: float
    states: np.ndarray
    r: np.ndarray = None
    p: np.ndarray = None
    residuals: np.ndarray = None
    meta: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.total_time * self.grid

    @property
    def trace_component(self) -> np.ndarray:
        return self.states[:, 0]

    def coefficient(self, index: int) -> np.ndarray:
        return self.r[:, index]


def _substeps(grid, steps):
    if steps < MIN_STEPS:
        raise ModelError(f"steps must be at least {MIN_STEPS}, got {steps}")
    intervals = len(grid) - 1
    return max(1, int(np.ceil(steps / intervals)))


def _check_grid(grid):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2 or np.any(np.diff(grid) <= 0):
        raise ModelError("grid must be strictly increasing with at least two nodes")
    if grid[0] < 0 or grid[-1] > 1:
        raise ModelError("grid must lie in [0, 1]")
    return grid


def _rk4_linear(matrix_at, y0, grid, per_interval):
    """RK4 for ``dy/ds = M(s) y`` storing y at every grid node.

    ``matrix_at(s_array)`` returns the stacked matrices at the given points.
    """
    y = np.array(y0)
    out = np.empty((len(grid),) + y.shape, dtype=np.result_type(y, complex) if np.iscomplexobj(y) else float)
    out[0] = y
    for k in range(len(grid) - 1):
        s = np.linspace(grid[k], grid[k + 1], 2 * per_interval + 1)
        h = (grid[k + 1] - grid[k]) / per_interval
        M = matrix_at(s)
        if not np.iscomplexobj(out) and np.iscomplexobj(M):
            out = out.astype(complex)
        for n in range(per_interval):
            A0, Ah, A1 = M[2 * n], M[2 * n + 1], M[2 * n + 2]
            k1 = A0 @ y
            k2 = Ah @ (y + 0.5 * h * k1)
            k3 = Ah @ (y + 0.5 * h * k2)
            k4 = A1 @ (y + h * k3)
            y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise FloatingPointError(f"state became non-finite near s={grid[k + 1]:.6g}")
        out[k + 1] = y
    return out


def _rk4_constant(A, y0, grid, per_interval):
    """RK4 for constant ``A`` with a precomputed one-step propagator."""
    out = np.empty((len(grid),) + np.shape(y0), dtype=np.result_type(A, y0))
    out[0] = y0
    y = np.array(y0, dtype=out.dtype)
    eye = np.eye(len(A))
    cache = {}
    for k in range(len(grid) - 1):
        h = (grid[k + 1] - grid[k]) / per_interval
        key = round(h, 15)
        if key not in cache:
            hA = h * A
            P = eye + hA @ (eye + hA @ (eye / 2 + hA @ (eye / 6 + hA / 24)))
            cache[key] = np.linalg.matrix_power(P, per_interval)
        y = cache[key] @ y
        out[k + 1] = y
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("state became non-finite")
    return out


def initial_vector(rho0, dimension: int) -> np.ndarray:
    """Coherence vector from a density matrix or a coherence vector."""
    basis = build_basis(dimension)
    rho0 = np.asarray(rho0)
    if rho0.shape == (dimension, dimension):
        return vectorize(rho0, basis)
    if rho0.shape == (basis.size,):
        if np.iscomplexobj(rho0):
            if np.abs(rho0.imag).max() > IMAG_TOL:
                raise ModelError("coherence vector of a Hermitian state must be real")
            rho0 = rho0.real
        return rho0.astype(float)
    raise ModelError(f"initial state must be {dimension}x{dimension} or have {basis.size} components")


def integrate_exact(gen: TimeDependentSuperoperator, rho0, steps: int = DEFAULT_STEPS, grid=None) -> Trajectory:
    """Integrate ``d|rho>>/dt = L |rho>>`` on ``t = s T``.

    Parameters
    ----------
    rho0 : array_like
        Density matrix (D x D, must be Hermitian) or coherence vector.
        Trace is not renormalized.
    steps : int
        Total RK4 steps on [grid[0], grid[-1]], rounded up to a multiple of
        the number of grid intervals.
    grid : array_like, optional
        Output nodes; defaults to 101 uniform points on [0, 1].
    """
    grid = _check_grid(np.linspace(0, 1, DEFAULT_GRID) if grid is None else grid)
    per = _substeps(grid, steps)
    y0 = initial_vector(rho0, gen.dimension)
    T = gen.total_time
    if gen.is_constant:
        states = _rk4_constant(T * supermatrices(gen, [0.0])[0], y0, grid, per)
    else:
        states = _rk4_linear(lambda s: T * supermatrices(gen, s), y0, grid, per)
    meta = {"steps": per * (len(grid) - 1), "order": 4, "picture": "state"}
    return Trajectory(grid, T, states, meta=meta)


def project_to_blocks(state, dec: JordanDecomposition) -> np.ndarray:
    """Coefficients ``r = 2 S^{-1} |rho>>``."""
    state = np.asarray(state)
    if state.shape[-1] != dec.size:
        raise ModelError(f"state has {state.shape[-1]} components, decomposition {dec.size}")
    return EXPANSION_FACTOR * (state @ dec.S_inv.T)


def reconstruct_state(r, dec: JordanDecomposition) -> np.ndarray:
    """``1/2 S r``."""
    return (np.asarray(r) @ dec.S.T) / EXPANSION_FACTOR


def attach_blocks(traj: Trajectory, tracked: TrackedDecomposition) -> Trajectory:
    """Trajectory with ``r``, ``p`` and residuals added by projecting states."""
    _same_grid(traj.grid, tracked.grid)
    r = np.array([project_to_blocks(x, d) for x, d in zip(traj.states, tracked.decompositions)])
    return _finish(traj.grid, traj.total_time, tracked, r, traj.meta, states=traj.states)


def _same_grid(a, b):
    if len(a) != len(b) or np.abs(np.asarray(a) - np.asarray(b)).max() > 1e-12:
        raise TrackingError("trajectory grid and tracked grid differ")


def _eigen_phase(tracked: TrackedDecomposition) -> np.ndarray:
    """``T int_0^s lam ds'`` per block on the grid (cubic-spline quadrature)."""
    lam = tracked.eigenvalues
    if len(tracked.grid) < 4:
        return tracked.total_time * cumulative_trapezoid(lam, tracked.grid, axis=0, initial=0.0)
    spl = CubicSpline(tracked.grid, lam, axis=0).antiderivative()
    return tracked.total_time * (spl(tracked.grid) - spl(tracked.grid[0]))


def _finish(grid, T, tracked, r, meta, states=None):
    per_chain = np.repeat(np.arange(tracked.n_blocks), tracked.block_sizes)
    phase = _eigen_phase(tracked)[:, per_chain]
    # the dynamical factor can overflow where r has decayed to zero
    with np.errstate(over="ignore", invalid="ignore"):
        p = np.where(r == 0, 0.0, r * np.exp(-phase))
    recon = np.array([reconstruct_state(x, d) for x, d in zip(r, tracked.decompositions)])
    if states is None:
        if np.abs(recon.imag).max(initial=0.0) > 1e-6 * max(1.0, np.abs(recon).max()):
            meta = dict(meta, imaginary_residue=float(np.abs(recon.imag).max()))
        states = recon.real
    res = np.linalg.norm(recon - states, axis=1)
    return Trajectory(np.asarray(grid), T, states, r, p, res, meta)


def _jordan_stack(tracked: TrackedDecomposition) -> np.ndarray:
    lam = tracked.eigenvalues
    n = tracked.S.shape[1]
    J = np.zeros((len(tracked.grid), n, n), dtype=complex)
    for a, b in enumerate(tracked.blocks):
        for j in range(b.size):
            J[:, b.start + j, b.start + j] = lam[:, a]
            if j + 1 < b.size:
                J[:, b.start + j, b.start + j + 1] = 1.0
    return J


def _default_order(grid) -> int:
    return 4 if len(grid) >= 5 and _uniform(np.asarray(grid)) else 2


def _interpolant(grid, values):
    if len(grid) < 4:
        return interp1d(grid, values, axis=0)
    return CubicSpline(grid, values, axis=0)


def _initial_r(gen, tracked, r0, rho0):
    if (r0 is None) == (rho0 is None):
        raise ModelError("give exactly one of r0 or rho0")
    if r0 is None:
        return project_to_blocks(initial_vector(rho0, gen.dimension), tracked.decompositions[0]).astype(complex)
    r0 = np.asarray(r0, dtype=complex)
    if r0.shape != (tracked.S.shape[1],):
        raise ModelError(f"r0 needs {tracked.S.shape[1]} components")
    return r0


def integrate_r_exact(
    gen: TimeDependentSuperoperator,
    tracked: TrackedDecomposition,
    r0=None,
    steps: int = DEFAULT_STEPS,
    rho0=None,
    order: int = None,
) -> Trajectory:
    """Integrate the block coefficients with all couplings.

    ``dr/ds = T J(s) r - K(s) r`` with ``K = S^{-1} dS/ds`` from finite
    differences of the tracked chains.  Between nodes ``lam`` and ``K`` are
    cubic-spline interpolants.
    """
    grid = np.asarray(tracked.grid)
    per = _substeps(grid, steps)
    r0 = _initial_r(gen, tracked, r0, rho0)
    T = tracked.total_time
    order = _default_order(grid) if order is None else order
    if gen.is_constant:
        A = T * _jordan_stack(tracked)[0]
        r = _rk4_constant(A, r0, grid, per)
    else:
        M = T * _jordan_stack(tracked) - coupling_matrices(tracked, order)
        r = _rk4_linear(_interpolant(grid, M), r0, grid, per)
    meta = {"steps": per * (len(grid) - 1), "order": 4, "picture": "r-exact", "fd_order": order}
    return _finish(grid, T, tracked, r, meta)


def integrate_r_adiabatic(
    gen: TimeDependentSuperoperator,
    tracked: TrackedDecomposition,
    r0=None,
    steps: int = DEFAULT_STEPS,
    rho0=None,
    mode: str = "frozen",
    order: int = None,
) -> Trajectory:
    """Integrate the block coefficients with inter-eigenvalue couplings removed.

    ``mode="frozen"`` drops every basis-derivative term, so each block obeys
    ``dr/dt = J r``.  ``mode="transported"`` keeps the couplings among
    blocks that share an eigenvalue.  Groups of blocks with distinct
    eigenvalues are integrated separately, so they cannot influence each
    other even through round-off.
    """
    if mode not in ("frozen", "transported"):
        raise ValueError(f"unknown mode {mode!r}")
    grid = np.asarray(tracked.grid)
    per = _substeps(grid, steps)
    r0 = _initial_r(gen, tracked, r0, rho0)
    T = tracked.total_time
    order = _default_order(grid) if order is None else order
    J = T * _jordan_stack(tracked)
    K = coupling_matrices(tracked, order) if (mode == "transported" and not gen.is_constant) else None
    r = np.zeros((len(grid), len(r0)), dtype=complex)
    labels = tracked.cluster_labels()
    for lab in np.unique(labels):
        idx = [i for a, b in enumerate(tracked.blocks) if labels[a] == lab for i in range(b.start, b.start + b.size)]
        sub = J[:, idx][:, :, idx]
        if K is not None:
            sub = sub - K[:, idx][:, :, idx]
        if gen.is_constant or (K is None and np.all(sub == sub[0])):
            r[:, idx] = _rk4_constant(sub[0], r0[idx], grid, per)
        else:
            r[:, idx] = _rk4_linear(_interpolant(grid, sub), r0[idx], grid, per)
    meta = {"steps": per * (len(grid) - 1), "order": 4, "picture": f"r-adiabatic-{mode}"}
    return _finish(grid, T, tracked, r, meta)


def bloch_trajectory(traj: Trajectory) -> np.ndarray:
    """(nodes, 3) Pauli components ``(v_x, v_y, v_z)`` of a qubit trajectory."""
    if traj.states.shape[1] != 4:
        raise ModelError("Bloch components are only defined for D=2")
    return bloch_vector(traj.states)


# ------------------------------------------------------------ closed systems


def integrate_schrodinger(H: TimeDependentOperator, psi0, total_time: float, steps: int = DEFAULT_STEPS, grid=None):
    """RK4 for ``d psi/ds = -i T H(s) psi``; returns (grid, states)."""
    grid = _check_grid(np.linspace(0, 1, DEFAULT_GRID) if grid is None else grid)
    per = _substeps(grid, steps)
    psi0 = np.asarray(psi0, dtype=complex)

    def mats(s):
        return np.array([-1j * total_time * H(x) for x in s])

    return grid, _rk4_linear(mats, psi0, grid, per)


def leakage(H: TimeDependentOperator, total_time: float, initial: int = 0, steps: int = DEFAULT_STEPS, grid=None):
    """Amplitudes outside the tracked eigenstate along a Schrodinger run.

    Starts in eigenstate ``initial`` of ``H(0)``.  Returns ``(grid, leak)``
    where ``leak[k]`` is the norm of the state's component orthogonal to the
    instantaneous eigenvector ``initial`` at node k.
    """
    from .conditions import track_eigenbasis

    grid = _check_grid(np.linspace(0, 1, DEFAULT_GRID) if grid is None else grid)
    _, vecs = track_eigenbasis(H, grid)
    grid, psi = integrate_schrodinger(H, vecs[0][:, initial], total_time, steps, grid)
    v = vecs[:, :, initial]
    amp = np.einsum("ka,ka->k", v.conj(), psi)
    leak = np.linalg.norm(psi - amp[:, None] * v, axis=1)
    return grid, leak
