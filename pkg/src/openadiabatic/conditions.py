"""Adiabaticity conditions for closed and open quantum systems.

Closed systems use the instantaneous eigenbasis of ``H(s)``.  Open systems
use a :class:`~openadiabatic.jordan.TrackedDecomposition` of ``L(s)``: for
blocks ``alpha`` (left index ``i``) and ``beta`` (right index ``j``) with
distinct eigenvalues the coupling ``<<E_alpha^(i)| dD_beta^(j)/ds>>`` is a
finite sum of matrix elements of ``dL/ds`` divided by powers of the complex
gap ``omega_{beta alpha} = lam_beta - lam_alpha``.

All matrix elements below are in normalized time ``s``; gaps and
eigenvalues are in physical units.  Block indices are 0-based in the API and
1-based in text summaries.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, factorial

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import EigenvalueCrossingError, ModelError
from .jordan import GAP_FLOOR, TrackedDecomposition, coupling_matrices, local_coupling_matrices
from .lindblad import TimeDependentOperator, supermatrix_derivative

DEFAULT_MARGIN = 0.1
EXPONENT_CAP = 700.0
COUPLING_FLOOR = 1e-12
GROWTH_TOL = 1e-10  # Re Omega below this (relative) counts as zero


# ------------------------------------------------------------ closed systems


def track_eigenbasis(H: TimeDependentOperator, grid, gap_floor: float = GAP_FLOOR):
    """Eigenvalues and phase-continuous eigenvectors of ``H(s)`` on a grid.

    Returns ``(energies, vectors)`` with shapes (nodes, D) and (nodes, D, D);
    ``vectors[k][:, n]`` is eigenvector n at node k, ordered by energy.
    Each vector is re-phased so its overlap with the previous node is
    real-positive.
    """
    grid = np.asarray(grid, dtype=float)
    energies, vectors = [], []
    for k, s in enumerate(grid):
        h = H(s)
        if not np.allclose(h, h.conj().T, atol=1e-12):
            raise ModelError(f"Hamiltonian is not Hermitian at s={s}")
        e, v = np.linalg.eigh(h)
        scale = max(np.abs(e).max(), 1.0)
        if len(e) > 1 and np.diff(e).min() < gap_floor * scale:
            raise EigenvalueCrossingError(f"degenerate energies at s={s:.6g}", interval=(s, s))
        if k == 0:
            idx = np.argmax(np.abs(v) > np.abs(v).max(axis=0) * (1 - 1e-9), axis=0)
            ph = v[idx, np.arange(len(e))]
        else:
            ph = np.einsum("an,an->n", vectors[-1].conj(), v).conj()
        v = v * (ph.conj() / np.abs(ph))
        energies.append(e)
        vectors.append(v)
    return np.array(energies), np.array(vectors)


@dataclass(frozen=True, eq=False)
class ClosedConditionReport:
    """Closed-system adiabaticity quantities on a grid.

    Attributes
    ----------
    couplings : ndarray
        (nodes, D, D) matrix elements ``<k|dH/ds|n>``.
    coupling_max : ndarray
        ``max_s |<k|dH/dt|n>| / |g_nk|`` for every pair (diagonal is 0).
    gap_min : ndarray
        ``min_s |g_nk|`` (diagonal is inf).
    ratio : ndarray
        ``coupling_max / gap_min``.
    berry_phases : ndarray
        ``i int <k|dk/ds> ds`` in the tracked gauge.
    F, G : float
        Largest ``|<k|dH/ds|m>|`` and smallest ``|g_mk|`` for the initial level m.
    """

    grid: np.ndarray
    total_time: float
    initial: int
    energies: np.ndarray
    vectors: np.ndarray
    couplings: np.ndarray
    coupling_max: np.ndarray
    gap_min: np.ndarray
    ratio: np.ndarray
    berry_phases: np.ndarray
    F: float
    G: float

    @property
    def time_bound(self) -> float:
        return self.F / self.G ** 2

    def satisfied(self, margin: float = DEFAULT_MARGIN) -> bool:
        off = ~np.eye(len(self.ratio), dtype=bool)
        return bool(np.all(self.ratio[off] <= margin) and self.time_bound <= margin * self.total_time)


def closed_condition(H: TimeDependentOperator, grid, total_time: float = 1.0, initial: int = 0) -> ClosedConditionReport:
    """Evaluate the closed-system adiabatic condition and the time bound."""
    grid = np.asarray(grid, dtype=float)
    energies, vectors = track_eigenbasis(H, grid)
    dH = np.array([H.derivative(s) for s in grid])
    cpl = np.einsum("kai,kab,kbj->kij", vectors.conj(), dH, vectors)
    D = energies.shape[1]
    g = energies[:, :, None] - energies[:, None, :]
    off = ~np.eye(D, dtype=bool)
    absg = np.where(off, np.abs(g), np.inf)
    coupling_max = np.where(off, (np.abs(cpl) / total_time / absg).max(axis=0), 0.0)
    gap_min = absg.min(axis=0)
    ratio = np.where(off, coupling_max / gap_min, 0.0)

    ov = np.einsum("kan,kan->kn", vectors[:-1].conj(), vectors[1:])
    berry = -np.angle(ov).sum(axis=0)

    others = [k for k in range(D) if k != initial]
    F = float(np.abs(cpl[:, others, initial]).max()) if others else 0.0
    G = float(gap_min[initial, others].min()) if others else np.inf
    return ClosedConditionReport(
        grid, float(total_time), initial, energies, vectors, cpl, coupling_max, gap_min, ratio, berry, F, G
    )


# --------------------------------------------------------------- counting


def enumerate_multi_indices(i: int, j: int, n_alpha: int) -> list:
    """All ``(p, (k_1..k_p))`` with ``p = 1..n_alpha-i`` and ``0 <= k_q <= j - S_{q-1}``."""
    out = []

    def rec(p, prefix, total):
        if len(prefix) == p:
            out.append((p, tuple(prefix)))
            return
        for k in range(j - total + 1):
            rec(p, prefix + [k], total + k)

    for p in range(1, n_alpha - i + 1):
        rec(p, [], 0)
    return out


def count_N(i: int, j: int, n_alpha: int) -> int:
    """Number of terms in the coupling sum for left grade i and right grade j."""
    if not (0 <= i < n_alpha and j >= 0):
        raise ValueError(f"need 0 <= i < n_alpha and j >= 0, got i={i}, j={j}, n_alpha={n_alpha}")
    return comb(n_alpha - i + 1 + j, 1 + j) - 1


def count_M(i: int, n_alpha: int, n_beta: int, n_other: int) -> int:
    """Terms summed over ``j < n_beta`` for ``n_other`` blocks of size ``n_beta``."""
    if not (0 <= i < n_alpha and n_beta >= 1 and n_other >= 0):
        raise ValueError("indices out of range")
    total = factorial(n_alpha + n_beta - i + 1) // (factorial(n_alpha - i + 1) * factorial(n_beta))
    return n_other * (total - n_beta - 1)


# ----------------------------------------------------------- open systems


def derivative_elements(tracked: TrackedDecomposition, floor: float = COUPLING_FLOOR) -> np.ndarray:
    """``A[k] = S^{-1} (dL/ds) S`` at every node, with round-off entries zeroed.

    An element is set to exactly zero when it is below ``floor`` times the
    product of the norms of its left covector, ``dL/ds`` and right vector.
    """
    gen = tracked.generator
    dL = np.array([supermatrix_derivative(gen, s) for s in tracked.grid])
    S, Si = tracked.S, tracked.S_inv
    A = np.einsum("kab,kbc,kcd->kad", Si, dL, S)
    nrm = np.linalg.norm(dL, ord=2, axis=(1, 2))
    bound = floor * nrm[:, None, None] * np.linalg.norm(Si, axis=2)[:, :, None] * np.linalg.norm(S, axis=1)[:, None, :]
    return np.where(np.abs(A) <= bound, 0.0, A)


@dataclass(frozen=True, eq=False)
class CouplingTerm:
    p: int
    ks: tuple
    row: tuple  # (alpha, grade) of the left covector
    col: tuple  # (beta, grade) of the right vector
    element: np.ndarray  # <<E|dL/ds|D>> per node

    @property
    def S(self) -> int:
        return sum(self.ks)

    @property
    def power(self) -> int:
        return self.p + self.S


@dataclass(frozen=True, eq=False)
class PairCondition:
    """Coupling of left chain ``(alpha, i)`` to right chain ``(beta, j)``.

    ``value`` is the signed sum per node; ``eta`` its maximum modulus.
    """

    alpha: int
    i: int
    beta: int
    j: int
    omega: np.ndarray
    terms: tuple
    value: np.ndarray

    @property
    def eta(self) -> float:
        return float(np.abs(self.value).max())

    @property
    def count(self) -> int:
        return len(self.terms)

    @property
    def max_term(self) -> float:
        return max(float(np.abs(t.element / self.omega ** t.power).max()) for t in self.terms)


def _pair(tracked, A, alpha, i, beta, j) -> PairCondition:
    blocks = tracked.blocks
    na = blocks[alpha].size
    if not (0 <= i < na and 0 <= j < blocks[beta].size):
        raise IndexError("chain grade out of range")
    if tracked.same_eigenvalue(alpha, beta):
        raise ValueError("the coupling sum needs distinct eigenvalues")
    lam = tracked.eigenvalues
    omega = lam[:, beta] - lam[:, alpha]
    if np.abs(omega).min() == 0:
        raise EigenvalueCrossingError(f"zero gap between blocks {alpha + 1} and {beta + 1}")
    terms, value = [], np.zeros(len(tracked.grid), dtype=complex)
    for p, ks in enumerate_multi_indices(i, j, na):
        S = sum(ks)
        r = blocks[alpha].start + i + p - 1
        c = blocks[beta].start + j - S
        el = A[:, r, c]
        terms.append(CouplingTerm(p, ks, (alpha, i + p - 1), (beta, j - S), el))
        value = value + el / ((-1) ** S * omega ** (p + S))
    if len(terms) != count_N(i, j, na):
        raise AssertionError("term enumeration disagrees with the closed-form count")
    return PairCondition(alpha, i, beta, j, omega, tuple(terms), value)


def pair_condition(tracked: TrackedDecomposition, alpha: int, i: int, beta: int, j: int, A=None) -> PairCondition:
    """Signed coupling sum for one ``(alpha, i, beta, j)`` at every node."""
    if A is None:
        A = derivative_elements(tracked)
    return _pair(tracked, A, alpha, i, beta, j)


def eta_theorem1(tracked: TrackedDecomposition, alpha: int, i: int, beta: int, j: int, A=None) -> float:
    """``max_s`` of the modulus of the coupling sum for one chain pair."""
    return pair_condition(tracked, alpha, i, beta, j, A).eta


def rdd_coupling(tracked: TrackedDecomposition, alpha: int, i: int, beta: int, j: int, A=None) -> np.ndarray:
    """``<<E_alpha^(i)| dD_beta^(j)/ds>>`` per node, from matrix elements of dL/ds."""
    return pair_condition(tracked, alpha, i, beta, j, A).value


def fd_coupling(tracked: TrackedDecomposition, alpha: int, i: int, beta: int, j: int, order: int = 2) -> np.ndarray:
    """The same coupling from finite differences of the tracked right chains."""
    K = coupling_matrices(tracked, order)
    return K[:, tracked.blocks[alpha].start + i, tracked.blocks[beta].start + j]


def local_fd_coupling(tracked: TrackedDecomposition, alpha: int, i: int, beta: int, j: int, K=None) -> np.ndarray:
    """The same coupling from local central differences (step 1e-5) at every node.

    ``K`` may carry precomputed :func:`local_coupling_matrices`.
    """
    if K is None:
        K = local_coupling_matrices(tracked)
    return K[:, tracked.blocks[alpha].start + i, tracked.blocks[beta].start + j]


def all_pairs(tracked: TrackedDecomposition, A=None) -> list:
    if A is None:
        A = derivative_elements(tracked)
    out = []
    for alpha, a in enumerate(tracked.blocks):
        for beta, b in enumerate(tracked.blocks):
            if tracked.same_eigenvalue(alpha, beta):
                continue
            for i in range(a.size):
                for j in range(b.size):
                    out.append(_pair(tracked, A, alpha, i, beta, j))
    return out


@dataclass(frozen=True)
class HeuristicEntry:
    alpha: int
    i: int
    beta: int
    j: int
    lhs: float
    min_gap: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.min_gap


def heuristic_condition(tracked: TrackedDecomposition, pairs=None) -> list:
    """Physical-time coupling sums against the smallest gap, per chain pair.

    The left side uses ``dL/dt = (dL/ds) / T``.  This comparison is a
    heuristic and is never used as a verdict.
    """
    if pairs is None:
        pairs = all_pairs(tracked)
    T = tracked.total_time
    return [
        HeuristicEntry(pc.alpha, pc.i, pc.beta, pc.j, pc.eta / T, float(np.abs(pc.omega).min())) for pc in pairs
    ]


def ansatz_coefficients(tracked: TrackedDecomposition, r0=None, total_time=None) -> np.ndarray:
    """Rescaled coefficients ``p`` of block-frozen evolution.

    Inside one block ``p^(j)(s) = sum_m r0^(j+m) (T s)^m / m!``; returns an
    array of shape (nodes, n) in flattened chain order.
    """
    T = tracked.total_time if total_time is None else total_time
    n = tracked.S.shape[1]
    r0 = np.ones(n, dtype=complex) if r0 is None else np.asarray(r0, dtype=complex)
    if r0.shape != (n,):
        raise ValueError(f"r0 needs {n} components")
    t = T * np.asarray(tracked.grid)
    p = np.zeros((len(t), n), dtype=complex)
    for b in tracked.blocks:
        for j in range(b.size):
            for m in range(b.size - j):
                p[:, b.start + j] += r0[b.start + j + m] * t ** m / factorial(m)
    return p


@dataclass(frozen=True, eq=False)
class TimeCondition:
    """Total-time condition for coefficient ``(alpha, i)``.

    ``rhs`` is the maximum over s of the full bracket; ``boundary`` and
    ``integral`` are the maxima of its boundary and integral parts.  When
    ``overflow`` is set the exponential exceeded the cap and ``rhs`` is inf.
    """

    alpha: int
    i: int
    total_time: float
    rhs: float
    boundary: float
    integral: float
    max_term: float
    count_M: int
    growth_pairs: tuple
    overflow: bool

    @property
    def breakdown(self) -> bool:
        return bool(self.growth_pairs) or self.overflow

    @property
    def ratio(self) -> float:
        return self.rhs / self.total_time

    @property
    def count_bound(self) -> float:
        return self.count_M * self.max_term

    def satisfied(self, margin: float = DEFAULT_MARGIN) -> bool:
        return not self.breakdown and self.ratio <= margin


def time_condition(
    tracked: TrackedDecomposition,
    p_coefficients=None,
    total_time=None,
    r0=None,
    A=None,
    pairs=None,
) -> list:
    """Total-time conditions for every ``(alpha, i)``.

    Parameters
    ----------
    p_coefficients : ndarray, optional
        (nodes, n) rescaled coefficients ``p``.  Defaults to the block-frozen
        ansatz built from ``r0`` (all ones by default).
    total_time : float, optional
        Overrides the generator's T.
    """
    T = tracked.total_time if total_time is None else float(total_time)
    grid = np.asarray(tracked.grid)
    if A is None:
        A = derivative_elements(tracked)
    if pairs is None:
        pairs = all_pairs(tracked, A)
    p = ansatz_coefficients(tracked, r0, T) if p_coefficients is None else np.asarray(p_coefficients)
    by_alpha = {}
    for pc in pairs:
        by_alpha.setdefault((pc.alpha, pc.i), []).append(pc)

    sizes = tracked.block_sizes
    labels = tracked.cluster_labels()
    out = []
    for (alpha, i), group in sorted(by_alpha.items()):
        total = np.zeros(len(grid), dtype=complex)
        bnd = np.zeros(len(grid), dtype=complex)
        integ = np.zeros(len(grid), dtype=complex)
        growth, overflow, max_term = set(), False, 0.0
        for pc in group:
            Omega = cumulative_trapezoid(pc.omega, grid, initial=0.0)
            pb = p[:, tracked.blocks[pc.beta].start + pc.j]
            for term in pc.terms:
                V = pb * term.element
                if not np.any(V != 0):
                    continue
                if np.any(Omega.real > GROWTH_TOL * max(1.0, np.abs(Omega).max())):
                    growth.add((pc.beta, pc.alpha))
                if np.max(T * Omega.real) > EXPONENT_CAP:
                    overflow = True
                    continue
                sign = (-1) ** term.S
                q = V / pc.omega ** (term.power + 1)
                ex = np.exp(T * Omega)
                b = sign * (q[0] - q * ex)
                integral = sign * cumulative_trapezoid(ex * np.gradient(q, grid), grid, initial=0.0)
                bnd += b
                integ += integral
                total += b + integral
                max_term = max(max_term, float(np.abs(b + integral).max()))
        others = [b for b in range(len(sizes)) if labels[b] != labels[alpha]]
        M = sum(count_N(i, j, sizes[alpha]) for b in others for j in range(sizes[b]))
        rhs = np.inf if overflow else float(np.abs(total).max())
        out.append(
            TimeCondition(
                alpha, i, T, rhs, float(np.abs(bnd).max()), float(np.abs(integ).max()), max_term, M,
                tuple(sorted(growth)), overflow,
            )
        )
    return out


# ----------------------------------------------------------------- report


@dataclass(frozen=True, eq=False)
class OpenConditionReport:
    """Everything evaluated for one tracked generator.

    ``omega[(beta, alpha)]`` and ``Omega[(beta, alpha)]`` hold the gap and its
    integral over s for every ordered pair of blocks with distinct eigenvalues.
    """

    tracked: TrackedDecomposition
    margin: float
    pairs: list
    heuristic: list
    time: list
    omega: dict = field(default_factory=dict)
    Omega: dict = field(default_factory=dict)

    @property
    def eta_max(self) -> float:
        return max((pc.eta for pc in self.pairs), default=0.0)

    @property
    def breakdown_pairs(self) -> list:
        return sorted({bp for tc in self.time for bp in tc.growth_pairs})

    @property
    def couplings_vanish(self) -> bool:
        return all(not np.any(t.element != 0) for pc in self.pairs for t in pc.terms)

    @property
    def verdict(self) -> str:
        if self.tracked.generator.is_constant:
            return "adiabatic"
        if self.couplings_vanish:
            return "adiabatic (dynamical symmetry)"
        if self.breakdown_pairs:
            b, a = self.breakdown_pairs[0]
            return f"breakdown: exponential growth on pair ({b + 1},{a + 1})"
        if self.eta_max <= self.margin and all(tc.satisfied(self.margin) for tc in self.time):
            return "adiabatic"
        return f"not adiabatic at margin {self.margin:g}"

    def summary(self) -> str:
        lines = [f"verdict: {self.verdict}", f"max eta: {self.eta_max:.6g}"]
        for pc in self.pairs:
            lines.append(
                f"pair alpha={pc.alpha + 1} i={pc.i} beta={pc.beta + 1} j={pc.j}: eta={pc.eta:.6g} "
                f"terms={pc.count} min|omega|={np.abs(pc.omega).min():.6g}"
            )
        for tc in self.time:
            rhs = "exponential growth: adiabaticity breakdown regime" if tc.overflow else f"{tc.rhs:.6g}"
            lines.append(
                f"time alpha={tc.alpha + 1} i={tc.i}: rhs={rhs} T={tc.total_time:g} M={tc.count_M} "
                f"breakdown={'yes' if tc.breakdown else 'no'}"
            )
        for b, a in self.breakdown_pairs:
            lines.append(f"growth: Re Omega_{b + 1}{a + 1} > 0 with nonzero coupling on pair ({b + 1},{a + 1})")
        return "\n".join(lines)


def open_condition(
    tracked: TrackedDecomposition, margin: float = DEFAULT_MARGIN, r0=None, p_coefficients=None, total_time=None
) -> OpenConditionReport:
    """Coupling sums, heuristic comparison and total-time conditions."""
    if margin <= 0:
        raise ValueError("margin must be positive")
    A = derivative_elements(tracked)
    pairs = all_pairs(tracked, A)
    heur = heuristic_condition(tracked, pairs)
    time = time_condition(tracked, p_coefficients, total_time, r0, A, pairs)
    grid = np.asarray(tracked.grid)
    lam = tracked.eigenvalues
    omega, Omega = {}, {}
    for a in range(tracked.n_blocks):
        for b in range(tracked.n_blocks):
            if not tracked.same_eigenvalue(a, b):
                w = lam[:, b] - lam[:, a]
                omega[(b, a)] = w
                Omega[(b, a)] = cumulative_trapezoid(w, grid, initial=0.0)
    return OpenConditionReport(tracked, margin, pairs, heur, time, omega, Omega)
