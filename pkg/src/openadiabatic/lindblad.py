"""Time-dependent Lindblad generators and their coherence-vector supermatrices.

Everything is parameterized by the normalized time ``s = t/T`` in [0, 1].
``supermatrix(gen, s)`` returns the generator in physical-time units
(``d|rho>>/dt = L |rho>>``); ``supermatrix_derivative(gen, s)`` returns
``dL/ds``.  Use ``dL/dt = dL/ds / T`` when physical rates are needed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ModelError, NonHermitianError
from .operator_space import IMAG_TOL, OperatorBasis, build_basis, vectorize

FD_STEP = 1e-5


@dataclass(frozen=True, eq=False)
class Schedule:
    """Real scalar function of ``s`` on [0, 1].

    ``kind="poly"`` stores coefficients in increasing powers of ``s``;
    ``kind="table"`` stores ``(s, value)`` knots and interpolates linearly.
    Table derivatives are the right-derivative at knots (left at ``s=1``).
    """

    kind: str
    coeffs: tuple = ()
    knots: tuple = ()

    def __post_init__(self):
        if self.kind == "poly":
            c = tuple(float(x) for x in self.coeffs) or (0.0,)
            if not all(np.isfinite(c)):
                raise ModelError("polynomial coefficients must be finite")
            object.__setattr__(self, "coeffs", c)
        elif self.kind == "table":
            k = tuple((float(a), float(b)) for a, b in self.knots)
            if len(k) < 2:
                raise ModelError("table schedule needs at least two knots")
            xs = [a for a, _ in k]
            if any(b <= a for a, b in zip(xs, xs[1:])):
                raise ModelError("table knots must be strictly increasing in s")
            if xs[0] > 0.0 or xs[-1] < 1.0:
                raise ModelError("table knots must cover [0, 1]")
            if not all(np.isfinite(v) for _, v in k):
                raise ModelError("table values must be finite")
            object.__setattr__(self, "knots", k)
        else:
            raise ModelError(f"unknown schedule kind {self.kind!r}")

    @classmethod
    def constant(cls, value: float) -> "Schedule":
        return cls("poly", (value,))

    @classmethod
    def linear(cls, start: float, slope: float) -> "Schedule":
        return cls("poly", (start, slope))

    @classmethod
    def poly(cls, coeffs: Sequence[float]) -> "Schedule":
        return cls("poly", tuple(coeffs))

    @classmethod
    def table(cls, knots) -> "Schedule":
        return cls("table", knots=tuple(map(tuple, knots)))

    @property
    def is_constant(self) -> bool:
        if self.kind == "poly":
            return all(c == 0.0 for c in self.coeffs[1:])
        return len({v for _, v in self.knots}) == 1

    def __call__(self, s: float) -> float:
        if self.kind == "poly":
            return float(np.polynomial.polynomial.polyval(s, self.coeffs))
        xs, ys = zip(*self.knots)
        return float(np.interp(s, xs, ys))

    def evaluate(self, s) -> np.ndarray:
        """Vectorized evaluation on an array of ``s`` values."""
        s = np.asarray(s, dtype=float)
        if self.kind == "poly":
            return np.polynomial.polynomial.polyval(s, self.coeffs)
        xs, ys = zip(*self.knots)
        return np.interp(s, xs, ys)

    def derivative(self, s: float) -> float:
        if self.kind == "poly":
            d = np.polynomial.polynomial.polyder(self.coeffs)
            return float(np.polynomial.polynomial.polyval(s, d))
        xs = np.array([a for a, _ in self.knots])
        ys = np.array([b for _, b in self.knots])
        idx = int(np.searchsorted(xs, s, side="right")) - 1
        idx = min(max(idx, 0), len(xs) - 2)
        return float((ys[idx + 1] - ys[idx]) / (xs[idx + 1] - xs[idx]))

    def is_knot(self, s: float, atol: float = 1e-12) -> bool:
        """True where the schedule is not differentiable (interior table knots)."""
        if self.kind == "poly":
            return False
        return any(abs(s - a) <= atol for a, _ in self.knots[1:-1])

    def __mul__(self, other: "Schedule") -> "Schedule":
        if self.kind != "poly" or other.kind != "poly":
            raise ModelError("only polynomial schedules can be multiplied")
        return Schedule.poly(np.polynomial.polynomial.polymul(self.coeffs, other.coeffs))

    def to_dict(self) -> dict:
        if self.kind == "poly":
            return {"kind": "poly", "coeffs": list(self.coeffs)}
        return {"kind": "table", "knots": [list(k) for k in self.knots]}


@dataclass(frozen=True, eq=False)
class TimeDependentOperator:
    """``sum_k matrix_k * schedule_k(s)`` for constant matrices ``matrix_k``."""

    terms: tuple = ()

    def __post_init__(self):
        terms = []
        shape = None
        for m, sched in self.terms:
            m = np.array(m, dtype=complex)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ModelError(f"operator terms must be square matrices, got shape {m.shape}")
            if shape is not None and m.shape != shape:
                raise ModelError(f"operator terms disagree in shape: {m.shape} vs {shape}")
            if not isinstance(sched, Schedule):
                raise ModelError("each term needs a Schedule")
            shape = m.shape
            m.setflags(write=False)
            terms.append((m, sched))
        object.__setattr__(self, "terms", tuple(terms))

    @property
    def dimension(self):
        return self.terms[0][0].shape[0] if self.terms else None

    @property
    def is_constant(self) -> bool:
        return all(sched.is_constant for _, sched in self.terms)

    def __call__(self, s: float) -> np.ndarray:
        if not self.terms:
            raise ModelError("empty operator has no dimension")
        return sum(m * sched(s) for m, sched in self.terms)

    def derivative(self, s: float) -> np.ndarray:
        if not self.terms:
            raise ModelError("empty operator has no dimension")
        return sum(m * sched.derivative(s) for m, sched in self.terms)


def apply_generator(rho, H, gammas=()) -> np.ndarray:
    """``-i[H, rho] + 1/2 sum_i ([G_i, rho G_i^dag] + [G_i rho, G_i^dag])``."""
    rho = np.asarray(rho, dtype=complex)
    H = np.asarray(H, dtype=complex)
    D = rho.shape[0]
    if rho.shape != (D, D) or H.shape != (D, D):
        raise ModelError(f"dimension mismatch: rho {rho.shape}, H {H.shape}")
    out = -1j * (H @ rho - rho @ H)
    for G in gammas:
        G = np.asarray(G, dtype=complex)
        if G.shape != (D, D):
            raise ModelError(f"dimension mismatch: Lindblad operator {G.shape}")
        Gd = G.conj().T
        out = out + 0.5 * ((G @ rho @ Gd - rho @ Gd @ G) + (G @ rho @ Gd - Gd @ G @ rho))
    return out


def _superop(fn, basis: OperatorBasis) -> np.ndarray:
    """Supermatrix of a linear map, built column by column on the basis."""
    cols = [vectorize(fn(F), basis, hermitian=False) for F in basis.elements]
    return np.array(cols).T


def _realify(M: np.ndarray, what: str) -> np.ndarray:
    scale = max(1.0, float(np.abs(M).max(initial=0.0)))
    if np.abs(M.imag).max(initial=0.0) > IMAG_TOL * scale:
        raise NonHermitianError(f"{what} has imaginary supermatrix entries; it does not preserve Hermiticity")
    return np.ascontiguousarray(M.real)


@dataclass(frozen=True, eq=False)
class TimeDependentSuperoperator:
    """A Lindblad generator ``L(s)`` over a D-level system.

    ``hamiltonian`` and each entry of ``lindblad_ops`` are
    :class:`TimeDependentOperator` values.  ``raw_terms`` holds extra
    ``(D^2 x D^2 real matrix, Schedule)`` pairs added directly to the
    supermatrix; no physicality is implied for them.
    """

    dimension: int
    hamiltonian: TimeDependentOperator = field(default_factory=TimeDependentOperator)
    lindblad_ops: tuple = ()
    total_time: float = 1.0
    raw_terms: tuple = ()

    def __post_init__(self):
        D = self.dimension
        basis = build_basis(D)
        if not (np.isfinite(self.total_time) and self.total_time > 0):
            raise ModelError(f"total_time must be positive, got {self.total_time}")
        object.__setattr__(self, "lindblad_ops", tuple(self.lindblad_ops))
        for op in (self.hamiltonian, *self.lindblad_ops):
            if op.dimension not in (None, D):
                raise ModelError(f"operator dimension {op.dimension} does not match D={D}")
        for m, _ in self.hamiltonian.terms:
            if not np.allclose(m, m.conj().T, atol=1e-12):
                raise NonHermitianError("Hamiltonian term matrices must be Hermitian")

        mats, scheds = [], []
        for m, sched in self.hamiltonian.terms:
            mats.append(_realify(_superop(lambda r, m=m: -1j * (m @ r - r @ m), basis), "Hamiltonian term"))
            scheds.append((sched,))
        for op in self.lindblad_ops:
            terms = op.terms
            for a in range(len(terms)):
                for b in range(a, len(terms)):
                    Ga, Gb = terms[a][0], terms[b][0]

                    def pair(r, Ga=Ga, Gb=Gb):
                        Gbd, Gad = Gb.conj().T, Ga.conj().T
                        out = Ga @ r @ Gbd - 0.5 * (Gbd @ Ga @ r + r @ Gbd @ Ga)
                        if Ga is not Gb:
                            out = out + Gb @ r @ Gad - 0.5 * (Gad @ Gb @ r + r @ Gad @ Gb)
                        return out

                    mats.append(_realify(_superop(pair, basis), "Lindblad term"))
                    scheds.append((terms[a][1], terms[b][1]))
        raw = []
        for m, sched in self.raw_terms:
            m = np.array(m, dtype=float)
            if m.shape != (D * D, D * D):
                raise ModelError(f"raw supermatrix terms must be {D*D}x{D*D}, got {m.shape}")
            m.setflags(write=False)
            raw.append((m, sched))
            mats.append(m)
            scheds.append((sched,))
        object.__setattr__(self, "raw_terms", tuple(raw))
        stack = np.array(mats) if mats else np.zeros((0, D * D, D * D))
        stack.setflags(write=False)
        object.__setattr__(self, "_stack", stack)
        object.__setattr__(self, "_scheds", tuple(scheds))

    @property
    def basis(self) -> OperatorBasis:
        return build_basis(self.dimension)

    @property
    def size(self) -> int:
        return self.dimension ** 2

    @property
    def is_constant(self) -> bool:
        return all(s.is_constant for group in self._scheds for s in group)

    def coefficients(self, s: float) -> np.ndarray:
        return np.array([np.prod([f(s) for f in group]) for group in self._scheds])

    def coefficients_many(self, s) -> np.ndarray:
        """Term coefficients at many ``s`` values, shape (len(s), terms)."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        cols = [np.prod([f.evaluate(s) for f in group], axis=0) for group in self._scheds]
        return np.array(cols).T if cols else np.zeros((len(s), 0))

    def coefficient_derivatives(self, s: float) -> np.ndarray:
        out = []
        for group in self._scheds:
            if len(group) == 1:
                out.append(group[0].derivative(s))
            else:
                f, g = group
                out.append(f.derivative(s) * g(s) + f(s) * g.derivative(s))
        return np.array(out)

    def nondifferentiable_at(self, s: float) -> bool:
        return any(f.is_knot(s) for group in self._scheds for f in group)

    def hamiltonian_at(self, s: float) -> np.ndarray:
        if self.hamiltonian.terms:
            return self.hamiltonian(s)
        return np.zeros((self.dimension, self.dimension), dtype=complex)

    def lindblad_at(self, s: float) -> list:
        return [op(s) for op in self.lindblad_ops if op.terms]

    def with_total_time(self, T: float) -> "TimeDependentSuperoperator":
        return TimeDependentSuperoperator(self.dimension, self.hamiltonian, self.lindblad_ops, T, self.raw_terms)


def _check_s(s):
    if not (-1e-12 <= s <= 1 + 1e-12):
        raise ModelError(f"s must lie in [0, 1], got {s}")


def supermatrix(gen: TimeDependentSuperoperator, s: float) -> np.ndarray:
    """Real ``D^2 x D^2`` matrix of the generator at normalized time ``s``."""
    _check_s(s)
    c = gen.coefficients(s)
    L = np.tensordot(c, gen._stack, axes=1) if len(c) else np.zeros((gen.size, gen.size))
    if not np.all(np.isfinite(L)):
        raise ModelError(f"generator is not finite at s={s}")
    return L


def supermatrices(gen: TimeDependentSuperoperator, s) -> np.ndarray:
    """Stack of supermatrices at an array of ``s`` values."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s < -1e-12) or np.any(s > 1 + 1e-12):
        raise ModelError("s must lie in [0, 1]")
    c = gen.coefficients_many(s)
    if c.shape[1] == 0:
        return np.zeros((len(s), gen.size, gen.size))
    L = np.tensordot(c, gen._stack, axes=1)
    if not np.all(np.isfinite(L)):
        raise ModelError("generator is not finite on the requested grid")
    return L


def supermatrix_derivative(gen: TimeDependentSuperoperator, s: float) -> np.ndarray:
    """Analytic ``dL/ds``; the right-derivative at table knots."""
    _check_s(s)
    c = gen.coefficient_derivatives(s)
    if not len(c):
        return np.zeros((gen.size, gen.size))
    return np.tensordot(c, gen._stack, axes=1)


def supermatrix_fd(gen: TimeDependentSuperoperator, s: float, h: float = FD_STEP) -> np.ndarray:
    """Central finite-difference ``dL/ds``; second-order one-sided at the interval ends."""
    if s - h < 0.0:
        f = [supermatrix(gen, s + k * h) for k in range(3)]
        return (-3 * f[0] + 4 * f[1] - f[2]) / (2 * h)
    if s + h > 1.0:
        f = [supermatrix(gen, s - k * h) for k in range(3)]
        return (3 * f[0] - 4 * f[1] + f[2]) / (2 * h)
    return (supermatrix(gen, s + h) - supermatrix(gen, s - h)) / (2 * h)


def supermatrix_direct(gen: TimeDependentSuperoperator, s: float) -> np.ndarray:
    """Supermatrix assembled by applying the generator to every basis element.

    Slow reference path, independent of the cached term stack.
    """
    basis = gen.basis
    H = gen.hamiltonian_at(s)
    gammas = gen.lindblad_at(s)
    M = _realify(_superop(lambda r: apply_generator(r, H, gammas), basis), "generator")
    for m, sched in gen.raw_terms:
        M = M + m * sched(s)
    return M
