"""Hermitian trace-orthogonal operator basis and coherence vectors.

A density matrix rho is expanded as ``rho = sum_k c_k F_k`` where the
``F_k`` are generalized Gell-Mann matrices together with a multiple of the
identity.  With the normalization ``Tr(F_i F_j) = 2 delta_ij`` the
components are ``c_k = Tr(F_k rho) / 2`` and the Hilbert-Schmidt inner
product ``Tr(u^dag v) / 2`` reduces to the Euclidean one on components.

For a qubit the basis is ``(I, sigma_x, sigma_y, sigma_z)`` and the
coherence vector of ``(I + v.sigma)/2`` is ``(1, v_x, v_y, v_z)/2``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ModelError, NonHermitianError

MAX_DIMENSION = 6
NORMALIZATION = 2.0
IMAG_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class OperatorBasis:
    """D^2 Hermitian matrices with ``Tr(F_i^dag F_j) = normalization * delta_ij``.

    ``elements[0]`` is ``sqrt(2/D) * I``; the remaining elements are traceless.
    """

    dimension: int
    elements: np.ndarray
    normalization: float = NORMALIZATION

    @property
    def size(self) -> int:
        return self.dimension ** 2

    def gram(self) -> np.ndarray:
        F = self.elements
        return np.einsum("iab,jab->ij", F.conj(), F)

    def trace_of(self, vec) -> float:
        """Trace of the operator whose coherence vector is ``vec``."""
        vec = np.asarray(vec)
        return vec[..., 0] * np.sqrt(2.0 * self.dimension) * self.normalization / 2.0

    def identity_vector(self) -> np.ndarray:
        """Coherence vector of the maximally mixed state ``I/D``."""
        v = np.zeros(self.size)
        v[0] = 1.0 / np.sqrt(2.0 * self.dimension)
        return v


def _gell_mann(D: int) -> np.ndarray:
    mats = [np.sqrt(2.0 / D) * np.eye(D, dtype=complex)]
    pairs = [(j, k) for j in range(D) for k in range(j + 1, D)]
    for j, k in pairs:
        m = np.zeros((D, D), dtype=complex)
        m[j, k] = m[k, j] = 1.0
        mats.append(m)
    for j, k in pairs:
        m = np.zeros((D, D), dtype=complex)
        m[j, k] = -1j
        m[k, j] = 1j
        mats.append(m)
    for l in range(1, D):
        m = np.zeros((D, D), dtype=complex)
        m[np.arange(l), np.arange(l)] = 1.0
        m[l, l] = -l
        mats.append(np.sqrt(2.0 / (l * (l + 1))) * m)
    return np.array(mats)


@lru_cache(maxsize=None)
def build_basis(D: int) -> OperatorBasis:
    """Generalized Gell-Mann basis for a D-level system, ``2 <= D <= 6``."""
    if not isinstance(D, (int, np.integer)) or not 2 <= D <= MAX_DIMENSION:
        raise ModelError(f"dimension must be an integer in [2, {MAX_DIMENSION}], got {D!r}")
    F = _gell_mann(int(D))
    F.setflags(write=False)
    return OperatorBasis(int(D), F)


def _check_matrix(rho, basis: OperatorBasis) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    D = basis.dimension
    if rho.shape != (D, D):
        raise ModelError(f"expected a {D}x{D} matrix, got shape {rho.shape}")
    return rho


def vectorize(rho, basis: OperatorBasis, hermitian: bool = True) -> np.ndarray:
    """Coherence vector ``c_k = Tr(F_k^dag rho) / N``.

    With ``hermitian=True`` (the default) the result is returned as a real
    array and a :class:`NonHermitianError` is raised if any imaginary part
    exceeds ``1e-10``.  Pass ``hermitian=False`` for general operators.
    """
    rho = _check_matrix(rho, basis)
    c = np.einsum("kab,ab->k", basis.elements.conj(), rho) / basis.normalization
    if not hermitian:
        return c
    if np.max(np.abs(c.imag), initial=0.0) > IMAG_TOL:
        raise NonHermitianError(
            f"operator is not Hermitian: imaginary coherence components up to {np.abs(c.imag).max():.3e}"
        )
    return c.real.copy()


def devectorize(vec, basis: OperatorBasis) -> np.ndarray:
    """Inverse of :func:`vectorize`: ``sum_k vec_k F_k``."""
    vec = np.asarray(vec)
    if vec.shape != (basis.size,):
        raise ModelError(f"expected {basis.size} components, got shape {vec.shape}")
    return np.einsum("k,kab->ab", vec, basis.elements)


def hs_inner(u, v) -> complex:
    """Hilbert-Schmidt inner product ``<<u|v>>`` of two coherence vectors."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape or u.ndim != 1:
        raise ModelError(f"length mismatch: {u.shape} vs {v.shape}")
    return complex(np.vdot(u, v))


def hs_inner_matrices(a, b, basis: OperatorBasis) -> complex:
    """``Tr(a^dag b) / N`` evaluated on matrices."""
    a = _check_matrix(a, basis)
    b = _check_matrix(b, basis)
    return complex(np.trace(a.conj().T @ b) / basis.normalization)


def bloch_vector(vec) -> np.ndarray:
    """Pauli components ``(v_x, v_y, v_z)`` of a qubit coherence vector (or stack)."""
    vec = np.asarray(vec)
    if vec.shape[-1] != 4:
        raise ModelError("Bloch components are only defined for D=2")
    return 2.0 * vec[..., 1:4]


def from_bloch(v) -> np.ndarray:
    """Coherence vector of ``(I + v.sigma)/2``."""
    v = np.asarray(v, dtype=float)
    if v.shape != (3,):
        raise ModelError("Bloch vector must have three components")
    return 0.5 * np.concatenate([[1.0], v])
