"""Generalized Gell-Mann generators, Bloch vectors and unitary dynamical maps.

Generator ordering for dimension ``n``: all symmetric off-diagonal matrices
(pairs ``j < k`` in lexicographic order), then all antisymmetric ones (same
pair order), then the ``n - 1`` diagonal matrices.  For ``n = 2`` this is
exactly ``(sigma_x, sigma_y, sigma_z)``.

A density matrix is written ``rho = (I + sum_i n_i lambda_i) / n`` with
``Tr(lambda_i lambda_j) / 2 = delta_ij``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidDimensionError, InvalidStateError, InvalidUnitaryError

CHECK_TOL = 1e-10


@dataclass(frozen=True)
class GeneratorBasis:
    n_q: int
    lambdas: np.ndarray  # shape (n_q**2 - 1, n_q, n_q)

    @property
    def dim(self) -> int:
        """Length of a Bloch vector, ``n_q**2 - 1``."""
        return self.lambdas.shape[0]


@dataclass(frozen=True)
class DynamicalMap:
    matrix: np.ndarray

    def __matmul__(self, other):
        if isinstance(other, DynamicalMap):
            return DynamicalMap(self.matrix @ other.matrix)
        return self.matrix @ other


@lru_cache(maxsize=16)
def _gellmann(n_q: int) -> np.ndarray:
    pairs = [(j, k) for j in range(n_q) for k in range(j + 1, n_q)]
    mats = []
    for j, k in pairs:
        m = np.zeros((n_q, n_q), dtype=complex)
        m[j, k] = m[k, j] = 1.0
        mats.append(m)
    for j, k in pairs:
        m = np.zeros((n_q, n_q), dtype=complex)
        m[j, k] = -1j
        m[k, j] = 1j
        mats.append(m)
    for l in range(1, n_q):
        d = np.zeros(n_q, dtype=complex)
        d[:l] = 1.0
        d[l] = -l
        mats.append(np.sqrt(2.0 / (l * (l + 1))) * np.diag(d))
    out = np.array(mats)
    out.setflags(write=False)
    return out


def make_generators(n_q: int) -> GeneratorBasis:
    """Return the ``n_q**2 - 1`` generalized Gell-Mann matrices of SU(n_q)."""
    if int(n_q) != n_q or n_q < 2:
        raise InvalidDimensionError(f"n_q must be an integer >= 2, got {n_q!r}")
    n_q = int(n_q)
    return GeneratorBasis(n_q, _gellmann(n_q))


def bloch_from_density(rho, basis: GeneratorBasis) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    n = basis.n_q
    if rho.shape != (n, n):
        raise InvalidDimensionError(f"expected {n}x{n} density matrix, got {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > CHECK_TOL:
        raise InvalidStateError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > CHECK_TOL:
        raise InvalidStateError(f"density matrix has trace {np.trace(rho).real:.3g}, expected 1")
    # n_i = (n/2) Tr(rho lambda_i); lambda_i Hermitian so Tr(rho l) = sum(rho * l.T)
    comps = 0.5 * n * np.einsum("ab,iba->i", rho, basis.lambdas)
    return comps.real.copy()


def density_from_bloch(n_vec, basis: GeneratorBasis) -> np.ndarray:
    """Reconstruct ``rho``; positivity is deliberately not checked."""
    n_vec = np.asarray(n_vec, dtype=float)
    if n_vec.shape != (basis.dim,):
        raise InvalidDimensionError(
            f"Bloch vector must have length {basis.dim}, got shape {n_vec.shape}"
        )
    n = basis.n_q
    return (np.eye(n, dtype=complex) + np.einsum("i,iab->ab", n_vec, basis.lambdas)) / n


def is_unitary(u, tol: float = CHECK_TOL) -> bool:
    u = np.asarray(u, dtype=complex)
    return u.ndim == 2 and u.shape[0] == u.shape[1] and (
        np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) <= tol
    )


def dynamical_map(u, basis: GeneratorBasis) -> DynamicalMap:
    """Bloch-space matrix ``T_ij = Tr(lambda_i U lambda_j U^dag) / 2`` of a unitary."""
    u = np.asarray(u, dtype=complex)
    if u.shape != (basis.n_q, basis.n_q):
        raise InvalidDimensionError(f"unitary must be {basis.n_q}x{basis.n_q}, got {u.shape}")
    if not is_unitary(u):
        raise InvalidUnitaryError("matrix is not unitary to 1e-10")
    lam = basis.lambdas
    conj = u @ lam @ u.conj().T  # U lambda_j U^dag for every j
    t = 0.5 * np.einsum("iab,jba->ij", lam, conj)
    return DynamicalMap(t.real.copy())
