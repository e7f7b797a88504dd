"""Quasi-Hamiltonian assembly and noise-averaged evolution.

The joint space is ``environment (x) Bloch`` with the environment index
outermost, so a state vector has shape ``(n_c * d,)`` with ``d = n_q**2 - 1``
and reshapes to ``(n_c, d)``.  The quasi-Hamiltonian is

    H_q = i (V (x) I_d) + sum_a |a><a| (x) i L(a)

where ``L(a)`` generates the Bloch-space rotation of ``H(a)``.  ``H_q`` is
``i`` times a real matrix ``G``; the averaged propagator ``exp(-i H_q t)``
equals ``exp(G t)`` and is real.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.linalg as sla
from scipy.spatial import cKDTree

from .classical_env import FluctuatorSet, MarkovEnv, spin_values
from .errors import (
    DefectiveMatrixError,
    InvalidDimensionError,
    InvalidEnvironmentError,
    InvalidOperatorError,
    InvalidUnitaryError,
    StateSpaceOverflowError,
)
from .su_basis import CHECK_TOL, GeneratorBasis, dynamical_map, is_unitary, make_generators

MAX_DIM = 4096
DEFECT_COND = 1e8

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


@dataclass(frozen=True)
class QuantumSpec:
    """Hamiltonian ``H(a)`` of the quantum system for every environment state ``a``."""

    n_q: int
    hamiltonians: np.ndarray  # (n_c, n_q, n_q)

    def __post_init__(self):
        h = np.array(self.hamiltonians, dtype=complex)
        if h.ndim != 3 or h.shape[1:] != (self.n_q, self.n_q):
            raise InvalidDimensionError(
                f"hamiltonians must have shape (n_c, {self.n_q}, {self.n_q}), got {h.shape}"
            )
        if np.max(np.abs(h - h.conj().transpose(0, 2, 1)), initial=0.0) > CHECK_TOL:
            raise InvalidOperatorError("every H(a) must be Hermitian")
        h.setflags(write=False)
        object.__setattr__(self, "hamiltonians", h)

    @property
    def n_c(self) -> int:
        return self.hamiltonians.shape[0]


def fluctuator_spec(f: Sequence, h0, couplings) -> QuantumSpec:
    """``H(a) = h0 + sum_n s_n(a) g_n couplings[n]`` over the joint fluctuator states."""
    f = FluctuatorSet(f)
    h0 = np.asarray(h0, dtype=complex)
    couplings = np.asarray(couplings, dtype=complex).reshape(len(f), *h0.shape)
    s = spin_values(len(f)).astype(float)  # (n_c, M)
    hs = h0[None] + np.einsum("am,m,mij->aij", s, f.g, couplings)
    return QuantumSpec(h0.shape[0], hs)


def dephasing_spec(f: Sequence, b0: float) -> QuantumSpec:
    """Qubit with ``H = -(b0 + sum_n s_n g_n) sigma_z / 2``."""
    f = FluctuatorSet(f)
    return fluctuator_spec(f, -0.5 * b0 * SIGMA_Z, [-0.5 * SIGMA_Z] * len(f))


def adjoint_generator(h, basis: GeneratorBasis) -> np.ndarray:
    """Real antisymmetric ``L_ij = -(i/2) Tr(lambda_i [H, lambda_j])``.

    ``expm(L t)`` is the dynamical map of ``exp(-i H t)``.
    """
    h = np.asarray(h, dtype=complex)
    if h.shape != (basis.n_q, basis.n_q):
        raise InvalidDimensionError(f"H must be {basis.n_q}x{basis.n_q}, got {h.shape}")
    if np.max(np.abs(h - h.conj().T)) > CHECK_TOL:
        raise InvalidOperatorError("H must be Hermitian")
    lam = basis.lambdas
    comm = h @ lam - lam @ h
    return (-0.5j * np.einsum("iab,jba->ij", lam, comm)).real.copy()


@dataclass(frozen=True)
class Eigendecomposition:
    values: np.ndarray
    right: np.ndarray  # columns are right eigenvectors
    left: np.ndarray  # rows are left eigenvectors, left @ right = I
    condition: float
    defective: bool

    def propagate(self, vec, t: float) -> np.ndarray:
        if self.defective:
            raise DefectiveMatrixError(
                f"eigenvector matrix is (near) singular, cond={self.condition:.3g}; use expm_apply"
            )
        return self.right @ (np.exp(-1j * self.values * t) * (self.left @ vec))


@dataclass(frozen=True)
class QuasiHamiltonian:
    matrix: np.ndarray
    n_c: int = 1
    basis: GeneratorBasis | None = field(default=None, compare=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidDimensionError(f"quasi-Hamiltonian must be square, got {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def bloch_dim(self) -> int:
        return self.dim // self.n_c

    @cached_property
    def generator(self) -> np.ndarray:
        """``G = -i H_q``; real whenever H_q came from :func:`build_quasi_hamiltonian`."""
        g = -1j * self.matrix
        return g.real.copy() if np.max(np.abs(g.imag), initial=0.0) == 0.0 else g

    @cached_property
    def eig(self) -> Eigendecomposition:
        return eigendecompose(self)


def build_quasi_hamiltonian(
    q: QuantumSpec, env: MarkovEnv, basis: GeneratorBasis | None = None, max_dim: int = MAX_DIM
) -> QuasiHamiltonian:
    if basis is None:
        basis = make_generators(q.n_q)
    if basis.n_q != q.n_q:
        raise InvalidDimensionError("basis dimension does not match the quantum system")
    if q.n_c != env.n_c:
        raise InvalidDimensionError(
            f"{q.n_c} Hamiltonians supplied for an environment with {env.n_c} states"
        )
    d = basis.dim
    dim = env.n_c * d
    if dim > max_dim:
        raise StateSpaceOverflowError(f"quasi-Hamiltonian dimension {dim} exceeds cap {max_dim}")
    g = np.kron(env.dense_v(), np.eye(d))
    for a in range(env.n_c):
        g[a * d:(a + 1) * d, a * d:(a + 1) * d] += adjoint_generator(q.hamiltonians[a], basis)
    return QuasiHamiltonian(1j * g, env.n_c, basis)


def _defective_cluster(values, right, scale) -> bool:
    """True if two (nearly) equal eigenvalues carry (nearly) parallel eigenvectors."""
    pts = np.column_stack([values.real, values.imag])
    pairs = cKDTree(pts).query_pairs(1e-6 * scale, output_type="ndarray")
    if len(pairs) == 0:
        return False
    r = right / np.linalg.norm(right, axis=0)
    overlap = np.abs(np.einsum("ij,ij->j", r[:, pairs[:, 0]].conj(), r[:, pairs[:, 1]]))
    return bool(np.any(overlap > 1 - 1e-6))


def eigendecompose(hq: QuasiHamiltonian) -> Eigendecomposition:
    """Right/left eigenvectors normalised so that ``left @ right = I``.

    The decomposition is flagged ``defective`` when the eigenvector matrix has
    condition number above 1e8 or a coalescing eigenvalue pair has parallel
    eigenvectors (exceptional point); propagation then refuses to run.
    """
    values, right = sla.eig(hq.matrix)
    right = right / np.linalg.norm(right, axis=0)
    cond = float(np.linalg.cond(right))
    scale = max(1.0, float(np.linalg.norm(hq.matrix, 2)))
    defective = not np.isfinite(cond) or cond > DEFECT_COND or _defective_cluster(values, right, scale)
    if defective:
        left = np.full_like(right, np.nan)
    else:
        left = np.linalg.inv(right)
    return Eigendecomposition(values, right, left, cond, defective)


def expm_apply(hq: QuasiHamiltonian, vector, t: float) -> np.ndarray:
    """``exp(-i H_q t) @ vector`` by scaling-and-squaring Pade (scipy)."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    vector = np.asarray(vector)
    if t == 0:
        return vector.copy()
    return sla.expm(hq.generator * t) @ vector


def _propagate(hq: QuasiHamiltonian, vec, t: float, method: str) -> np.ndarray:
    if t == 0:
        return np.asarray(vec)
    if method == "auto":
        method = "expm" if hq.eig.defective else "eig"
    if method == "eig":
        return hq.eig.propagate(vec, t)
    if method == "expm":
        return expm_apply(hq, vec, t)
    raise ValueError(f"unknown method {method!r}")


def _initial_joint(hq: QuasiHamiltonian, env: MarkovEnv, n0) -> np.ndarray:
    n0 = np.asarray(n0, dtype=float)
    if env.n_c != hq.n_c or n0.shape != (hq.bloch_dim,):
        raise InvalidDimensionError("initial Bloch vector / environment do not match H_q")
    return np.kron(env.p0, n0)


def _contract(hq: QuasiHamiltonian, joint) -> np.ndarray:
    return np.asarray(joint).reshape(hq.n_c, hq.bloch_dim).sum(axis=0).real


def evolve(hq: QuasiHamiltonian, env: MarkovEnv, n0, t: float, method: str = "auto") -> np.ndarray:
    """Noise-averaged Bloch vector ``<x_f| exp(-i H_q t) |i_f> n0`` with ``|i_f> = p0``."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    if t == 0:
        return np.array(n0, dtype=float)
    return _contract(hq, _propagate(hq, _initial_joint(hq, env, n0), t, method))


def evolve_curve(hq: QuasiHamiltonian, env: MarkovEnv, n0, times, method: str = "auto") -> np.ndarray:
    """:func:`evolve` on a grid of times; returns shape ``(len(times), d)``."""
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise ValueError("times must be >= 0")
    v0 = _initial_joint(hq, env, n0)
    if method == "auto":
        method = "expm" if hq.eig.defective else "eig"
    if method == "eig":
        e = hq.eig
        if e.defective:
            raise DefectiveMatrixError("eigendecomposition is defective; use method='expm'")
        coeff = e.left @ v0
        # contract before expanding over time: row sums of the right vectors
        summed = e.right.reshape(hq.n_c, hq.bloch_dim, -1).sum(axis=0)  # (d, D)
        phases = np.exp(-1j * np.outer(times, e.values))  # (T, D)
        out = (phases * coeff) @ summed.T
        out = out.real
    else:
        out = np.array([_contract(hq, _propagate(hq, v0, t, "expm")) for t in times])
    out[times == 0] = np.asarray(n0, dtype=float)
    return out


def averaged_map(
    hq: QuasiHamiltonian, env: MarkovEnv, t: float, contraction: str = "xf", method: str = "auto"
) -> np.ndarray:
    """The ``d x d`` noise-averaged dynamical map.

    ``contraction="xf"`` uses the all-ones final row and ``p0`` initial column;
    ``"sqrt_ps"`` sandwiches between ``sqrt(p_s)`` vectors and is only accepted
    for a uniform ``p0``, where both agree.
    """
    d, n_c = hq.bloch_dim, hq.n_c
    if contraction == "sqrt_ps":
        if not np.allclose(env.p0, 1.0 / n_c, rtol=0, atol=1e-14):
            raise InvalidEnvironmentError("sqrt(p_s) contraction requires a uniform distribution")
        w_in = np.full(n_c, 1.0 / np.sqrt(n_c))
        w_out = w_in
    elif contraction == "xf":
        w_in, w_out = env.p0, np.ones(n_c)
    else:
        raise ValueError(f"unknown contraction {contraction!r}")
    cols = np.kron(w_in[:, None], np.eye(d))  # (D, d)
    prop = np.column_stack([_propagate(hq, cols[:, j], t, method) for j in range(d)])
    return np.einsum("a,aij->ij", w_out, prop.reshape(n_c, d, d)).real


@dataclass(frozen=True)
class PulseEvent:
    time: float
    r: np.ndarray

    def __post_init__(self):
        r = np.array(self.r, dtype=complex)
        if not is_unitary(r):
            raise InvalidUnitaryError("pulse operator must be unitary to 1e-10")
        object.__setattr__(self, "r", r)
        if not self.time > 0:
            raise ValueError(f"pulse time must be > 0, got {self.time}")


def rotation(axis, angle: float) -> np.ndarray:
    """Qubit rotation ``exp(-i angle (axis . sigma) / 2)``."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    gen = axis[0] * SIGMA_X + axis[1] * SIGMA_Y + axis[2] * SIGMA_Z
    return np.cos(angle / 2) * np.eye(2) - 1j * np.sin(angle / 2) * gen


def evolve_with_pulses(
    hq: QuasiHamiltonian,
    env: MarkovEnv,
    n0,
    pulses: Sequence[PulseEvent],
    t: float,
    method: str = "auto",
) -> np.ndarray:
    """Averaged evolution with instantaneous unitaries applied as ``I_c (x) R``."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    times = [p.time for p in pulses]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("pulse times must be strictly increasing")
    if times and not times[-1] < t:
        raise ValueError(f"pulse at {times[-1]} is not before the final time {t}")
    if not pulses:
        return evolve(hq, env, n0, t, method)
    basis = hq.basis or make_generators(int(round(np.sqrt(hq.bloch_dim + 1))))
    vec = _initial_joint(hq, env, n0).astype(complex)
    now = 0.0
    for p in pulses:
        vec = _propagate(hq, vec, p.time - now, method)
        rmap = dynamical_map(p.r, basis).matrix
        vec = (vec.reshape(hq.n_c, hq.bloch_dim) @ rmap.T).ravel()
        now = p.time
    vec = _propagate(hq, vec, t - now, method)
    return _contract(hq, vec)
