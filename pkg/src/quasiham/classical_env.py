"""Classical Markov environments built from telegraph fluctuators.

State convention for a single fluctuator: index 0 is ``s = +1``, index 1 is
``s = -1``.  For ``M`` fluctuators the joint index is the binary number whose
most significant bit belongs to fluctuator 0 (so ``V = V_0 (+) ... (+) V_{M-1}``
matches ``W = W_0 x ... x W_{M-1}``).  Rate matrices act on column
probability vectors: ``dP/dt = V @ P`` and every column of ``V`` sums to zero.

A fluctuator's ``delta`` is its *relative* bias: switching ``+1 -> -1`` happens
at rate ``gamma * (1 + delta)`` and ``-1 -> +1`` at ``gamma * (1 - delta)``.
The per-step matrix of a sliced chain uses ``p = gamma * dt`` and an absolute
bias ``delta * p``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse import csgraph

from .errors import (
    InvalidEnvironmentError,
    NonErgodicEnvironmentError,
    StateSpaceOverflowError,
)

MAX_FLUCTUATORS = 20
# beyond this many states the rate matrix is stored sparse
DENSE_STATE_LIMIT = 4096
_COLSUM_TOL = 1e-12


@dataclass(frozen=True)
class Fluctuator:
    g: float
    gamma: float
    delta: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.gamma) or self.gamma <= 0:
            raise InvalidEnvironmentError(f"switching rate must be > 0, got {self.gamma}")
        if not np.isfinite(self.g) or self.g < 0:
            raise InvalidEnvironmentError(f"coupling must be >= 0, got {self.g}")
        if not abs(self.delta) < 1:
            raise InvalidEnvironmentError(
                f"relative bias must satisfy |delta| < 1, got {self.delta}"
            )

    @property
    def rate_up_to_down(self) -> float:
        return self.gamma * (1.0 + self.delta)

    @property
    def rate_down_to_up(self) -> float:
        return self.gamma * (1.0 - self.delta)

    def rate_matrix(self) -> np.ndarray:
        a, b = self.rate_up_to_down, self.rate_down_to_up
        return np.array([[-a, b], [a, -b]])

    def stationary(self) -> np.ndarray:
        return np.array([(1.0 - self.delta) / 2.0, (1.0 + self.delta) / 2.0])

    def step_matrix(self, dt: float) -> np.ndarray:
        """Single-slice transition matrix ``W = I + V dt`` (column stochastic)."""
        p = self.gamma * dt
        d = self.delta * p
        w = np.array([[1 - p - d, p - d], [p + d, 1 - p + d]])
        if np.any(w < 0) or np.any(w > 1):
            raise InvalidEnvironmentError(
                f"time step {dt} too large for fluctuator {self}: W has entries outside [0, 1]"
            )
        return w


class FluctuatorSet(tuple):
    """Immutable sequence of :class:`Fluctuator` records."""

    def __new__(cls, items: Iterable = ()):
        fl = []
        for it in items:
            if isinstance(it, Fluctuator):
                fl.append(it)
            elif isinstance(it, dict):
                fl.append(Fluctuator(**it))
            else:
                fl.append(Fluctuator(*it))
        return super().__new__(cls, fl)

    @property
    def g(self) -> np.ndarray:
        return np.array([f.g for f in self], dtype=float)

    @property
    def gamma(self) -> np.ndarray:
        return np.array([f.gamma for f in self], dtype=float)

    @property
    def delta(self) -> np.ndarray:
        return np.array([f.delta for f in self], dtype=float)

    @property
    def unbiased(self) -> bool:
        return all(f.delta == 0 for f in self)

    def __add__(self, other):
        return FluctuatorSet(tuple(self) + tuple(other))

    def __repr__(self):
        return f"FluctuatorSet({list(self)!r})"


@dataclass(frozen=True)
class MarkovEnv:
    v: np.ndarray | sp.spmatrix
    p0: np.ndarray
    # spin value of each fluctuator in each state, when built from fluctuators
    spins: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        v = self.v
        if sp.issparse(v):
            v = sp.csc_matrix(v, dtype=float)
        else:
            v = np.array(v, dtype=float)
            v.setflags(write=False)
        object.__setattr__(self, "v", v)
        p0 = np.array(self.p0, dtype=float)
        p0.setflags(write=False)
        object.__setattr__(self, "p0", p0)

        n = v.shape[0]
        if v.shape != (n, n) or n < 1:
            raise InvalidEnvironmentError(f"rate matrix must be square, got {v.shape}")
        if p0.shape != (n,):
            raise InvalidEnvironmentError(f"p0 must have length {n}, got {p0.shape}")
        colsum = np.asarray(v.sum(axis=0)).ravel()
        scale = max(1.0, float(abs(v).max()))
        if np.max(np.abs(colsum)) > _COLSUM_TOL * scale:
            raise InvalidEnvironmentError("rate matrix columns must sum to zero")
        if sp.issparse(v):
            coo = v.tocoo()
            negative = np.any(coo.data[coo.row != coo.col] < 0)
        else:
            negative = np.any(v - np.diag(np.diag(v)) < 0)
        if negative:
            raise InvalidEnvironmentError("off-diagonal rates must be non-negative")
        if np.any(p0 < 0) or np.any(p0 > 1) or abs(p0.sum() - 1.0) > 1e-12:
            raise InvalidEnvironmentError("p0 must be a probability vector")

    @property
    def n_c(self) -> int:
        return self.v.shape[0]

    def dense_v(self) -> np.ndarray:
        return self.v.toarray() if sp.issparse(self.v) else np.asarray(self.v)

    def exit_rates(self) -> np.ndarray:
        return -np.asarray(self.v.diagonal()).ravel()

    def with_p0(self, p0) -> "MarkovEnv":
        return MarkovEnv(self.v, p0, self.spins)


def spin_values(n_fluct: int) -> np.ndarray:
    """Array ``(2**n_fluct, n_fluct)`` of the +-1 spin of each fluctuator in each state."""
    idx = np.arange(2**n_fluct)[:, None]
    bits = (idx >> np.arange(n_fluct - 1, -1, -1)[None, :]) & 1
    return 1 - 2 * bits


def env_from_fluctuators(f: Sequence, max_fluctuators: int = MAX_FLUCTUATORS) -> MarkovEnv:
    """Joint rate matrix (Kronecker sum) of independent fluctuators, started stationary.

    An empty set gives the trivial one-state environment.
    """
    f = FluctuatorSet(f)
    m = len(f)
    if m > max_fluctuators:
        raise StateSpaceOverflowError(
            f"{m} fluctuators need 2**{m} states; the cap is {max_fluctuators}"
        )
    if m == 0:
        return MarkovEnv(np.zeros((1, 1)), np.ones(1), np.zeros((1, 0), dtype=int))
    sparse = 2**m > DENSE_STATE_LIMIT
    v = sp.csr_matrix((1, 1)) if sparse else np.zeros((1, 1))
    p = np.ones(1)
    for fl in f:
        vn = fl.rate_matrix()
        if sparse:
            v = sp.kronsum(sp.csr_matrix(vn), v, format="csr")
        else:
            n = v.shape[0]
            v = np.kron(v, np.eye(2)) + np.kron(np.eye(n), vn)
        p = np.kron(p, fl.stationary())
    return MarkovEnv(v, p, spin_values(m))


def _closed_classes(v) -> int:
    """Number of closed communicating classes of the chain with generator ``v``."""
    adj = sp.csr_matrix(v, dtype=float).T  # edge b -> a where V[a, b] > 0
    adj = adj - sp.diags(adj.diagonal())
    adj.data = (adj.data > 0).astype(float)
    adj.eliminate_zeros()
    ncomp, labels = csgraph.connected_components(adj, directed=True, connection="strong")
    if ncomp == 1:
        return 1
    coo = adj.tocoo()
    leaving = labels[coo.row] != labels[coo.col]
    has_exit = np.zeros(ncomp, dtype=bool)
    has_exit[labels[coo.row[leaving]]] = True
    return int(np.count_nonzero(~has_exit))


def stationary_distribution(env: MarkovEnv) -> np.ndarray:
    """Null vector of ``V`` normalised to a probability vector."""
    if _closed_classes(env.v) != 1:
        raise NonErgodicEnvironmentError("zero eigenvalue of the rate matrix is degenerate")
    n = env.n_c
    if n == 1:
        return np.ones(1)
    if sp.issparse(env.v):
        # normalisation row replaces the first balance equation
        a = sp.lil_matrix(env.v)
        a[0, :] = np.ones(n)
        a = a.tocsr()
        rhs = np.zeros(n)
        rhs[0] = 1.0
        p, info = spla.bicgstab(a, rhs, x0=np.asarray(env.p0, dtype=float), rtol=1e-13, atol=0.0, maxiter=20 * n)
        scale = abs(env.v).max()
        if info != 0 or np.abs(env.v @ p).max() > 1e-10 * scale:
            p = spla.spsolve(a.tocsc(), rhs)  # direct fallback; slow for large hypercubes
    else:
        _, _, vh = np.linalg.svd(env.v)
        p = vh[-1]
        p = p / p.sum()
    p = np.clip(p, 0.0, None)
    return p / p.sum()


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray
    durations: np.ndarray
    t_total: float

    @property
    def n_jumps(self) -> int:
        return len(self.states) - 1

    @property
    def jump_times(self) -> np.ndarray:
        return np.cumsum(self.durations)[:-1]

    def state_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.jump_times, t, side="right")
        return self.states[k]


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent generator keyed by ``(seed, stream)``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(stream),)))


def sample_trajectory(env: MarkovEnv, t_total: float, rng_seed: int, stream: int = 0) -> Trajectory:
    """Exact continuous-time sample path (exponential dwell times)."""
    if not t_total > 0:
        raise ValueError(f"t_total must be > 0, got {t_total}")
    rng = make_rng(rng_seed, stream)
    v = env.v.tocsc() if sp.issparse(env.v) else env.v
    exit_rates = env.exit_rates()

    a = int(rng.choice(env.n_c, p=env.p0))
    t = 0.0
    states, durations = [a], []
    while True:
        rate = exit_rates[a]
        dwell = rng.exponential(1.0 / rate) if rate > 0 else np.inf
        if t + dwell >= t_total:
            durations.append(t_total - t)
            break
        durations.append(dwell)
        t += dwell
        if sp.issparse(v):
            col = v.getcol(a)
            targets, rates = col.indices, col.data
        else:
            rates = np.array(v[:, a])
            targets = np.arange(env.n_c)
        keep = (targets != a) & (rates > 0)
        targets, rates = targets[keep], rates[keep]
        k = np.searchsorted(np.cumsum(rates), rng.random() * rates.sum(), side="right")
        a = int(targets[min(k, len(targets) - 1)])
        states.append(a)
    return Trajectory(np.array(states), np.array(durations), float(t_total))
