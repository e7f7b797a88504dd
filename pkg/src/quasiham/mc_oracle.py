"""Monte Carlo estimates of noise-averaged dynamics, independent of the quasi-Hamiltonian.

Trajectories are processed in fixed-size blocks.  Block ``b`` draws from the
stream ``(seed, b)`` and its statistics are merged in block order, so results
are bit-identical for any number of worker threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .classical_env import FluctuatorSet, MarkovEnv, make_rng
from .dephasing_exact import EnvelopeCurve, check_time_grid, crossing_flags
from .quasi_h import PulseEvent, QuantumSpec
from .su_basis import GeneratorBasis, dynamical_map, make_generators

DEFAULT_BLOCK = 8192
MIN_TRAJECTORIES = 100


@dataclass
class _Moments:
    """Running mean / sum of squared deviations, merged with Chan's formula."""

    n: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def of(cls, samples: np.ndarray) -> "_Moments":
        mean = samples.mean(axis=0)
        return cls(len(samples), mean, ((samples - mean) ** 2).sum(axis=0))

    def merge(self, other: "_Moments") -> "_Moments":
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.n / n)
        m2 = self.m2 + other.m2 + delta**2 * (self.n * other.n / n)
        return _Moments(n, mean, m2)

    def stderr(self) -> np.ndarray:
        if self.n < 2:
            return np.full_like(self.mean, np.nan)
        return np.sqrt(np.maximum(self.m2, 0.0) / (self.n * (self.n - 1)))


def _blocks(n_traj: int, block_size: int) -> list[int]:
    full, rest = divmod(n_traj, block_size)
    return [block_size] * full + ([rest] if rest else [])


def _run_blocks(worker, sizes, workers: int):
    idx = list(range(len(sizes)))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(worker, idx, sizes))
    else:
        parts = [worker(i, n) for i, n in zip(idx, sizes)]
    total = parts[0]
    for p in parts[1:]:
        total = [a.merge(b) for a, b in zip(total, p)]
    return total


def telegraph_integrals(
    rng: np.random.Generator, n: int, gamma: float, delta: float, t_grid: np.ndarray
) -> np.ndarray:
    """Exact ``X(t) = int_0^t s(t') dt'`` at the grid times for ``n`` telegraph paths."""
    up_rate = gamma * (1.0 + delta)  # leaves s = +1
    down_rate = gamma * (1.0 - delta)
    s = np.where(rng.random(n) < (1.0 - delta) / 2.0, 1.0, -1.0)
    x = np.zeros(n)
    t_last = np.zeros(n)
    t_next = rng.exponential(1.0, n) / np.where(s > 0, up_rate, down_rate)
    out = np.empty((n, len(t_grid)))
    for k, t_k in enumerate(t_grid):
        while True:
            hit = np.flatnonzero(t_next <= t_k)
            if hit.size == 0:
                break
            sh = s[hit]
            x[hit] += sh * (t_next[hit] - t_last[hit])
            t_last[hit] = t_next[hit]
            sh = -sh
            s[hit] = sh
            t_next[hit] += rng.exponential(1.0, hit.size) / np.where(sh > 0, up_rate, down_rate)
        out[:, k] = x + s * (t_k - t_last)
    return out


def mc_dephasing_envelope(
    f: Sequence,
    b0: float,
    t_grid,
    n_traj: int,
    seed: int,
    block_size: int = DEFAULT_BLOCK,
    workers: int = 1,
) -> EnvelopeCurve:
    """Phase-integral estimator of the free-induction decay.

    Each path accumulates ``theta = b0 t + sum_n g_n X_n(t)`` exactly; the
    estimates are ``T_xx = <cos theta>``, ``T_xy = <sin theta>`` and the
    envelope ``<cos(theta - b0 t)>``.
    """
    f = FluctuatorSet(f)
    t = check_time_grid(t_grid)
    if n_traj < MIN_TRAJECTORIES:
        raise ValueError(f"n_traj must be >= {MIN_TRAJECTORIES}")

    def worker(block: int, n: int):
        rng = make_rng(seed, block)
        noise = np.zeros((n, len(t)))
        for fl in f:
            xs = telegraph_integrals(rng, n, fl.gamma, fl.delta, t)
            if fl.g:
                noise += fl.g * xs
        theta = b0 * t + noise
        return [_Moments.of(np.cos(noise)), _Moments.of(np.cos(theta)), _Moments.of(np.sin(theta))]

    env_m, xx_m, xy_m = _run_blocks(worker, _blocks(n_traj, block_size), workers)
    env = env_m.mean
    with np.errstate(divide="ignore"):
        relax = -np.log(np.abs(env))
    return EnvelopeCurve(
        times=t,
        envelope=env,
        relaxation=relax,
        zero_crossing_flags=crossing_flags(env),
        txx=xx_m.mean,
        txy=xy_m.mean,
        source="monte_carlo",
        envelope_stderr=env_m.stderr(),
        txx_stderr=xx_m.stderr(),
        txy_stderr=xy_m.stderr(),
    )


def sample_sliced_states(env: MarkovEnv, dt: float, n_steps: int, n_traj: int, rng) -> np.ndarray:
    """Environment states on a ``dt`` lattice using ``W = I + V dt`` per slice; shape ``(n_traj, n_steps)``."""
    w = np.eye(env.n_c) + env.dense_v() * dt
    if np.any(w < -1e-15) or np.any(w > 1 + 1e-15):
        raise ValueError(f"dt={dt} too coarse: slice transition matrix leaves [0, 1]")
    cum = np.cumsum(w, axis=0)
    cum[-1] = 1.0
    states = np.empty((n_traj, n_steps), dtype=np.int64)
    a = np.searchsorted(np.cumsum(env.p0), rng.random(n_traj), side="right").clip(max=env.n_c - 1)
    for k in range(n_steps):
        states[:, k] = a
        u = rng.random(n_traj)
        a = (u[:, None] >= cum[:, a].T).sum(axis=1).clip(max=env.n_c - 1)
    return states


@dataclass(frozen=True)
class MCCurve:
    times: np.ndarray
    mean: np.ndarray  # (len(times), d)
    stderr: np.ndarray
    n_traj: int
    dt: float


def _max_dt(q: QuantumSpec, env: MarkovEnv) -> float:
    hnorm = max(float(np.linalg.norm(h, 2)) for h in q.hamiltonians)
    rate = float(env.exit_rates().max(initial=0.0))
    scale = max(hnorm, rate)
    return np.inf if scale == 0 else 0.01 / scale


def mc_general(
    q: QuantumSpec,
    env: MarkovEnv,
    t_grid,
    dt: float,
    n_traj: int,
    seed: int,
    n0=None,
    pulses: Sequence[PulseEvent] = (),
    basis: GeneratorBasis | None = None,
    block_size: int = 2048,
    workers: int = 1,
) -> MCCurve:
    """Literal time-sliced product ``T(a_N) ... T(a_1) n(0)`` averaged over sampled paths.

    Every grid interval is cut into equal slices no longer than ``dt``; pulses
    are applied right after the state at their time has been recorded.
    Discretisation error is O(dt); see :func:`mc_general_richardson`.
    """
    t = check_time_grid(t_grid)
    if n_traj < MIN_TRAJECTORIES:
        raise ValueError(f"n_traj must be >= {MIN_TRAJECTORIES}")
    if q.n_c != env.n_c:
        raise ValueError("QuantumSpec and MarkovEnv have different state counts")
    if not dt <= _max_dt(q, env) * (1 + 1e-12):
        raise ValueError(f"dt={dt} violates dt <= 0.01 / max(|H|, exit rate) = {_max_dt(q, env):.3g}")
    basis = basis or make_generators(q.n_q)
    d = basis.dim
    if n0 is None:
        n0 = np.eye(d)[0]
    n0 = np.asarray(n0, dtype=float)
    pulse_maps = {float(p.time): dynamical_map(p.r, basis).matrix for p in pulses}
    marks = np.union1d(np.concatenate([[0.0], t]), list(pulse_maps))
    vmat = env.dense_v()
    cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    def slice_ops(h: float):
        if h not in cache:
            maps = np.array([dynamical_map(sla.expm(-1j * hh * h), basis).matrix for hh in q.hamiltonians])
            w = np.eye(env.n_c) + vmat * h
            cum = np.cumsum(w, axis=0)
            cum[-1] = 1.0
            cache[h] = (maps, cum)
        return cache[h]

    record = {float(x): i for i, x in enumerate(t)}

    def worker(block: int, n: int):
        rng = make_rng(seed, block)
        a = np.searchsorted(np.cumsum(env.p0), rng.random(n), side="right").clip(max=env.n_c - 1)
        vec = np.tile(n0, (n, 1))
        out = np.empty((len(t), n, d))
        for lo, hi in zip(marks[:-1], marks[1:]):
            if lo in record:
                out[record[lo]] = vec
            if lo in pulse_maps:
                vec = vec @ pulse_maps[lo].T
            steps = int(np.ceil((hi - lo) / dt - 1e-9))
            maps, cum = slice_ops((hi - lo) / steps)
            for _ in range(steps):
                vec = np.einsum("nij,nj->ni", maps[a], vec)
                a = (rng.random(n)[:, None] >= cum[:, a].T).sum(axis=1).clip(max=env.n_c - 1)
        last = float(marks[-1])
        if last in record:
            out[record[last]] = vec
        return [_Moments.of(out[k]) for k in range(len(t))]

    moments = _run_blocks(worker, _blocks(n_traj, block_size), workers)
    mean = np.array([m.mean for m in moments])
    err = np.array([m.stderr() for m in moments])
    return MCCurve(t, mean, err, n_traj, dt)


def mc_general_richardson(q, env, t_grid, dt, n_traj, seed, **kw) -> tuple[MCCurve, MCCurve, np.ndarray]:
    """Run at ``dt`` and ``dt/2`` with the same streams; return both and ``2 m(dt/2) - m(dt)``."""
    coarse = mc_general(q, env, t_grid, dt, n_traj, seed, **kw)
    fine = mc_general(q, env, t_grid, dt / 2, n_traj, seed, **kw)
    return coarse, fine, 2 * fine.mean - coarse.mean
