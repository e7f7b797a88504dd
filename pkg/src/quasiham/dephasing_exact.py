"""Closed-form free-induction decay of a qubit dephased by unbiased telegraph fluctuators.

Each fluctuator ``(g, gamma)`` contributes a factor

    E_n(t) = exp(-gamma t) [cos(lam t) + (gamma / lam) sin(lam t)],  lam = sqrt(g^2 - gamma^2)

continued to cosh/sinh when ``gamma > g``.  The averaged map has
``T_xx = T_yy = cos(b0 t) E(t)``, ``T_xy = -T_yx = sin(b0 t) E(t)`` and
``T_zz = 1`` with ``E = prod_n E_n``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .classical_env import Fluctuator, FluctuatorSet
from .errors import UnsupportedBiasError

MARGINAL_EPS = 1e-4
# |g^2 - gamma^2| t^2 below this uses the Taylor branch
SERIES_CUTOFF = 1e-6


def _require_unbiased(f: FluctuatorSet):
    if not f.unbiased:
        raise UnsupportedBiasError(
            "closed forms cover unbiased fluctuators only; "
            "use quasi_h.build_quasi_hamiltonian + evolve for delta != 0"
        )


def _log_factor(g: float, gamma: float, t) -> tuple[np.ndarray, np.ndarray]:
    """``(log|E_n(t)|, sign E_n(t))`` evaluated without overflow."""
    t = np.asarray(t, dtype=float)
    kappa = (g - gamma) * (g + gamma)
    x = kappa * t * t
    logabs = np.empty_like(t)
    sign = np.ones_like(t)

    series = np.abs(x) < SERIES_CUTOFF
    if np.any(series):
        xs, ts = x[series], t[series]
        c = 1 - xs / 2 + xs**2 / 24 - xs**3 / 720
        s = 1 - xs / 6 + xs**2 / 120 - xs**3 / 5040
        logabs[series] = -gamma * ts + np.log(c + gamma * ts * s)

    strong = ~series & (x > 0)
    if np.any(strong):
        lam = np.sqrt(kappa)
        ts = t[strong]
        b = np.cos(lam * ts) + gamma * np.sin(lam * ts) / lam
        sign[strong] = np.sign(b)
        with np.errstate(divide="ignore"):
            logabs[strong] = -gamma * ts + np.log(np.abs(b))

    weak = ~series & (x < 0)
    if np.any(weak):
        mu = np.sqrt(-kappa)
        ts = t[weak]
        out = np.empty_like(ts)
        near = mu * ts < 1
        tn = ts[near]
        out[near] = -gamma * tn + np.log(np.cosh(mu * tn) + gamma * np.sinh(mu * tn) / mu)
        tf = ts[~near]
        slow = g * g / (gamma + mu)  # gamma - mu without cancellation
        out[~near] = -slow * tf + np.log(
            0.5 * (1 + gamma / mu) + 0.5 * (1 - gamma / mu) * np.exp(-2 * mu * tf)
        )
        logabs[weak] = out
    sign[logabs == -np.inf] = 0.0
    return logabs, sign


def envelope_factor(g: float, gamma: float, t):
    """Signed single-fluctuator envelope ``E_n(t)``; scalar in, scalar out."""
    logabs, sign = _log_factor(float(g), float(gamma), np.atleast_1d(t))
    out = sign * np.exp(logabs)
    return out if np.ndim(t) else float(out[0])


@dataclass(frozen=True)
class EnvelopeCurve:
    """Signed envelope ``E(t)``, relaxation ``Gamma = -ln|E|`` and provenance.

    ``zero_crossing_flags[i]`` marks points where ``E`` vanishes or changed
    sign since the previous grid point; ``Gamma`` is ``inf`` where ``E == 0``.
    """

    times: np.ndarray
    envelope: np.ndarray
    relaxation: np.ndarray
    zero_crossing_flags: np.ndarray
    txx: np.ndarray | None = None
    txy: np.ndarray | None = None
    source: str = "exact"
    envelope_stderr: np.ndarray | None = None
    txx_stderr: np.ndarray | None = None
    txy_stderr: np.ndarray | None = None


def crossing_flags(envelope) -> np.ndarray:
    e = np.asarray(envelope)
    s = np.sign(e)
    flags = s == 0
    flags[1:] |= s[1:] * s[:-1] < 0
    return flags


def check_time_grid(t_grid) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or np.any(t < 0) or np.any(np.diff(t) <= 0):
        raise ValueError("time grid must be a 1-D increasing array of non-negative times")
    return t


def relaxation_many(f: Sequence, b0: float, t_grid) -> EnvelopeCurve:
    """Exact envelope for any mixture of weak and strong unbiased fluctuators."""
    f = FluctuatorSet(f)
    _require_unbiased(f)
    t = check_time_grid(t_grid)
    logabs = np.zeros_like(t)
    sign = np.ones_like(t)
    for fl in f:
        la, sg = _log_factor(fl.g, fl.gamma, t)
        logabs += la
        sign *= sg
    env = sign * np.exp(logabs)
    return EnvelopeCurve(
        times=t,
        envelope=env,
        relaxation=-logabs,
        zero_crossing_flags=crossing_flags(env),
        txx=np.cos(b0 * t) * env,
        txy=np.sin(b0 * t) * env,
    )


@dataclass(frozen=True)
class RegimeSplit:
    weak: FluctuatorSet
    strong: FluctuatorSet
    marginal: FluctuatorSet


def split_regimes(f: Sequence, eps: float = MARGINAL_EPS) -> RegimeSplit:
    """Partition into weak (g < gamma), strong (g > gamma) and marginal (|g - gamma| <= eps gamma)."""
    weak, strong, marginal = [], [], []
    for fl in FluctuatorSet(f):
        if abs(fl.g - fl.gamma) <= eps * fl.gamma:
            marginal.append(fl)
        elif fl.g < fl.gamma:
            weak.append(fl)
        else:
            strong.append(fl)
    return RegimeSplit(FluctuatorSet(weak), FluctuatorSet(strong), FluctuatorSet(marginal))


@dataclass(frozen=True)
class T2Result:
    """Long-time dephasing law ``Gamma ~ linear_rate t + gaussian_coefficient t^2``.

    ``rate`` is ``1/T2`` when every fluctuator has ``g <= gamma`` and ``None``
    otherwise (no purely exponential regime).
    """

    rate: float | None
    strong: bool
    linear_rate: float
    gaussian_coefficient: float


def t2_rate(f: Sequence) -> T2Result:
    f = FluctuatorSet(f)
    _require_unbiased(f)
    g, gam = f.g, f.gamma
    weak = g <= gam
    mu = np.sqrt(np.clip(gam[weak] ** 2 - g[weak] ** 2, 0, None))
    weak_rate = float(np.sum(g[weak] ** 2 / (gam[weak] + mu)))
    if np.all(weak):
        return T2Result(weak_rate, False, weak_rate, 0.0)
    linear = weak_rate + float(np.sum(gam[~weak]))
    return T2Result(None, True, linear, 0.5 * float(np.sum(g[~weak] ** 2)))


def short_time_coefficients(f: Sequence) -> tuple[float, float]:
    """``(c2, c3)`` in ``Gamma(t) = c2 t^2 + c3 t^3 + O(t^4)``."""
    f = FluctuatorSet(f)
    _require_unbiased(f)
    g2 = f.g**2
    return 0.5 * float(np.sum(g2)), -float(np.sum(f.gamma * g2)) / 3.0


def crossover_times(f: Sequence) -> tuple[float, float]:
    """``t_s = sum g^2 / sum gamma g^2`` (end of the quadratic regime), ``t_l = 1 / min g``."""
    f = FluctuatorSet(f)
    _require_unbiased(f)
    g = f.g
    if len(f) == 0 or not np.any(g > 0):
        raise ValueError("crossover times need at least one fluctuator with g > 0")
    g2 = g**2
    t_s = float(np.sum(g2) / np.sum(f.gamma * g2))
    t_l = 1.0 / float(np.min(g[g > 0]))
    return t_s, t_l


def gaussian_longtime_law(f: Sequence, t):
    """Central-limit estimate ``Gamma = t sum gamma + t^2/2 sum g^2`` for strong fluctuators."""
    f = FluctuatorSet(f)
    if any(fl.g <= fl.gamma for fl in f):
        raise ValueError("the long-time Gaussian law applies to strong fluctuators (g > gamma) only")
    t = np.asarray(t, dtype=float)
    return t * float(np.sum(f.gamma)) + 0.5 * t * t * float(np.sum(f.g**2))


def amplitude_bound(f: Sequence, t):
    """Upper bound ``exp(-sum gamma t) prod (1 + gamma/lam)`` on |E| for strong fluctuators."""
    f = FluctuatorSet(f)
    lam = np.sqrt(f.g**2 - f.gamma**2)
    return np.exp(-np.sum(f.gamma) * np.asarray(t)) * np.prod(1 + f.gamma / lam)


def single_fluctuator(g: float, gamma: float) -> FluctuatorSet:
    return FluctuatorSet([Fluctuator(g, gamma)])
