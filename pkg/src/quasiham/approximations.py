"""Noise spectra and the Gaussian / Redfield approximations to dephasing.

Spectra are classical and even: ``S(w) = S(-w)``.  For telegraph
fluctuators

    S(w) = (1/pi) sum_n g_n^2 * 2 gamma_n / (4 gamma_n^2 + w^2)

whose integral over the real line is ``sum_n g_n^2``.  The Gaussian
relaxation function is

    Gamma_G(t) = (t^2/2) int S(w) sinc^2(w t / 2) dw = 2 int_0^inf S(w) (1 - cos w t) / w^2 dw.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate, optimize

from .classical_env import FluctuatorSet
from .errors import FitFailureError, IntegrationError

QUAD_EPSABS = 1e-10
QUAD_FAIL_ABS = 1e-10
QUAD_FAIL_REL = 1e-6


@dataclass(frozen=True)
class SpectralDensity:
    """Either a Lorentzian sum (``fluctuators``) or a table of ``(omega, S)`` for omega >= 0.

    Tabulated spectra are interpolated linearly in ``log(omega)``, held at
    ``S(omega_ir)`` below the infrared roll-over and set to zero above the
    ultraviolet cutoff.  For Lorentzian sums the cutoffs are the corner
    frequencies ``2 gamma``; they only classify asymptotic regimes, the
    integrals run over the whole line.
    """

    fluctuators: FluctuatorSet | None = None
    omega: np.ndarray | None = None
    values: np.ndarray | None = None
    omega_ir: float | None = None
    omega_uv: float | None = None

    def __post_init__(self):
        if self.fluctuators is not None:
            f = FluctuatorSet(self.fluctuators)
            object.__setattr__(self, "fluctuators", f)
            if len(f):
                if self.omega_ir is None:
                    object.__setattr__(self, "omega_ir", 2 * float(f.gamma.min()))
                if self.omega_uv is None:
                    object.__setattr__(self, "omega_uv", 2 * float(f.gamma.max()))
            return
        w = np.asarray(self.omega, dtype=float)
        s = np.asarray(self.values, dtype=float)
        if w.ndim != 1 or w.shape != s.shape or len(w) < 2:
            raise ValueError("tabulated spectrum needs matching 1-D omega / value arrays")
        if np.any(w < 0) or np.any(np.diff(w) <= 0):
            raise ValueError("tabulated omega must be increasing and non-negative")
        if np.any(s < 0):
            raise ValueError("spectral density must be non-negative")
        object.__setattr__(self, "omega", w)
        object.__setattr__(self, "values", s)
        if self.omega_ir is None:
            object.__setattr__(self, "omega_ir", float(w[w > 0][0]))

    @classmethod
    def from_fluctuators(cls, f: Sequence) -> "SpectralDensity":
        return cls(fluctuators=FluctuatorSet(f))

    @classmethod
    def tabulated(cls, omega, values, omega_ir=None, omega_uv=None) -> "SpectralDensity":
        return cls(omega=omega, values=values, omega_ir=omega_ir, omega_uv=omega_uv)

    @property
    def is_lorentzian(self) -> bool:
        return self.fluctuators is not None

    def __call__(self, omega):
        omega = np.abs(np.asarray(omega, dtype=float))
        if self.is_lorentzian:
            return lorentzian_spectrum(self.fluctuators, omega)
        w = np.maximum(omega, self.omega_ir)
        out = np.interp(np.log(w), np.log(np.maximum(self.omega, 1e-300)), self.values)
        if self.omega_uv is not None:
            out = np.where(omega > self.omega_uv, 0.0, out)
        return out

    def support_end(self) -> float:
        """Upper end of the integration range (``inf`` for Lorentzian sums)."""
        if self.is_lorentzian:
            return np.inf
        if self.omega_uv is None:
            raise IntegrationError("tabulated spectrum without an ultraviolet cutoff is not integrable")
        return float(self.omega_uv)

    def total_power(self) -> float:
        """``int_{-inf}^{inf} S(w) dw``."""
        return 2.0 * _quad(self, 0.0, self.support_end())


def lorentzian_spectrum(f: Sequence, omega):
    f = FluctuatorSet(f)
    omega = np.asarray(omega, dtype=float)
    if len(f) == 0:
        return np.zeros_like(omega)
    g2, gam = f.g**2, f.gamma
    w2 = omega[..., None] ** 2
    return np.sum(g2 * 2 * gam / (4 * gam**2 + w2), axis=-1) / np.pi


def _quad(func, a, b, **kw) -> float:
    """scipy quad; fails only when the reported error estimate is unacceptable.

    QUADPACK warns about round-off whenever the requested tolerance sits below
    what double precision can deliver for tiny integrals, so the warning alone
    is not treated as failure.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(func, a, b, epsabs=kw.pop("epsabs", 1e-13), epsrel=1e-12, limit=2000, **kw)
    if not np.isfinite(val) or err > QUAD_FAIL_ABS + QUAD_FAIL_REL * abs(val):
        raise IntegrationError(f"quadrature did not converge: value {val:.6g}, error estimate {err:.3g}")
    return float(val)


def _scalar_spectrum(s: SpectralDensity):
    """Fast float -> float evaluator used inside quadrature loops."""
    if s.is_lorentzian:
        c = [(g * g * 2 * gm / np.pi, 4 * gm * gm) for g, gm in zip(s.fluctuators.g, s.fluctuators.gamma)]

        def spec(w):
            w2 = w * w
            return sum(a / (b + w2) for a, b in c)
        return spec
    return lambda w: float(s(w))


def _filtered(spec, t: float):
    half = 0.5 * t

    def integrand(w):
        # 2 S(w) (1 - cos wt) / w^2 written without cancellation near w = 0
        h = half * w
        sinc = math.sin(h) / h if h != 0 else 1.0
        return spec(w) * t * t * sinc * sinc
    return integrand


def gaussian_relaxation(s: SpectralDensity, t):
    """Gamma_G(t) by adaptive quadrature of the filtered spectrum.

    Beyond a break frequency the integrand is split into the non-oscillatory
    ``2 S / w^2`` piece and a Fourier integral handled by QUADPACK's QAWF.
    """
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts < 0):
        raise ValueError("t must be >= 0")
    end = s.support_end()
    spec = _scalar_spectrum(s)
    out = np.empty_like(ts)
    for k, tk in enumerate(ts):
        if tk == 0:
            out[k] = 0.0
            continue
        if s.is_lorentzian and len(s.fluctuators) == 0:
            out[k] = 0.0
            continue
        scale = s.omega_uv if s.omega_uv else 1.0
        brk = max(50.0 * scale, 50.0 / tk)
        if end <= brk:
            pts = _oscillation_breaks(0.0, end, tk)
            out[k] = _quad(_filtered(spec, tk), 0.0, end, points=pts, epsabs=QUAD_EPSABS * 1e-3)
            continue
        pts = _oscillation_breaks(0.0, brk, tk)
        head = _quad(_filtered(spec, tk), 0.0, brk, points=pts, epsabs=QUAD_EPSABS * 1e-3)
        smooth = _quad(lambda w: 2.0 * spec(w) / (w * w), brk, end, epsabs=QUAD_EPSABS * 1e-3)
        if np.isinf(end):
            osc = _quad(lambda w: 2.0 * spec(w) / (w * w), brk, np.inf,
                        weight="cos", wvar=tk, epsabs=QUAD_EPSABS * 1e-3)
        else:
            osc = _quad(lambda w: 2.0 * spec(w) / (w * w), brk, end,
                        weight="cos", wvar=tk, epsabs=QUAD_EPSABS * 1e-3)
        out[k] = head + smooth - osc
    return out if np.ndim(t) else float(out[0])


def _oscillation_breaks(a: float, b: float, t: float, max_points: int = 90):
    """Interior break points at the zeros of ``sin(w t / 2)``, thinned to ``max_points``."""
    period = 2 * np.pi / t
    n = int((b - a) / period)
    if n < 1:
        return None
    pts = a + period * np.arange(1, n + 1)
    pts = pts[pts < b]
    if len(pts) > max_points:
        pts = pts[:: int(np.ceil(len(pts) / max_points))]
    return pts


def gaussian_single_closed(g: float, gamma: float, t):
    """``(g^2 / 4 gamma^2) (exp(-2 gamma t) + 2 gamma t - 1)``."""
    x = 2.0 * gamma * np.asarray(t, dtype=float)
    small = x < 1e-3
    core = np.where(
        small,
        x**2 / 2 - x**3 / 6 + x**4 / 24 - x**5 / 120,
        np.expm1(-np.where(small, 0.0, x)) + x,
    )
    out = g * g / (4.0 * gamma * gamma) * core
    return out if np.ndim(t) else float(out)


def gaussian_relaxation_fluctuators(f: Sequence, t):
    """Sum of the single-fluctuator closed forms (Gaussian Gamma is additive)."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    for fl in FluctuatorSet(f):
        out = out + gaussian_single_closed(fl.g, fl.gamma, t)
    return out


@dataclass(frozen=True)
class AsymptoticEstimate:
    """``value`` is the order-of-magnitude branch estimate (nan when out of regime).

    ``exact_long_slope`` is ``pi S(0)``, the true long-time slope of Gamma_G,
    reported alongside the cruder ``S(0)`` used by the long branch.
    """

    value: float
    branch: str  # "short", "long" or "out_of_regime"
    exact_long_slope: float


def gaussian_asymptotics(s: SpectralDensity, t: float, factor: float = 10.0) -> AsymptoticEstimate:
    """Short branch ``t^2 int_0^uv S`` for ``t <= 1/(factor uv)``; long branch ``t S(0)`` for ``t >= factor/ir``."""
    if s.omega_uv is None or s.omega_ir is None:
        raise IntegrationError("asymptotic estimates need declared omega_ir and omega_uv")
    s0 = float(s(0.0))
    slope = np.pi * s0
    if t <= 1.0 / (factor * s.omega_uv):
        power = _quad(_scalar_spectrum(s), 0.0, s.support_end())
        return AsymptoticEstimate(t * t * power, "short", slope)
    if t >= factor / s.omega_ir:
        return AsymptoticEstimate(t * s0, "long", slope)
    return AsymptoticEstimate(float("nan"), "out_of_regime", slope)


def redfield_rate(f: Sequence) -> float:
    """Perturbative dephasing rate ``(1/2) sum g^2 / gamma``."""
    f = FluctuatorSet(f)
    return 0.5 * float(np.sum(f.g**2 / f.gamma)) if len(f) else 0.0


def redfield_envelope(f: Sequence, t):
    return np.exp(-redfield_rate(f) * np.asarray(t, dtype=float))


def gaussian_envelope(f: Sequence, t):
    return np.exp(-gaussian_relaxation_fluctuators(f, t))


@dataclass(frozen=True)
class RateFit:
    gammas: np.ndarray
    weights: np.ndarray
    residual: float  # relative RMS misfit of the forward model
    regularization: float

    def mass_fraction(self, lo: float, hi: float) -> float:
        sel = (self.gammas >= lo) & (self.gammas <= hi)
        total = self.weights.sum()
        return float(self.weights[sel].sum() / total) if total > 0 else 0.0


def _lorentz_kernel(omega, gammas, g0):
    return (g0 * g0 / np.pi) * 2 * gammas[None, :] / (4 * gammas[None, :] ** 2 + omega[:, None] ** 2)


def fit_rate_distribution(
    omega,
    spectrum,
    g0: float,
    gammas=None,
    noise_level: float = 1e-3,
    max_residual: float = 0.05,
) -> RateFit:
    """Recover fluctuator counts ``w_j >= 0`` on a rate grid from spectrum samples.

    Solves the Tikhonov-regularised NNLS problem with rows weighted by
    ``1/S``; the regularisation strength is the largest value on a log grid
    whose relative misfit stays within ``noise_level`` (discrepancy principle).
    """
    omega = np.asarray(omega, dtype=float)
    spectrum = np.asarray(spectrum, dtype=float)
    if omega.shape != spectrum.shape or omega.ndim != 1:
        raise ValueError("omega and spectrum must be matching 1-D arrays")
    if np.any(spectrum <= 0):
        raise ValueError("spectrum samples must be strictly positive")
    neg = omega < 0
    if np.any(neg):
        pos = dict(zip(np.round(omega[~neg], 12), spectrum[~neg]))
        for w, v in zip(-omega[neg], spectrum[neg]):
            ref = pos.get(round(w, 12))
            if ref is not None and not np.isclose(ref, v, rtol=1e-9):
                raise ValueError("spectrum samples are not even in omega")
        omega = np.abs(omega)
    if gammas is None:
        wpos = omega[omega > 0]
        lo = (wpos.min() if len(wpos) else 1.0) / 20.0
        hi = omega.max() * 5.0
        gammas = np.geomspace(lo, hi, 80)
    gammas = np.asarray(gammas, dtype=float)

    a = _lorentz_kernel(omega, gammas, g0) / spectrum[:, None]
    b = np.ones_like(spectrum)
    n_rows = len(b)
    anorm = np.linalg.norm(a, 2)
    best = None
    for lam in np.geomspace(1e-10, 1e-1, 37)[::-1] * anorm:
        aug = np.vstack([a, lam * np.eye(len(gammas))])
        w, _ = optimize.nnls(aug, np.concatenate([b, np.zeros(len(gammas))]), maxiter=50 * len(gammas))
        res = float(np.linalg.norm(a @ w - b) / np.sqrt(n_rows))
        if best is None or res < best[1]:
            best = (w, res, lam)
        if res <= noise_level:
            best = (w, res, lam)
            break
    w, res, lam = best
    if res > max_residual:
        raise FitFailureError(
            f"rate-distribution fit misfit {res:.3g} exceeds {max_residual}",
            diagnostics={"residual": res, "regularization": lam, "n_gammas": len(gammas)},
        )
    return RateFit(gammas, w, res, float(lam))
