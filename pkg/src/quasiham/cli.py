"""Command-line front end: ``quasiham {run,phase-diagram,spectrum,mc} --config cfg.json``."""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .approximations import gaussian_relaxation_fluctuators, lorentzian_spectrum, redfield_rate
from .classical_env import FluctuatorSet, env_from_fluctuators
from .config import RunConfig, load_config
from .dephasing_exact import relaxation_many
from .errors import ConfigError, QuasiHamError, RoutingError
from .mc_oracle import mc_dephasing_envelope, mc_general
from .quasi_h import (
    PulseEvent,
    build_quasi_hamiltonian,
    dephasing_spec,
    evolve_curve,
    evolve_with_pulses,
    rotation,
)

_PULSES = {
    "pi_x": ([1, 0, 0], np.pi),
    "pi_y": ([0, 1, 0], np.pi),
    "pi_half_x": ([1, 0, 0], np.pi / 2),
    "pi_half_y": ([0, 1, 0], np.pi / 2),
}


def fmt(x) -> str:
    return format(float(x) + 0.0, ".17g")  # no "-0"


def write_csv(path: Path, columns: dict) -> None:
    names = list(columns)
    cols = [np.asarray(columns[n]) for n in names]
    lines = [",".join(names)]
    for row in zip(*cols):
        lines.append(",".join(str(bool(v)).lower() if isinstance(v, (bool, np.bool_)) else fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def check_routing(cfg: RunConfig, families) -> None:
    f = cfg.fluctuator_set()
    closed = [fam for fam in families if fam in ("exact", "gaussian", "redfield")]
    if closed and not f.unbiased:
        raise RoutingError(
            f"outputs {closed} use closed forms valid for unbiased fluctuators only; "
            "request 'engine' or 'mc' for delta != 0"
        )
    if closed and cfg.pulses:
        raise RoutingError(f"outputs {closed} describe free induction decay; pulses need 'engine' or 'mc'")
    if "mc" in families:
        if cfg.mc is None:
            raise RoutingError("'mc' output requested without an 'mc' config section")
        if cfg.pulses:
            if cfg.mc.dt is None:
                raise RoutingError("Monte Carlo with pulses uses the sliced estimator and needs mc.dt")
            if any(p.fraction is not None for p in cfg.pulses):
                raise RoutingError("Monte Carlo pulses must be given by absolute 'time'")
    if families and cfg.time is None:
        raise ConfigError("curve outputs need a 'time' section", ["time"])


def _pulse_events(cfg: RunConfig, t: float) -> list[PulseEvent]:
    events = []
    for p in cfg.pulses:
        tp = p.time if p.time is not None else p.fraction * t
        if 0 < tp < t:
            axis, angle = _PULSES[p.kind]
            events.append(PulseEvent(tp, rotation(axis, angle)))
    return sorted(events, key=lambda e: e.time)


def compute_curves(cfg: RunConfig, families, threads: int = 1) -> dict[str, dict]:
    """Columns for each requested curve family, keyed by family name."""
    check_routing(cfg, families)
    f = cfg.fluctuator_set()
    t = cfg.time.grid()
    out: dict[str, dict] = {}
    if "exact" in families:
        c = relaxation_many(f, cfg.b0, t)
        out["exact"] = {"t": t, "envelope_exact": c.envelope, "gamma_exact": c.relaxation,
                        "txx": c.txx, "txy": c.txy}
    if "engine" in families:
        env = env_from_fluctuators(f)
        hq = build_quasi_hamiltonian(dephasing_spec(f, cfg.b0), env)
        n0 = [1.0, 0.0, 0.0]
        if cfg.pulses:
            n = np.array([evolve_with_pulses(hq, env, n0, _pulse_events(cfg, tk), tk) for tk in t])
        else:
            n = evolve_curve(hq, env, n0, t)
        out["engine"] = {"t": t, "txx": n[:, 0], "txy": -n[:, 1]}
    if "gaussian" in families:
        out["gaussian"] = {"t": t, "envelope_gauss": np.exp(-gaussian_relaxation_fluctuators(f, t))}
    if "redfield" in families:
        out["redfield"] = {"t": t, "envelope_redfield": np.exp(-redfield_rate(f) * t)}
    if "mc" in families:
        mc = cfg.mc
        if cfg.pulses:
            env = env_from_fluctuators(f)
            pulses = _pulse_events(cfg, np.inf)
            curve = mc_general(dephasing_spec(f, cfg.b0), env, t, mc.dt, mc.n_traj, mc.seed,
                               pulses=pulses, block_size=mc.block_size, workers=threads)
            out["mc"] = {"t": t, "mc_mean": curve.mean[:, 0], "mc_stderr": curve.stderr[:, 0]}
        else:
            curve = mc_dephasing_envelope(f, cfg.b0, t, mc.n_traj, mc.seed,
                                          block_size=mc.block_size, workers=threads)
            out["mc"] = {"t": t, "mc_mean": curve.envelope, "mc_stderr": curve.envelope_stderr}
    return out


@dataclass(frozen=True)
class PhaseDiagram:
    g: np.ndarray  # coupling values (rows)
    t: np.ndarray  # times (columns)
    exact: np.ndarray
    gauss: np.ndarray
    redfield: np.ndarray
    gauss_valid: np.ndarray
    redfield_valid: np.ndarray
    exact_dead: np.ndarray


def phase_diagram(g_values, t_values, gamma: float = 1.0, threshold: float = 0.01,
                  dead_threshold: float = 0.01) -> PhaseDiagram:
    """Validity of the Gaussian and Redfield envelopes against the exact one on a (g, t) grid."""
    g_values = np.asarray(g_values, dtype=float)
    t_values = np.asarray(t_values, dtype=float)
    exact = np.empty((len(g_values), len(t_values)))
    gauss = np.empty_like(exact)
    red = np.empty_like(exact)
    for i, g in enumerate(g_values):
        fs = FluctuatorSet([(g, gamma)])
        exact[i] = relaxation_many(fs, 0.0, t_values).envelope
        gauss[i] = np.exp(-gaussian_relaxation_fluctuators(fs, t_values))
        red[i] = np.exp(-redfield_rate(fs) * t_values)
    return PhaseDiagram(
        g_values, t_values, exact, gauss, red,
        np.abs(gauss - exact) < threshold,
        np.abs(red - exact) < threshold,
        np.abs(exact) < dead_threshold,
    )


def _phase_diagram_from_cfg(cfg: RunConfig) -> PhaseDiagram:
    pd = cfg.phase_diagram
    if pd is None:
        raise ConfigError("phase-diagram needs a 'phase_diagram' section", ["phase_diagram"])
    g = pd.gamma * np.geomspace(*pd.g_over_gamma, pd.n_g)
    t = np.geomspace(*pd.t, pd.n_t) / pd.gamma
    return phase_diagram(g, t, pd.gamma, pd.threshold, pd.dead_threshold)


def _write_outputs(out_dir: Path, tables: dict[str, dict], cfg: RunConfig, command: str) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, cols in tables.items():
        p = out_dir / f"{name}.csv"
        write_csv(p, cols)
        paths.append(p)
    manifest = {
        "command": command,
        "config_sha256": cfg.sha256(),
        "config": cfg.model_dump(mode="json"),
        "versions": {
            "quasiham": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "seeds": {"mc": cfg.mc.seed} if cfg.mc is not None else {},
        "files": [{"name": p.name, "sha256": _sha256(p)} for p in paths],
    }
    mp = out_dir / "manifest.json"
    mp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return paths + [mp]


def _apply_seed(cfg: RunConfig, seed) -> RunConfig:
    if seed is None:
        return cfg
    if cfg.mc is None:
        return cfg
    return cfg.model_copy(update={"mc": cfg.mc.model_copy(update={"seed": seed})})


def run(config_path, out_dir, threads: int = 1, seed=None) -> list[Path]:
    cfg = _apply_seed(load_config(config_path), seed)
    tables = compute_curves(cfg, list(dict.fromkeys(cfg.outputs)), threads)
    return _write_outputs(Path(out_dir), tables, cfg, "run")


def run_mc(config_path, out_dir, threads: int = 1, seed=None) -> list[Path]:
    cfg = _apply_seed(load_config(config_path), seed)
    tables = compute_curves(cfg, ["mc"], threads)
    return _write_outputs(Path(out_dir), tables, cfg, "mc")


def run_phase_diagram(config_path, out_dir, threads: int = 1, seed=None) -> list[Path]:
    cfg = load_config(config_path)
    pd = _phase_diagram_from_cfg(cfg)
    gg, tt = np.meshgrid(pd.g, pd.t, indexing="ij")
    cols = {
        "g_over_gamma": gg.ravel() / cfg.phase_diagram.gamma, "t": tt.ravel(),
        "envelope_exact": pd.exact.ravel(), "envelope_gauss": pd.gauss.ravel(),
        "envelope_redfield": pd.redfield.ravel(),
        "gauss_valid": pd.gauss_valid.ravel(), "redfield_valid": pd.redfield_valid.ravel(),
        "exact_dead": pd.exact_dead.ravel(),
    }
    return _write_outputs(Path(out_dir), {"phase_diagram": cols}, cfg, "phase-diagram")


def run_spectrum(config_path, out_dir, threads: int = 1, seed=None) -> list[Path]:
    cfg = load_config(config_path)
    sc = cfg.spectrum
    if sc is None:
        raise ConfigError("spectrum needs a 'spectrum' section", ["spectrum"])
    w = sc.grid()
    cols = {"omega": w, "S_cl": lorentzian_spectrum(cfg.fluctuator_set(), w)}
    return _write_outputs(Path(out_dir), {"spectrum": cols}, cfg, "spectrum")


COMMANDS = {
    "run": run,
    "phase-diagram": run_phase_diagram,
    "spectrum": run_spectrum,
    "mc": run_mc,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quasiham", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out-dir", default=".", help="directory for CSV files and manifest.json")
        p.add_argument("--threads", type=int, default=1, help="worker threads for Monte Carlo blocks")
        p.add_argument("--seed", type=int, default=None, help="override mc.seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        files = COMMANDS[args.command](args.config, args.out_dir, max(1, args.threads), args.seed)
    except QuasiHamError as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, ConfigError):
            err["fields"] = exc.fields
        print(json.dumps(err), file=sys.stderr)
        return 2 if isinstance(exc, (ConfigError, RoutingError)) else 1
    for f in files:
        print(f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
