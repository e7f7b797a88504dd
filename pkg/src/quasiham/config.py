"""JSON run configuration.  Unknown keys are rejected everywhere."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .classical_env import Fluctuator, FluctuatorSet
from .errors import ConfigError

OUTPUT_FAMILIES = ("exact", "engine", "gaussian", "redfield", "mc")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class FluctuatorCfg(_Strict):
    g: float = Field(ge=0)
    gamma: float = Field(gt=0)
    delta: float = Field(default=0.0, gt=-1, lt=1)


class EnsembleCfg(_Strict):
    """``n`` fluctuators of equal coupling ``g0`` with log-spaced switching rates."""

    g0: float = Field(ge=0)
    gamma_min: float = Field(gt=0)
    gamma_max: float = Field(gt=0)
    n: int = Field(ge=1, le=100000)

    @model_validator(mode="after")
    def _order(self):
        if self.gamma_max < self.gamma_min:
            raise ValueError("gamma_max must be >= gamma_min")
        return self


class TimeCfg(_Strict):
    t_max: float = Field(gt=0)
    n_points: int = Field(ge=2)
    spacing: Literal["linear", "log"] = "linear"
    t_min: Optional[float] = Field(default=None, gt=0)

    def grid(self) -> np.ndarray:
        if self.spacing == "linear":
            return np.linspace(0.0, self.t_max, self.n_points)
        t_min = self.t_min if self.t_min is not None else self.t_max * 1e-4
        return np.geomspace(t_min, self.t_max, self.n_points)


class McCfg(_Strict):
    n_traj: int = Field(ge=100)
    seed: int = 0
    dt: Optional[float] = Field(default=None, gt=0)
    block_size: int = Field(default=8192, ge=1)


class PulseCfg(_Strict):
    kind: Literal["pi_x", "pi_y", "pi_half_x", "pi_half_y"]
    time: Optional[float] = Field(default=None, gt=0)
    fraction: Optional[float] = Field(default=None, gt=0, lt=1)

    @model_validator(mode="after")
    def _one_of(self):
        if (self.time is None) == (self.fraction is None):
            raise ValueError("give exactly one of 'time' or 'fraction'")
        return self


class PhaseDiagramCfg(_Strict):
    g_over_gamma: tuple[float, float] = (0.01, 100.0)
    t: tuple[float, float] = (0.01, 100.0)
    n_g: int = Field(default=32, ge=8)
    n_t: int = Field(default=32, ge=8)
    threshold: float = Field(default=0.01, gt=0, le=1)
    dead_threshold: float = Field(default=0.01, gt=0, lt=1)
    gamma: float = Field(default=1.0, gt=0)

    @field_validator("g_over_gamma", "t")
    @classmethod
    def _range(cls, v):
        if not 0 < v[0] < v[1]:
            raise ValueError("range must satisfy 0 < low < high")
        return v


class SpectrumCfg(_Strict):
    omega_min: float = Field(default=1e-4, ge=0)
    omega_max: float = Field(default=1e2, gt=0)
    n_points: int = Field(default=200, ge=2)
    spacing: Literal["linear", "log"] = "log"

    def grid(self) -> np.ndarray:
        if self.spacing == "log":
            if self.omega_min <= 0:
                raise ValueError("log-spaced omega grid needs omega_min > 0")
            return np.geomspace(self.omega_min, self.omega_max, self.n_points)
        return np.linspace(self.omega_min, self.omega_max, self.n_points)


class RunConfig(_Strict):
    b0: float = 0.0
    fluctuators: list[FluctuatorCfg] = []
    ensemble: Optional[EnsembleCfg] = None
    time: Optional[TimeCfg] = None
    mc: Optional[McCfg] = None
    pulses: list[PulseCfg] = []
    outputs: list[Literal["exact", "engine", "gaussian", "redfield", "mc"]] = ["exact"]
    phase_diagram: Optional[PhaseDiagramCfg] = None
    spectrum: Optional[SpectrumCfg] = None

    def fluctuator_set(self) -> FluctuatorSet:
        fl = [Fluctuator(c.g, c.gamma, c.delta) for c in self.fluctuators]
        if self.ensemble is not None:
            e = self.ensemble
            fl += [Fluctuator(e.g0, float(gm)) for gm in np.geomspace(e.gamma_min, e.gamma_max, e.n)]
        return FluctuatorSet(fl)

    def sha256(self) -> str:
        return hashlib.sha256(canonical_json(self.model_dump(mode="json")).encode()).hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def load_config(path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(raw)


def parse_config(raw) -> RunConfig:
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        fields = [".".join(str(p) for p in err["loc"]) for err in exc.errors()]
        msgs = "; ".join(f"{'.'.join(map(str, e['loc']))}: {e['msg']}" for e in exc.errors())
        raise ConfigError(f"invalid config: {msgs}", fields) from exc


def config_schema() -> dict:
    return RunConfig.model_json_schema()
