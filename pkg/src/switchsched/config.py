"""Experiment configuration files (TOML), validated with pydantic."""
from __future__ import annotations

import sys
from importlib import resources
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .core import ArrivalProcess, SwitchConfig

Matrix = list[list[float]]
PRESETS = ("table1", "table2", "figure1", "figure2")


class ConfigError(ValueError):
    pass


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SwitchSection(Strict):
    n: int = 2
    costs: Union[float, Matrix] = 1.0

    @field_validator("n")
    @classmethod
    def _n(cls, v):
        if v < 2:
            raise ValueError("n must be >= 2")
        return v


class ArrivalSection(Strict):
    kind: Literal["bernoulli", "pmf"] = "bernoulli"
    rates: Optional[Union[float, Matrix]] = None
    pmf: Optional[list[list[list[float]]]] = None

    @model_validator(mode="after")
    def _need_data(self):
        if self.kind == "bernoulli" and self.pmf is not None:
            raise ValueError("pmf given for Bernoulli arrivals")
        if self.kind == "pmf" and self.pmf is None:
            raise ValueError("kind = 'pmf' needs a pmf array of shape n x n x (A_max+1)")
        return self


class SimulationSection(Strict):
    replications: int = 100
    horizon: Optional[int] = None
    warmup: Optional[int] = None
    beta: Optional[float] = None
    q0: Optional[Matrix] = None


class SweepSection(Strict):
    param: Literal["lambda", "k"]
    values: list[float]

    @field_validator("values")
    @classmethod
    def _nonempty(cls, v):
        if not v:
            raise ValueError("sweep values must be nonempty")
        return v


class SolveSection(Strict):
    beta: float = 0.95
    q_max: Optional[int] = None
    max_k: Optional[int] = None
    tol: Optional[float] = None
    eps_target: Optional[float] = None
    exact: bool = False
    keep: list[int] = []


class HTSection(Strict):
    nu: Optional[Matrix] = None
    eps: list[float] = [0.2, 0.1, 0.05]
    replications: int = 0
    policy: str = "c-maxweight"
    warmup: Optional[int] = None
    horizon: Optional[int] = None
    ssc_sample_every: int = 0


class ExperimentConfig(Strict):
    id: str
    mode: Literal["average", "discounted", "solve", "heavy-traffic"]
    seed: int = 0
    out: Optional[str] = None
    switch: SwitchSection = SwitchSection()
    arrivals: ArrivalSection = ArrivalSection()
    policies: list[str] = []
    baseline: Optional[str] = None
    reference_gaps: Optional[list[float]] = None
    simulation: SimulationSection = SimulationSection()
    sweep: Optional[SweepSection] = None
    solve: SolveSection = SolveSection()
    ht: HTSection = HTSection()

    @model_validator(mode="after")
    def _consistent(self):
        if self.mode in ("average", "discounted"):
            if not self.policies:
                raise ValueError("policies: at least one policy is required for simulation modes")
            if self.baseline is not None and self.baseline not in self.policies:
                raise ValueError("baseline must be one of the listed policies")
            if self.mode == "discounted" and self.simulation.beta is None:
                raise ValueError("simulation.beta is required in discounted mode")
        if self.mode != "heavy-traffic" and self.arrivals.rates is None and self.arrivals.pmf is None \
                and not (self.sweep and self.sweep.param == "lambda"):
            raise ValueError("arrivals: give rates (or pmf), or sweep over lambda")
        return self

    def switch_config(self, rate_override: float | None = None) -> SwitchConfig:
        n = self.switch.n
        c = np.broadcast_to(np.asarray(self.switch.costs, float), (n, n)).copy()
        if self.arrivals.kind == "pmf":
            arr = ArrivalProcess(np.asarray(self.arrivals.pmf, float))
        else:
            rates = rate_override if rate_override is not None else self.arrivals.rates
            arr = ArrivalProcess.bernoulli(np.broadcast_to(np.asarray(rates, float), (n, n)).copy())
        return SwitchConfig(n, c, arr)


def _format_validation(err: ValidationError, source: str) -> str:
    lines = [f"{source}: invalid configuration"]
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"  {loc}: {e['msg']}")
    return "\n".join(lines)


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: TOML syntax error: {exc}") from exc
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc, source)) from exc


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from exc
    return parse_config(text, str(p))


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return resources.files("switchsched").joinpath("presets", f"{name}.toml").read_text()


def load_preset(name: str) -> ExperimentConfig:
    return parse_config(preset_text(name), f"preset {name}")
