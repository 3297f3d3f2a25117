"""Declarative scenario configuration.

A scenario file (YAML or JSON) describes either a swarm simulation
(``kind: swarm``) or a population of stochastic walkers (``kind: population``).
Unknown keys anywhere in the document are rejected.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .core import SwarmParams, default_link_radius


class ConfigError(ValueError):
    """Raised for malformed or inconsistent scenario files."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=False)


class ParamsCfg(_Strict):
    N: int = 100
    d: int = 2
    R: float = 1.0
    R_min: float = 0.6
    R_max: float = 1.1
    R_s: float = math.inf
    R_a: Optional[float] = None
    V_max: float = 5.0
    dt: float = 0.01
    L: int = 6
    T_w: float = 10.0

    def build(self) -> SwarmParams:
        return SwarmParams(**self.model_dump())


class DynamicsCfg(_Strict):
    kind: Literal["first-order", "second-order"] = "first-order"
    m: float = Field(1.0, gt=0)
    mu: float = Field(1.0, gt=0)
    sigma_a: float = Field(0.0, ge=0)
    saturate: bool = True


class InteractionCfg(_Strict):
    kind: Literal["lennard_jones", "power_law"] = "lennard_jones"
    a: float = 0.5
    b: float = 0.5
    c: float = 12.0
    g: float = 0.5


class ControllerCfg(_Strict):
    law: Literal["displacement", "adaptive", "spears", "radial", "none"] = "displacement"
    G_r: float = Field(15.0, ge=0)
    G_n: float = Field(8.0, ge=0)
    a: float = 0.15
    b: float = 0.15
    c: float = 5.0
    alpha: float = Field(3.0, gt=0)
    reset_on_L_switch: bool = True
    sigma_m: float = Field(0.0, ge=0)
    sigma_compass: float = Field(0.0, ge=0)
    G: float = Field(1.0, ge=0)
    F_max: float = Field(1.0, ge=0)
    mass: float = Field(1.0, gt=0)
    interaction: InteractionCfg = InteractionCfg()


class InitialCfg(_Strict):
    kind: Literal["disk", "lattice", "file"] = "disk"
    radius: Union[float, Literal["auto"]] = 2.0
    delta: float = Field(0.0, ge=0)
    knockouts: int = Field(0, ge=0)
    path: Optional[str] = None


class EventCfg(_Strict):
    kind: Literal["remove", "switch_L", "reset_gains"]
    t: float
    fraction: Optional[float] = None
    L: Optional[int] = None

    @model_validator(mode="after")
    def _check(self):
        if self.kind == "remove" and (self.fraction is None or not 0 <= self.fraction < 1):
            raise ValueError("remove events need 0 <= fraction < 1")
        if self.kind == "switch_L" and self.L not in (4, 6):
            raise ValueError("switch_L events need L in {4, 6}")
        return self


class ThresholdCfg(_Strict):
    e_theta: float = Field(0.2, gt=0)
    e_L: float = Field(0.3, gt=0)


class OutputCfg(_Strict):
    stride: int = Field(100, ge=1)
    series: bool = True
    snapshots: bool = True


class AnalysisCfg(_Strict):
    """Extra per-step diagnostics for radial-law runs."""
    lyapunov: bool = False
    final_rigidity: bool = True
    rigid_tol: float = 0.05


class SweepCfg(_Strict):
    path: str
    values: List[float]


class CampaignCfg(_Strict):
    trials: int = Field(30, ge=1)
    grid: Optional[Dict[str, List[float]]] = None
    sweep: Optional[SweepCfg] = None


class SwarmScenario(_Strict):
    kind: Literal["swarm"] = "swarm"
    name: str = "scenario"
    seed: int = 0
    t_max: float = Field(200.0, gt=0)
    stop_at_steady_state: bool = True
    params: ParamsCfg = ParamsCfg()
    dynamics: DynamicsCfg = DynamicsCfg()
    controller: ControllerCfg = ControllerCfg()
    initial: InitialCfg = InitialCfg()
    events: List[EventCfg] = []
    thresholds: ThresholdCfg = ThresholdCfg()
    output: OutputCfg = OutputCfg()
    analysis: AnalysisCfg = AnalysisCfg()
    campaign: CampaignCfg = CampaignCfg()

    @model_validator(mode="after")
    def _check(self):
        try:
            p = self.params.build()
        except ValueError as exc:
            raise ValueError(f"params: {exc}") from None
        for ev in self.events:
            if not 0 <= ev.t <= self.t_max:
                raise ValueError(f"event time {ev.t} outside [0, t_max={self.t_max}]")
        law = self.controller.law
        if law in ("displacement", "adaptive", "spears") and p.d != 2:
            raise ValueError(f"controller {law!r} requires d = 2")
        if self.initial.kind == "lattice" and p.R_a is None:
            raise ValueError("lattice initial conditions need params.R_a")
        if self.initial.kind == "file" and not self.initial.path:
            raise ValueError("initial.kind = file needs initial.path")
        return self


class PTWCfg(_Strict):
    theta_v: float = Field(1.0, gt=0)
    mu_v: float = 50.0
    sigma_v: float = Field(10.0, ge=0)
    alpha_v: float = 0.0
    beta_v: float = 0.0
    theta_w: float = Field(1.0, gt=0)
    sigma_w: float = Field(0.5, ge=0)
    alpha_w: float = 0.0
    beta_w: float = 0.0
    gamma_v: float = 0.0
    gamma_w: float = 0.0


class LevyCfg(_Strict):
    v: float = Field(50.0, gt=0)
    run: Literal["exponential", "power_law"] = "exponential"
    rate: float = Field(1.0, gt=0)
    exponent: float = Field(2.5, gt=1)
    tau_min: float = Field(0.1, gt=0)
    turn: Literal["uniform", "wrapped_gaussian"] = "uniform"
    turn_std: float = Field(1.0, gt=0)


class LightCfg(_Strict):
    temporal: Literal["off", "constant", "step", "ramp", "switch"] = "off"
    intensity: float = Field(1.0, ge=0, le=1)
    on_at: float = 0.0
    off_at: float = math.inf
    t0: float = 0.0
    t1: float = 1.0
    period: float = 20.0
    duty: float = Field(0.5, ge=0, le=1)
    spatial: Literal["uniform", "half_half", "gradient_lateral", "gradient_center_light",
                     "gradient_center_dark", "circle_light", "circle_dark"] = "uniform"
    center: Tuple[float, float] = (960.0, 540.0)
    radius: float = 300.0
    quantize: bool = True


class IdentificationCfg(_Strict):
    angular: Literal["signed", "abs"] = "signed"
    min_duration: float = 5.0
    window: int = 3
    outlier_m: float = Field(5.0, gt=0)
    derivative: Literal["backward", "central"] = "backward"
    source: Literal["kinematics", "positions"] = "kinematics"


class PopulationScenario(_Strict):
    kind: Literal["population"]
    name: str = "population"
    seed: int = 0
    model: Literal["ptw", "levy"] = "ptw"
    n_agents: int = Field(100, ge=1)
    t_max: float = Field(180.0, gt=0)
    dt: float = Field(0.01, gt=0)
    sample_dt: float = Field(0.5, gt=0)
    arena: Tuple[float, float] = (1920.0, 1080.0)
    ptw: PTWCfg = PTWCfg()
    levy: LevyCfg = LevyCfg()
    light: LightCfg = LightCfg()
    identification: IdentificationCfg = IdentificationCfg()
    campaign: CampaignCfg = CampaignCfg(trials=1)

    @model_validator(mode="after")
    def _check(self):
        ratio = self.sample_dt / self.dt
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("sample_dt must be an integer multiple of dt")
        return self


Scenario = Union[SwarmScenario, PopulationScenario]


# --- loading, overrides, hashing ------------------------------------------------

def _parse_value(text: str):
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError:
        return text


def apply_overrides(doc: dict, overrides) -> dict:
    """Apply ``dotted.path=value`` strings to a raw config mapping."""
    doc = copy.deepcopy(doc)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, val = item.split("=", 1)
        set_path(doc, key.strip(), _parse_value(val))
    return doc


def set_path(doc: dict, path: str, value) -> None:
    parts = path.split(".")
    cur = doc
    for p in parts[:-1]:
        nxt = cur.get(p)
        if nxt is None:
            nxt = cur[p] = {}
        if not isinstance(nxt, dict):
            raise ConfigError(f"cannot descend into {p!r} of {path!r}")
        cur = nxt
    cur[parts[-1]] = value


def get_path(doc: dict, path: str):
    cur = doc
    for p in path.split("."):
        if not isinstance(cur, dict) or p not in cur:
            raise ConfigError(f"path {path!r} does not resolve")
        cur = cur[p]
    return cur


def parse_scenario(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ConfigError("scenario must be a mapping")
    kind = doc.get("kind", "swarm")
    model = PopulationScenario if kind == "population" else SwarmScenario
    try:
        return model.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None


def load_raw(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return doc or {}


def load_scenario(path, overrides=()) -> Scenario:
    return parse_scenario(apply_overrides(load_raw(path), overrides))


def scenario_dict(sc: Scenario) -> dict:
    return sc.model_dump(mode="json")


def config_hash(sc: Scenario) -> str:
    blob = json.dumps(scenario_dict(sc), sort_keys=True, allow_nan=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def resolve_path(sc: Scenario, path: str):
    """Check that ``path`` names a field of the scenario schema; return current value."""
    return get_path(scenario_dict(sc), path)


def with_values(sc: Scenario, **paths) -> Scenario:
    """Copy of ``sc`` with dotted-path fields replaced (keys use ``__`` for dots)."""
    doc = scenario_dict(sc)
    for k, v in paths.items():
        p = k.replace("__", ".")
        resolve_path(sc, p)
        set_path(doc, p, v)
    return parse_scenario(doc)


def with_path(sc: Scenario, path: str, value) -> Scenario:
    doc = scenario_dict(sc)
    resolve_path(sc, path)
    set_path(doc, path, value)
    return parse_scenario(doc)


def json_schema() -> dict:
    return {"swarm": SwarmScenario.model_json_schema(),
            "population": PopulationScenario.model_json_schema()}


def initial_radius(sc: SwarmScenario) -> float:
    r = sc.initial.radius
    if r == "auto":
        return math.sqrt(sc.params.N / 25.0)
    return float(r)
