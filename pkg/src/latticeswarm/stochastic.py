"""Stochastic single-agent motion models and light-input programs.

Two walkers are provided: a persistent turning walker (PTW) whose speed and
angular velocity follow Ornstein-Uhlenbeck processes driven by a light input,
and a run-and-tumble Levy walker.  Agents do not interact, so a population
is just many independent walkers sharing one light program.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import List, Optional, Sequence

import numpy as np
from scipy.special import ndtri

SIGN_EPS = 1e-9


# --- parameters ---------------------------------------------------------------------

@dataclass(frozen=True)
class PTWParams:
    """Parameters of the PTW stochastic model (speeds in px/s, rates in 1/s)."""

    theta_v: float = 1.0
    mu_v: float = 50.0
    sigma_v: float = 10.0
    alpha_v: float = 0.0
    beta_v: float = 0.0
    theta_w: float = 1.0
    sigma_w: float = 0.5
    alpha_w: float = 0.0
    beta_w: float = 0.0
    gamma_v: float = 0.0
    gamma_w: float = 0.0

    def __post_init__(self):
        if not (self.theta_v > 0 and self.theta_w > 0):
            raise ValueError("theta_v and theta_w must be positive")
        if self.sigma_v < 0 or self.sigma_w < 0:
            raise ValueError("volatilities must be non-negative")

    @classmethod
    def names(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    def to_dict(self) -> dict:
        return {k: float(getattr(self, k)) for k in self.names()}

    @classmethod
    def from_cfg(cls, cfg) -> "PTWParams":
        return cls(**cfg.model_dump())


@dataclass(frozen=True)
class LevyParams:
    v: float = 50.0
    run: str = "exponential"       # exponential | power_law
    rate: float = 1.0              # lambda of the exponential run law
    exponent: float = 2.5          # pdf ~ tau^-exponent for tau >= tau_min
    tau_min: float = 0.1
    turn: str = "uniform"          # uniform | wrapped_gaussian
    turn_std: float = 1.0

    def __post_init__(self):
        if self.run not in ("exponential", "power_law"):
            raise ValueError(f"unknown run law {self.run!r}")
        if self.turn not in ("uniform", "wrapped_gaussian"):
            raise ValueError(f"unknown turn law {self.turn!r}")
        if min(self.v, self.rate, self.tau_min, self.turn_std) <= 0 or self.exponent <= 1:
            raise ValueError("Levy parameters must be positive (exponent > 1)")

    @classmethod
    def from_cfg(cls, cfg) -> "LevyParams":
        return cls(**cfg.model_dump())

    def run_duration(self, U):
        """Inverse-CDF draw of run durations from uniforms ``U`` in [0, 1)."""
        U = np.asarray(U, float)
        if self.run == "exponential":
            return -np.log1p(-U) / self.rate
        return self.tau_min * (1.0 - U) ** (-1.0 / (self.exponent - 1.0))

    def new_heading(self, heading, U):
        U = np.asarray(U, float)
        if self.turn == "uniform":
            return -math.pi + 2.0 * math.pi * U
        h = heading + self.turn_std * ndtri(np.clip(U, 1e-16, 1 - 1e-16))
        return (h + math.pi) % (2.0 * math.pi) - math.pi


# --- light programs -----------------------------------------------------------------

TEMPORAL = ("off", "constant", "step", "ramp", "switch")
SPATIAL = ("uniform", "half_half", "gradient_lateral", "gradient_center_light",
           "gradient_center_dark", "circle_light", "circle_dark")


@dataclass(frozen=True)
class LightProgram:
    """Light intensity (fraction of full brightness) as a function of (x, t).

    The value is the product of a temporal envelope and a spatial mask over
    an arena ``[0, W] x [0, H]`` px.  With ``quantize`` the output is rounded
    to 8-bit projector levels.
    """

    temporal: str = "off"
    intensity: float = 1.0
    on_at: float = 0.0
    off_at: float = math.inf
    t0: float = 0.0
    t1: float = 1.0
    period: float = 20.0
    duty: float = 0.5
    spatial: str = "uniform"
    center: tuple = (960.0, 540.0)
    radius: float = 300.0
    quantize: bool = True
    arena: tuple = (1920.0, 1080.0)

    def __post_init__(self):
        if self.temporal not in TEMPORAL:
            raise ValueError(f"unknown temporal program {self.temporal!r}")
        if self.spatial not in SPATIAL:
            raise ValueError(f"unknown spatial program {self.spatial!r}")
        if not 0 <= self.intensity <= 1:
            raise ValueError("intensity must lie in [0, 1]")
        if not 0 <= self.duty <= 1:
            raise ValueError("duty must lie in [0, 1]")
        if min(self.on_at, self.off_at, self.t0, self.t1) < 0:
            raise ValueError("program times must be non-negative")
        if self.temporal == "ramp" and self.t1 <= self.t0:
            raise ValueError("ramp needs t1 > t0")
        if self.temporal == "switch" and self.period <= 0:
            raise ValueError("switch needs a positive period")

    @classmethod
    def from_cfg(cls, cfg, arena=(1920.0, 1080.0)) -> "LightProgram":
        d = cfg.model_dump()
        d["center"] = tuple(d["center"])
        return cls(arena=tuple(arena), **d)

    @classmethod
    def switching(cls, t0=10.0, period=20.0, duty=0.5, intensity=1.0, **kw) -> "LightProgram":
        return cls(temporal="switch", t0=t0, period=period, duty=duty, intensity=intensity, **kw)

    def envelope(self, t: float) -> float:
        t = round(float(t), 9)  # keep breakpoints exact for t = k*dt
        I = self.intensity
        kind = self.temporal
        if kind == "off":
            return 0.0
        if kind == "constant":
            return I
        if kind == "step":
            return I if self.on_at <= t < self.off_at else 0.0
        if kind == "ramp":
            if t <= self.t0:
                return 0.0
            if t >= self.t1:
                return I
            return I * (t - self.t0) / (self.t1 - self.t0)
        # switch
        if t < self.t0:
            return 0.0
        phase = round((t - self.t0) % self.period, 9)
        if phase >= self.period:
            phase = 0.0
        return I if phase < self.duty * self.period else 0.0

    def mask(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        W, H = self.arena
        s = self.spatial
        if s == "uniform":
            return np.ones(len(x))
        lat = np.clip(x[:, 0], 0.0, W)
        if s == "half_half":
            return (lat >= 0.5 * W).astype(float)
        if s == "gradient_lateral":
            return lat / W
        if s in ("gradient_center_light", "gradient_center_dark"):
            g = np.abs(lat - 0.5 * W) / (0.5 * W)
            return 1.0 - g if s == "gradient_center_light" else g
        inside = np.hypot(x[:, 0] - self.center[0], x[:, 1] - self.center[1]) <= self.radius
        return inside.astype(float) if s == "circle_light" else (~inside).astype(float)


def light_at(program: LightProgram, x, t: float):
    """Intensity in [0, 1] at position(s) ``x`` and time ``t``."""
    scalar = np.ndim(x) == 1
    val = program.envelope(t) * program.mask(x)
    if program.quantize:
        val = np.round(val * 255.0) / 255.0
    return float(val[0]) if scalar else val


# --- PTW ----------------------------------------------------------------------------

@dataclass(frozen=True)
class KinematicAgent:
    position: np.ndarray
    heading: float
    v: float
    w: float

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, float).reshape(2))
        if not (np.all(np.isfinite(self.position)) and math.isfinite(self.heading)
                and math.isfinite(self.v) and math.isfinite(self.w)):
            raise ValueError("agent state must be finite")


def _ptw_update(pos, heading, v, w, P, u, u_dot, dt, z):
    """One Euler-Maruyama step for arrays of agents.

    P maps parameter names to arrays (or scalars); z has shape (n, 3): speed
    noise, angular noise and a spare normal whose sign breaks ties at w = 0.
    """
    up = np.maximum(u_dot, 0.0)
    down = np.minimum(u_dot, 0.0)
    sq = math.sqrt(dt)
    dv = (P["theta_v"] * (P["mu_v"] - v) + P["alpha_v"] * u + P["beta_v"] * up
          + P["gamma_v"] * down)
    sgn = np.where(np.abs(w) < SIGN_EPS, np.where(z[:, 2] >= 0, 1.0, -1.0), np.sign(w))
    dw = -P["theta_w"] * w + sgn * (P["alpha_w"] * u + P["beta_w"] * up + P["gamma_w"] * down)
    pos = pos + (v * dt)[:, None] * np.stack([np.cos(heading), np.sin(heading)], axis=1)
    heading = heading + w * dt
    v_new = np.maximum(v + dv * dt + P["sigma_v"] * sq * z[:, 0], 0.0)
    w_new = w + dw * dt + P["sigma_w"] * sq * z[:, 1]
    return pos, heading, v_new, w_new


def _param_arrays(plist: Sequence[PTWParams]) -> dict:
    return {k: np.array([getattr(p, k) for p in plist], float) for k in PTWParams.names()}


def ptw_step(agent: KinematicAgent, params: PTWParams, u: float, u_dot: float, dt: float,
             rng: np.random.Generator) -> KinematicAgent:
    """Euler-Maruyama step of the PTW model (speed clamped at zero)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    P = params.to_dict()
    z = rng.standard_normal((1, 3))
    pos, h, v, w = _ptw_update(agent.position[None], np.array([agent.heading]),
                               np.array([agent.v]), np.array([agent.w]), P,
                               np.array([u], float), np.array([u_dot], float), dt, z)
    return KinematicAgent(pos[0], float(h[0]), float(v[0]), float(w[0]))


def exact_ou_step(x, u, theta: float, mu: float, alpha: float, sigma: float, dT: float,
                  rng: np.random.Generator):
    """Exact transition of dx = [theta (mu - x) + alpha u] dt + sigma dW with u held."""
    if theta <= 0:
        raise ValueError("theta must be positive")
    x = np.asarray(x, float)
    a = math.exp(-theta * dT)
    sd = sigma * math.sqrt((1.0 - a * a) / (2.0 * theta))
    mean = a * x + mu * (1.0 - a) + alpha * (1.0 - a) / theta * np.asarray(u, float)
    return mean + sd * rng.standard_normal(np.shape(mean))


# --- Levy walker ----------------------------------------------------------------------

@dataclass(frozen=True)
class LevyAgent:
    position: np.ndarray
    heading: float
    remaining: float

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, float).reshape(2))


def levy_step(agent: LevyAgent, params: LevyParams, dt: float, rng: np.random.Generator) -> LevyAgent:
    """Hybrid run-and-tumble update: tumble when the run timer expires, then move."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    U = rng.random(2)
    h, rem = agent.heading, agent.remaining
    if rem <= 0:
        h = float(params.new_heading(h, U[0]))
        rem = float(params.run_duration(U[1]))
    pos = agent.position + params.v * dt * np.array([math.cos(h), math.sin(h)])
    return LevyAgent(pos, h, rem - dt)


# --- populations --------------------------------------------------------------------

def agent_rngs(seed: int, trial: int, n: int) -> List[np.random.Generator]:
    """Independent per-agent streams keyed by (seed, trial, agent)."""
    ss = np.random.SeedSequence([int(seed), int(trial)])
    return [np.random.default_rng(c) for c in ss.spawn(n)]


def _reflect(pos, heading, arena):
    """Specular reflection at the arena walls."""
    W, H = arena
    for k, hi in ((0, W), (1, H)):
        lo_hit = pos[:, k] < 0
        hi_hit = pos[:, k] > hi
        pos[lo_hit, k] = -pos[lo_hit, k]
        pos[hi_hit, k] = 2 * hi - pos[hi_hit, k]
        hit = lo_hit | hi_hit
        if hit.any():
            heading[hit] = (math.pi - heading[hit]) if k == 0 else -heading[hit]
    np.clip(pos[:, 0], 0, W, out=pos[:, 0])
    np.clip(pos[:, 1], 0, H, out=pos[:, 1])
    return pos, heading


@dataclass
class PopulationRun:
    """Sampled trajectories of a population, arrays indexed (agent, sample)."""

    times: np.ndarray
    positions: np.ndarray
    heading: np.ndarray
    v: np.ndarray
    w: np.ndarray
    u: np.ndarray
    u_dot: np.ndarray
    params: list = field(default_factory=list)
    sample_dt: float = 0.5

    @property
    def n_agents(self) -> int:
        return self.positions.shape[0]

    def to_csv(self, path) -> None:
        """Long format: t, agent_id, x, y, v, w, u."""
        with open(path, "w") as fh:
            fh.write("t,agent_id,x,y,v,w,u\n")
            for i in range(self.n_agents):
                for k in range(len(self.times)):
                    fh.write(",".join([repr(float(self.times[k])), str(i),
                                       repr(float(self.positions[i, k, 0])),
                                       repr(float(self.positions[i, k, 1])),
                                       repr(float(self.v[i, k])), repr(float(self.w[i, k])),
                                       repr(float(self.u[i, k]))]) + "\n")


def simulate_ptw_population(params: Sequence[PTWParams], program: LightProgram, t_max: float,
                            dt: float = 0.01, sample_dt: float = 0.5, seed: int = 0,
                            trial: int = 0, arena=(1920.0, 1080.0)) -> PopulationRun:
    """Simulate independent PTW agents under a shared light program.

    Each agent's input is the field sampled at its own position.  The input
    derivative is the backward difference of the sampled input, held over
    the following sampling interval.
    """
    n = len(params)
    nsub = int(round(sample_dt / dt))
    if abs(nsub * dt - sample_dt) > 1e-9 or nsub < 1:
        raise ValueError("sample_dt must be an integer multiple of dt")
    K = int(round(t_max / sample_dt))
    P = _param_arrays(params)
    rngs = agent_rngs(seed, trial, n)
    init = np.array([r.random(4) for r in rngs])
    pos = init[:, :2] * np.asarray(arena, float)
    heading = -math.pi + 2 * math.pi * init[:, 2]
    v = P["mu_v"].copy()
    w = np.zeros(n)

    X = np.empty((n, K + 1, 2))
    Hd = np.empty((n, K + 1))
    V = np.empty((n, K + 1))
    Wv = np.empty((n, K + 1))
    Us = np.empty((n, K + 1))
    Ud = np.empty((n, K + 1))
    u_prev = None
    for k in range(K + 1):
        t_k = k * sample_dt
        u_k = light_at(program, pos, t_k)
        ud = np.zeros(n) if u_prev is None else (u_k - u_prev) / sample_dt
        X[:, k], Hd[:, k], V[:, k], Wv[:, k], Us[:, k], Ud[:, k] = pos, heading, v, w, u_k, ud
        u_prev = u_k
        if k == K:
            break
        Z = np.stack([r.standard_normal((nsub, 3)) for r in rngs], axis=1)
        for s in range(nsub):
            t = (k * nsub + s) * dt
            u = u_k if s == 0 else light_at(program, pos, t)
            pos, heading, v, w = _ptw_update(pos, heading, v, w, P, u, ud, dt, Z[s])
            pos, heading = _reflect(pos, heading, arena)
    times = np.arange(K + 1) * sample_dt
    return PopulationRun(times, X, Hd, V, Wv, Us, Ud, list(params), sample_dt)


def simulate_levy_population(params: LevyParams, n_agents: int, t_max: float, dt: float = 0.01,
                             sample_dt: float = 0.5, seed: int = 0, trial: int = 0,
                             arena=(1920.0, 1080.0)) -> PopulationRun:
    nsub = int(round(sample_dt / dt))
    K = int(round(t_max / sample_dt))
    n = n_agents
    rngs = agent_rngs(seed, trial, n)
    init = np.array([r.random(4) for r in rngs])
    pos = init[:, :2] * np.asarray(arena, float)
    heading = -math.pi + 2 * math.pi * init[:, 2]
    rem = params.run_duration(init[:, 3])
    X = np.empty((n, K + 1, 2))
    Hd = np.empty((n, K + 1))
    for k in range(K + 1):
        X[:, k], Hd[:, k] = pos, heading
        if k == K:
            break
        Ublk = np.stack([r.random((nsub, 2)) for r in rngs], axis=1)
        for s in range(nsub):
            exp = rem <= 0
            if exp.any():
                heading[exp] = params.new_heading(heading[exp], Ublk[s, exp, 0])
                rem[exp] = params.run_duration(Ublk[s, exp, 1])
            pos = pos + params.v * dt * np.stack([np.cos(heading), np.sin(heading)], axis=1)
            rem = rem - dt
            pos, heading = _reflect(pos, heading, arena)
    times = np.arange(K + 1) * sample_dt
    dh = np.diff(Hd, axis=1)
    w = np.concatenate([(dh + math.pi) % (2 * math.pi) - math.pi, np.zeros((n, 1))], axis=1) / sample_dt
    zeros = np.zeros((n, K + 1))
    return PopulationRun(times, X, Hd, np.full((n, K + 1), params.v), w, zeros, zeros.copy(),
                         [params] * n, sample_dt)


def simulate_population(sc, trial: int = 0, params: Optional[Sequence[PTWParams]] = None) -> PopulationRun:
    """Run a ``kind: population`` scenario."""
    program = LightProgram.from_cfg(sc.light, sc.arena)
    if sc.model == "levy":
        return simulate_levy_population(LevyParams.from_cfg(sc.levy), sc.n_agents, sc.t_max,
                                        sc.dt, sc.sample_dt, sc.seed, trial, sc.arena)
    if params is None:
        params = [PTWParams.from_cfg(sc.ptw)] * sc.n_agents
    return simulate_ptw_population(params, program, sc.t_max, sc.dt, sc.sample_dt,
                                   sc.seed, trial, sc.arena)
