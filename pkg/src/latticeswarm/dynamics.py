"""Agent motion models and the swarm simulator."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from . import _kernels as K
from .control import (AdaptiveState, InteractionFn, checkerboard_spins)
from .core import SwarmParams, SwarmState, sample_disk_initial, read_state_csv
from .metrics import MetricSeries, Thresholds, convergence_times, tuning_cost
from .rigidity import (framework_from_positions, generate_rigid_lattice,
                       is_infinitesimally_rigid, lyapunov, perturb)
from .scenario import SwarmScenario, initial_radius


class NonFiniteControlError(FloatingPointError):
    def __init__(self, agent: int):
        super().__init__(f"non-finite control input for agent {agent}")
        self.agent = agent


@dataclass(frozen=True)
class DynamicsSpec:
    kind: str = "first-order"
    m: float = 1.0
    mu: float = 1.0
    sigma_a: float = 0.0
    saturate: bool = True

    def __post_init__(self):
        if self.kind not in ("first-order", "second-order"):
            raise ValueError(f"unknown dynamics {self.kind!r}")
        if self.kind == "second-order" and (self.m <= 0 or self.mu <= 0):
            raise ValueError("m and mu must be positive")
        if self.sigma_a < 0:
            raise ValueError("sigma_a must be non-negative")


def _check_finite(u):
    bad = ~np.all(np.isfinite(u), axis=1)
    if bad.any():
        raise NonFiniteControlError(int(np.flatnonzero(bad)[0]))


def _saturate(v, V_max):
    sp = np.sqrt(np.sum(v * v, axis=1, keepdims=True))
    scale = np.where(sp > V_max, V_max / np.where(sp > 0, sp, 1.0), 1.0)
    return v * scale


def first_order_velocity(u, spec: DynamicsSpec, params: SwarmParams, rng=None):
    """Velocity actually applied: input plus actuation noise, then saturation.

    The noise is scaled so that the displacement it produces over one step is
    ``sigma_a * sqrt(dt) * N(0, I)``.
    """
    _check_finite(u)
    v = np.array(u, dtype=float)
    if spec.sigma_a > 0:
        v = v + spec.sigma_a / math.sqrt(params.dt) * rng.standard_normal(v.shape)
    if spec.saturate:
        v = _saturate(v, params.V_max)
    return v


def step_first_order(state: SwarmState, controls, spec: DynamicsSpec, params: SwarmParams,
                     rng: Optional[np.random.Generator] = None) -> SwarmState:
    v = first_order_velocity(np.asarray(controls, float), spec, params, rng)
    return state.evolve(state.positions + params.dt * v, dt=params.dt)


def second_order_update(x, v, u, spec: DynamicsSpec, params: SwarmParams, rng=None):
    _check_finite(u)
    v = v + params.dt * (u - spec.mu * v) / spec.m
    if spec.sigma_a > 0:
        v = v + spec.sigma_a * math.sqrt(params.dt) / spec.m * rng.standard_normal(v.shape)
    if spec.saturate:
        v = _saturate(v, params.V_max)
    return x + params.dt * v, v


def step_second_order(state: SwarmState, forces, spec: DynamicsSpec, params: SwarmParams,
                      rng: Optional[np.random.Generator] = None) -> SwarmState:
    """Semi-implicit Euler: velocity first, then position with the new velocity."""
    if state.velocities is None:
        raise ValueError("second-order step needs velocities")
    x, v = second_order_update(state.positions, state.velocities, np.asarray(forces, float),
                               spec, params, rng)
    return state.evolve(x, velocities=v, dt=params.dt)


# --- simulation -------------------------------------------------------------------

@dataclass
class Trajectory:
    """Recorded run: per-step metric series, strided snapshots and an event log."""

    times: np.ndarray
    series: Dict[str, np.ndarray]
    snapshots: List[SwarmState]
    events: List[dict]
    final: SwarmState
    params: SwarmParams
    t_ss: Optional[float] = None
    summary: Dict[str, object] = field(default_factory=dict)

    @property
    def states(self):
        return self.snapshots

    def metric_series(self) -> MetricSeries:
        s = self.series
        return MetricSeries(self.times, s["e_theta"], s["e_L"], s["N"], s.get("e"), s.get("Gn_mean"))

    def positions_csv(self, path) -> None:
        """Long format: t, agent_id, x, y[, z]."""
        d = self.final.d
        with open(path, "w") as fh:
            fh.write(",".join(["t", "agent_id"] + ["x", "y", "z"][:d]) + "\n")
            for st in self.snapshots:
                for k in range(st.N):
                    fh.write(",".join([repr(float(st.t)), str(int(st.ids[k]))]
                                      + [repr(float(v)) for v in st.positions[k]]) + "\n")

    def series_csv(self, path) -> None:
        cols = [c for c in ("e_theta", "e_L", "N", "e", "Gn_mean", "V", "d_min", "u_sum",
                                  "links_changed")
                if c in self.series]
        with open(path, "w") as fh:
            fh.write(",".join(["t"] + cols) + "\n")
            for k in range(len(self.times)):
                row = [repr(float(self.times[k]))]
                for c in cols:
                    v = self.series[c][k]
                    row.append(str(int(v)) if c in ("N", "links_changed") else repr(float(v)))
                fh.write(",".join(row) + "\n")


def trial_rng(base_seed: int, trial: int = 0) -> np.random.Generator:
    """Generator for one trial, a pure function of (base seed, trial index)."""
    return np.random.default_rng(np.random.SeedSequence([int(base_seed), int(trial)]))


def initial_state(sc: SwarmScenario, params: SwarmParams, rng: np.random.Generator):
    """Initial state and, for lattice starts, the unperturbed reference lattice."""
    ini = sc.initial
    if ini.kind == "disk":
        st = sample_disk_initial(params.N, initial_radius(sc), rng, d=params.d)
        return st, None
    if ini.kind == "file":
        st = read_state_csv(ini.path)
        return SwarmState(st.positions), None
    ref = generate_rigid_lattice(params.N, params.d, params.R, rng, knockouts=ini.knockouts)
    return SwarmState(perturb(ref, ini.delta, rng)), ref


def _interaction(sc: SwarmScenario, params: SwarmParams) -> InteractionFn:
    c = sc.controller.interaction
    R_a = params.R_a if params.R_a is not None else params.R_max
    return InteractionFn(c.kind, a=c.a, b=c.b, c=c.c, g=c.g, R=params.R, R_a=R_a)


_EMPTY2 = np.zeros((0, 0))
_EMPTY1 = np.zeros(0)


def simulate(sc: SwarmScenario, trial: int = 0, record_series: bool = True) -> Trajectory:
    """Run one trial of a swarm scenario.

    Randomness (initial condition, noise, removal choices) comes from
    ``trial_rng(sc.seed, trial)`` so a trial is reproducible in isolation.
    """
    params = sc.params.build()
    rng = trial_rng(sc.seed, trial)
    state, ref = initial_state(sc, params, rng)
    x = np.array(state.positions)
    ids = np.array(state.ids)
    dyn = DynamicsSpec(**sc.dynamics.model_dump())
    v = np.zeros_like(x) if dyn.kind == "second-order" else None
    ctl = sc.controller
    law = ctl.law
    N0 = params.N
    Gr = np.full(N0, ctl.G_r)
    Gn = np.full(N0, ctl.G_n)
    adaptive = AdaptiveState.zeros(N0, ctl.alpha, sc.thresholds.e_theta) if law == "adaptive" else None
    spins = checkerboard_spins(N0)
    fint = _interaction(sc, params) if law == "radial" else None
    link_hi = params.R_a if params.R_a is not None else params.R_max
    planar_metrics = params.d == 2 and law != "radial"
    thr = Thresholds(sc.thresholds.e_theta, sc.thresholds.e_L)
    x_c_star = (ref.mean(axis=0) if ref is not None else x.mean(axis=0))
    track_V = law == "radial" and sc.analysis.lyapunov

    dt = params.dt
    n_steps = int(round(sc.t_max / dt))
    ev_by_step: Dict[int, list] = {}
    for ev in sorted(sc.events, key=lambda e: e.t):
        ev_by_step.setdefault(int(round(ev.t / dt)), []).append(ev)
    last_event_step = max(ev_by_step) if ev_by_step else -1
    W = params.window_steps

    cap = n_steps + 1
    e_th = np.full(cap, np.nan)
    e_L = np.full(cap, np.nan)
    Nser = np.zeros(cap, dtype=int)
    e_ser = np.full(cap, np.nan)
    gn_ser = np.full(cap, np.nan)
    V_ser = np.full(cap, np.nan) if track_V else None
    dmin_ser = np.full(cap, np.nan) if law == "radial" else None
    usum_ser = np.full(cap, np.nan) if law == "radial" else None
    lchg = np.zeros(cap, dtype=bool) if track_V else None
    prev_mask = None

    snapshots: List[SwarmState] = []
    log: List[dict] = []
    t_ss = None
    k_end = n_steps
    stride = sc.output.stride
    stopped_early = False

    for k in range(n_steps + 1):
        t = k * dt
        for ev in ev_by_step.get(k, ()):
            entry = {"t": t, "kind": ev.kind}
            if ev.kind == "remove":
                n = len(x)
                n_rm = int(math.floor(ev.fraction * n + 1e-9))
                keep = np.sort(rng.choice(n, n - n_rm, replace=False))
                x, ids, Gr, Gn, spins = x[keep], ids[keep], Gr[keep], Gn[keep], spins[keep]
                if v is not None:
                    v = v[keep]
                if adaptive is not None:
                    adaptive = adaptive.subset(keep)
                entry.update(removed=int(n_rm), remaining=int(len(x)))
            elif ev.kind == "switch_L":
                params = params.with_(L=ev.L)
                entry["L"] = ev.L
                if adaptive is not None and ctl.reset_on_L_switch:
                    adaptive = adaptive.reset()
            elif ev.kind == "reset_gains":
                if adaptive is not None:
                    adaptive = adaptive.reset()
            log.append(entry)

        n = len(x)
        mean_err = None
        if law in ("displacement", "adaptive"):
            gn = adaptive.G_n if adaptive is not None else Gn
            dn = _EMPTY2
            an = _EMPTY2
            cp = _EMPTY1
            if ctl.sigma_m > 0:
                dn = ctl.sigma_m * rng.standard_normal((n, n))
                an = ctl.sigma_m * math.pi / params.L * rng.standard_normal((n, n))
            if ctl.sigma_compass > 0:
                cp = ctl.sigma_compass * rng.standard_normal(n)
            u, phi, nl, deg, mean_err = K.displacement_step(
                x, params.R_s, params.R_min, params.R_max, params.L, Gr, np.asarray(gn, float),
                ctl.a, ctl.b, ctl.c, dn, an, cp)
        elif law == "spears":
            u = K.spears_step(x, params.R_s, params.R, params.L, ctl.G, ctl.F_max, ctl.mass, spins)
        elif law == "radial":
            kind = 0 if fint.kind == "lennard_jones" else 1
            p = (fint.a, fint.b, fint.c) if kind == 0 else (fint.g, fint.R, fint.R_a)
            u, emax, dmin, coincide = K.radial_step(x, params.R_s, kind, *p, params.R_min,
                                                    link_hi, params.R)
            if coincide:
                raise FloatingPointError(f"agents coincide at t={t} under a singular law")
            e_ser[k] = emax if emax >= 0 else np.nan
            dmin_ser[k] = dmin
            usum_ser[k] = float(np.linalg.norm(u.sum(axis=0)))
        else:
            u = np.zeros_like(x)

        if planar_metrics:
            if law not in ("displacement", "adaptive"):
                phi, nl, deg, mean_err = K.link_data(x, params.R_min, params.R_max, params.L)
            m = nl
            e_th[k] = (K.circular_pair_sum(params.L * phi[:m]) / (math.pi * (m * m - 2 * m))
                       if m > 2 else 0.0)
            e_L[k] = float(np.mean(np.abs(deg - params.L))) / params.L
        Nser[k] = n
        if adaptive is not None:
            gn_ser[k] = float(np.mean(adaptive.G_n))
        if track_V:
            V_ser[k] = lyapunov(x, x_c_star, fint, params.R, link_hi, params.R_min)
            d2 = np.sum((x[:, None] - x[None]) ** 2, axis=-1)
            mask = d2 <= link_hi * link_hi
            lchg[k] = prev_mask is not None and bool(np.any(mask != prev_mask))
            prev_mask = mask

        if k % stride == 0 or k == n_steps:
            snapshots.append(SwarmState(x.copy(), t=t, velocities=None if v is None else v.copy(),
                                        step=k, ids=ids))

        if planar_metrics and t_ss is None and k >= W and k - W >= last_event_step:
            a = e_th[k - W:k + 1]
            b = e_L[k - W:k + 1]
            tol1 = 0.1 * thr.e_theta + 1e-12
            tol2 = 0.1 * thr.e_L + 1e-12
            if (np.max(np.abs(a - a[-1])) <= tol1 and np.max(np.abs(b - b[-1])) <= tol2):
                t_ss = t
                if sc.stop_at_steady_state:
                    k_end = k
                    stopped_early = True
                    if not (k % stride == 0):
                        snapshots.append(SwarmState(x.copy(), t=t, step=k, ids=ids,
                                                    velocities=None if v is None else v.copy()))
                    break
        if k == n_steps:
            break

        if adaptive is not None:
            e_i = (params.L / math.pi) * mean_err
            dg = np.where(e_i > adaptive.e_theta_star,
                          adaptive.alpha * (e_i - adaptive.e_theta_star), 0.0)
            adaptive = AdaptiveState(adaptive.G_n + dt * dg, adaptive.alpha, adaptive.e_theta_star)

        if dyn.kind == "first-order":
            x = x + dt * first_order_velocity(u, dyn, params, rng)
        else:
            x, v = second_order_update(x, v, u, dyn, params, rng)

    ke = k_end + 1
    times = np.arange(ke) * dt
    series = {"e_theta": e_th[:ke], "e_L": e_L[:ke], "N": Nser[:ke], "e": e_ser[:ke],
              "Gn_mean": gn_ser[:ke]}
    if track_V:
        series["V"] = V_ser[:ke]
        series["links_changed"] = lchg[:ke]
    if dmin_ser is not None:
        series["d_min"] = dmin_ser[:ke]
        series["u_sum"] = usum_ser[:ke]
    final = SwarmState(x, t=k_end * dt, velocities=v, step=k_end, ids=ids)
    traj = Trajectory(times, series, snapshots, log, final, params, t_ss)
    traj.summary = summarize(traj, sc, thr, ref is not None, stopped_early)
    return traj


def summarize(traj: Trajectory, sc: SwarmScenario, thr: Thresholds, lattice_start=False,
              stopped_early=False) -> dict:
    s = traj.series
    out = {"t_end": float(traj.times[-1]), "N_final": int(traj.final.N),
           "stopped_early": bool(stopped_early)}
    if traj.params.d == 2 and sc.controller.law != "radial":
        k = len(traj.times) - 1
        if traj.t_ss is not None:
            k = int(round(traj.t_ss / traj.params.dt))
        ess_th, ess_L = float(s["e_theta"][k]), float(s["e_L"][k])
        T_th, T_L, T = convergence_times(traj.metric_series(), thr)
        out.update(t_ss=traj.t_ss, e_theta_ss=ess_th, e_L_ss=ess_L,
                   success=bool(ess_th < thr.e_theta and ess_L < thr.e_L),
                   C=tuning_cost(ess_th, ess_L, thr), T_theta=T_th, T_L=T_L, T=T)
    if sc.controller.law == "radial":
        p = traj.params
        hi = p.R_a if p.R_a is not None else p.R_max
        e_fin = s["e"][-1]
        out["e_final"] = None if np.isnan(e_fin) else float(e_fin)
        fw = framework_from_positions(traj.final.positions, hi, p.R_min)
        rigid, rep = is_infinitesimally_rigid(fw, R=p.R)
        out["rigid_final"] = bool(rigid)
        out["d_min"] = float(np.nanmin(s["d_min"]))
        out["u_sum_max"] = float(np.nanmax(s["u_sum"]))
        if "V" in s:
            dV = np.diff(s["V"])
            same = ~s["links_changed"][1:]
            out["V_max_increase"] = float(np.max(dV[same], initial=-math.inf))
    return out
