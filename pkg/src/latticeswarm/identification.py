"""Calibration of PTW walkers from tracked trajectories.

Pipeline: preprocess raw positions into speed and angular velocity series,
fit the discrete linear model ``x[k+1] = a x[k] + b . u[k] + c`` by least
squares, map (a, b, c, residual std) back to continuous OU parameters, and
screen the resulting population for outliers.
"""
from __future__ import annotations

import csv
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .stochastic import PTWParams, PopulationRun

IDENTIFIED = ("theta_v", "mu_v", "sigma_v", "alpha_v", "beta_v",
              "theta_w", "sigma_w", "alpha_w", "beta_w")


class InvalidFit(ValueError):
    """The fitted discrete coefficient a lies outside (0, 1)."""


# --- data types -------------------------------------------------------------------------

@dataclass(frozen=True)
class RawTrajectory:
    agent_id: int
    times: np.ndarray
    positions: np.ndarray
    u: Optional[np.ndarray] = None

    def __post_init__(self):
        t = np.asarray(self.times, float)
        x = np.asarray(self.positions, float)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", x)
        if x.shape != (len(t), 2):
            raise ValueError("positions must have shape (len(times), 2)")
        if len(t) >= 2:
            d = np.diff(t)
            if np.any(d <= 0):
                raise ValueError("times must be strictly increasing")
            if np.max(np.abs(d - d[0])) > 1e-6:
                raise ValueError("samples must be uniformly spaced")
        if self.u is not None:
            object.__setattr__(self, "u", np.asarray(self.u, float))

    @property
    def dT(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0]) if len(self.times) else 0.0


@dataclass(frozen=True)
class KinematicSeries:
    times: np.ndarray
    v: np.ndarray
    w: np.ndarray
    u: np.ndarray
    u_dot: np.ndarray
    agent_id: int = 0

    def __post_init__(self):
        n = len(self.times)
        for name in ("v", "w", "u", "u_dot"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has the wrong length")
        if np.any(np.asarray(self.v) < 0):
            raise ValueError("speeds must be non-negative")

    @property
    def dT(self) -> float:
        return float(self.times[1] - self.times[0])


@dataclass(frozen=True)
class Rejection:
    agent_id: int
    reason: str


# --- preprocessing -------------------------------------------------------------------

def moving_average(y, window: int = 3) -> np.ndarray:
    """Centred moving average; near the ends the window shrinks symmetrically."""
    y = np.asarray(y, float)
    n = len(y)
    if window <= 1 or n == 0:
        return y.copy()
    k = np.arange(n)
    h = np.minimum(window // 2, np.minimum(k, n - 1 - k))
    c = np.concatenate([[0.0], np.cumsum(y)])
    return (c[k + h + 1] - c[k - h]) / (2 * h + 1)


def _smooth_cols(x, window):
    return np.column_stack([moving_average(x[:, j], window) for j in range(x.shape[1])])


def input_derivative(u, dT: float, mode: str = "backward") -> np.ndarray:
    u = np.asarray(u, float)
    if mode == "backward":
        out = np.zeros_like(u)
        out[1:] = np.diff(u) / dT
        return out
    if mode == "central":
        return np.gradient(u, dT, edge_order=1) if len(u) > 1 else np.zeros_like(u)
    raise ValueError(f"unknown derivative mode {mode!r}")


def preprocess(traj: RawTrajectory, min_duration: float = 5.0, window: int = 3,
               u=None, derivative: str = "backward"):
    """Speed and angular velocity from positions; a Rejection for short tracks."""
    if len(traj.times) < 3 or traj.duration < min_duration - 1e-9:
        return Rejection(traj.agent_id, f"duration {traj.duration:g} s < {min_duration:g} s")
    dT = traj.dT
    x = _smooth_cols(traj.positions, window)
    vel = np.gradient(x, dT, axis=0, edge_order=1)
    speed = np.hypot(vel[:, 0], vel[:, 1])
    cross = vel[:-1, 0] * vel[1:, 1] - vel[:-1, 1] * vel[1:, 0]
    dot = np.sum(vel[:-1] * vel[1:], axis=1)
    w = np.arctan2(cross, dot) / dT
    w = np.append(w, w[-1])
    if u is None:
        u = traj.u if traj.u is not None else np.zeros(len(traj.times))
    u = np.asarray(u, float)
    return KinematicSeries(traj.times, moving_average(speed, window), moving_average(w, window),
                           u, input_derivative(u, dT, derivative), traj.agent_id)


def series_from_run(run: PopulationRun, derivative: str = "backward") -> List[KinematicSeries]:
    """Kinematic series read directly from simulated samples (no position differencing)."""
    out = []
    for i in range(run.n_agents):
        u = run.u[i]
        out.append(KinematicSeries(run.times, run.v[i], run.w[i], u,
                                   input_derivative(u, run.sample_dt, derivative), i))
    return out


def trajectories_from_run(run: PopulationRun) -> List[RawTrajectory]:
    return [RawTrajectory(i, run.times, run.positions[i], run.u[i]) for i in range(run.n_agents)]


# --- outliers ----------------------------------------------------------------------------

def outlier_scores(d) -> np.ndarray:
    """|d - median| / MAD, with +inf for any deviation when the MAD is zero."""
    d = np.asarray(d, float).ravel()
    med = np.median(d)
    dev = np.abs(d - med)
    mad = np.median(dev)
    if mad == 0:
        return np.where(dev > 0, np.inf, 0.0)
    with np.errstate(over="ignore"):  # a subnormal MAD scores as +inf, as intended
        return dev / mad


def detect_outliers(d, m: float) -> List[int]:
    """Indices (into the flattened data) whose MAD score exceeds ``m``."""
    if not m > 0:
        raise ValueError("threshold m must be positive")
    return [int(k) for k in np.flatnonzero(outlier_scores(d) > m)]


def screen_speed_outliers(series: Sequence[KinematicSeries], m: float = 2.5) -> List[Tuple[int, float]]:
    """(agent, time) pairs with suspicious speeds, pooled over the population."""
    if not series:
        return []
    v = np.concatenate([s.v for s in series])
    who = np.concatenate([[(s.agent_id, float(t)) for t in s.times] for s in series])
    return [(int(who[k][0]), float(who[k][1])) for k in detect_outliers(v, m)]


# --- regression ---------------------------------------------------------------------

@dataclass
class FitResult:
    a: float
    b: Tuple[float, ...]
    c: float
    residuals: np.ndarray
    resid_std: float
    identifiable: Tuple[bool, ...]
    n: int

    @property
    def valid(self) -> bool:
        return 0 < self.a < 1


def _identifiable(X) -> np.ndarray:
    r = np.linalg.matrix_rank(X)
    ok = np.empty(X.shape[1], dtype=bool)
    for j in range(X.shape[1]):
        ok[j] = np.linalg.matrix_rank(np.delete(X, j, axis=1)) < r
    return ok


def fit_discrete(x, inputs: Sequence = ()) -> FitResult:
    """Least squares for x[k+1] = a x[k] + sum_j b_j u_j[k] + c.

    Input channels whose coefficient is not identifiable (zero or collinear
    columns) are dropped from the design and reported as NaN.
    """
    x = np.asarray(x, float)
    chans = [np.asarray(u, float) for u in inputs]
    n = len(x) - 1
    if n < 10:
        raise ValueError(f"need at least 10 transitions, got {n}")
    for u in chans:
        if len(u) != len(x):
            raise ValueError("input channels must match the series length")
    X = np.column_stack([x[:-1]] + [u[:-1] for u in chans] + [np.ones(n)])
    y = x[1:]
    keep = np.ones(X.shape[1], dtype=bool)
    ok = _identifiable(X)
    keep[1:-1] = ok[1:-1]
    ok2 = _identifiable(X[:, keep])
    if not ok2.all():
        raise ValueError("design is rank deficient in the state or intercept column")
    coef, *_ = np.linalg.lstsq(X[:, keep], y, rcond=None)
    full = np.full(X.shape[1], np.nan)
    full[keep] = coef
    resid = y - X[:, keep] @ coef
    sd = float(np.std(resid, ddof=1))
    return FitResult(float(full[0]), tuple(float(v) for v in full[1:-1]), float(full[-1]),
                     resid, sd, tuple(bool(v) for v in keep[1:-1]), n)


@dataclass(frozen=True)
class Recovery:
    theta: float
    mu: float
    alpha: Tuple[float, ...]
    sigma: float


def recover_continuous(fit: FitResult, dT: float) -> Recovery:
    a = fit.a
    if not 0 < a < 1:
        raise InvalidFit(f"a = {a:g} outside (0, 1): theta would be non-positive")
    la = math.log(a)
    theta = -la / dT
    mu = fit.c / (1 - a)
    k = la / (dT * (a - 1))
    alpha = tuple(k * b for b in fit.b)
    sigma = fit.resid_std * math.sqrt(-2 * la / ((1 - a * a) * dT))
    return Recovery(theta, mu, alpha, sigma)


def discretize(theta: float, mu: float, alpha: Sequence[float], sigma: float, dT: float):
    """Forward map (theta, mu, alpha, sigma) -> (a, b, c, residual std)."""
    a = math.exp(-theta * dT)
    b = tuple(al * (1 - a) / theta for al in alpha)
    return a, b, mu * (1 - a), sigma * math.sqrt((1 - a * a) / (2 * theta))


# --- per-agent and population calibration ---------------------------------------------

@dataclass
class Calibration:
    agent_id: int
    params: Optional[PTWParams]
    valid: bool
    reason: str = ""
    fits: Dict[str, FitResult] = field(default_factory=dict)

    def row(self) -> dict:
        out = OrderedDict(agent_id=self.agent_id)
        for k in IDENTIFIED:
            out[k] = float("nan") if self.params is None else getattr(self.params, k)
        out["valid"] = bool(self.valid)
        out["reason"] = self.reason
        return out


def calibrate_agent(series: KinematicSeries, dT: Optional[float] = None,
                    angular: str = "signed") -> Calibration:
    """Fit speed and angular-velocity equations independently.

    ``angular="signed"`` regresses the signed angular velocity with inputs
    multiplied by sign(w[k]), matching the sign(w) coupling of the model.
    ``angular="abs"`` fits |w| directly.
    """
    if angular not in ("signed", "abs"):
        raise ValueError(f"unknown angular mode {angular!r}")
    dT = series.dT if dT is None else dT
    up = np.maximum(series.u_dot, 0.0)
    fits = {}
    try:
        fits["v"] = fit_discrete(series.v, [series.u, up])
        if angular == "signed":
            s = np.where(series.w >= 0, 1.0, -1.0)
            fits["w"] = fit_discrete(series.w, [s * series.u, s * up])
        else:
            fits["w"] = fit_discrete(np.abs(series.w), [series.u, up])
    except ValueError as exc:
        return Calibration(series.agent_id, None, False, str(exc), fits)
    try:
        rv = recover_continuous(fits["v"], dT)
        rw = recover_continuous(fits["w"], dT)
    except InvalidFit as exc:
        return Calibration(series.agent_id, None, False, str(exc), fits)
    p = PTWParams(theta_v=rv.theta, mu_v=rv.mu, sigma_v=rv.sigma, alpha_v=rv.alpha[0],
                  beta_v=rv.alpha[1], theta_w=rw.theta, sigma_w=rw.sigma,
                  alpha_w=rw.alpha[0], beta_w=rw.alpha[1])
    return Calibration(series.agent_id, p, True, "", fits)


def filter_population(params: Sequence[PTWParams], m: float = 5.0):
    """Drop agents with any parameter flagged as an outlier.

    Returns (kept parameter list, rejected indices).  Parameters that are NaN
    (unidentifiable) are ignored for the screening.
    """
    if not m > 0:
        raise ValueError("threshold m must be positive")
    n = len(params)
    bad = np.zeros(n, dtype=bool)
    for name in IDENTIFIED:
        col = np.array([getattr(p, name) for p in params], float)
        fin = np.isfinite(col)
        if fin.sum() == 0:
            continue
        idx = np.flatnonzero(fin)
        bad[idx[detect_outliers(col[fin], m)]] = True
    kept = [p for p, b in zip(params, bad) if not b]
    return kept, [int(i) for i in np.flatnonzero(bad)]


def resample_population(valid: Sequence[PTWParams], N: int, rng: np.random.Generator) -> List[PTWParams]:
    """Uniform sampling with replacement from a pool of calibrated agents."""
    if len(valid) == 0:
        raise ValueError("cannot resample from an empty pool")
    idx = rng.integers(0, len(valid), size=int(N))
    return [valid[i] for i in idx]


@dataclass
class PopulationCalibration:
    agents: List[Calibration]
    kept: List[PTWParams]
    outlier_ids: List[int]

    @property
    def rejection_rate(self) -> float:
        n = len(self.agents)
        return 0.0 if n == 0 else 1.0 - len(self.kept) / n

    def medians(self) -> dict:
        out = {}
        for k in IDENTIFIED:
            col = np.array([getattr(p, k) for p in self.kept], float)
            col = col[np.isfinite(col)]
            out[k] = float(np.median(col)) if len(col) else float("nan")
        return out

    def rows(self) -> List[dict]:
        out = []
        bad = set(self.outlier_ids)
        for c in self.agents:
            r = c.row()
            if c.valid and c.agent_id in bad:
                r["valid"] = False
                r["reason"] = "population outlier"
            out.append(r)
        return out


def calibrate_population(series: Sequence, dT: Optional[float] = None, angular: str = "signed",
                         m: float = 5.0) -> PopulationCalibration:
    """Calibrate every series (Rejection entries pass through) and filter outliers."""
    cals = []
    for s in series:
        if isinstance(s, Rejection):
            cals.append(Calibration(s.agent_id, None, False, s.reason))
        else:
            cals.append(calibrate_agent(s, dT, angular))
    ok = [c for c in cals if c.valid]
    kept, bad_local = filter_population([c.params for c in ok], m)
    return PopulationCalibration(cals, kept, [ok[i].agent_id for i in bad_local])


# --- CSV I/O ---------------------------------------------------------------------------------

def read_trajectories_csv(path) -> List[RawTrajectory]:
    """Read long-format ``t, agent_id, x, y[, u, ...]`` rows into trajectories."""
    groups: Dict[int, list] = OrderedDict()
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        need = {"t", "agent_id", "x", "y"}
        if rd.fieldnames is None or not need.issubset(rd.fieldnames):
            raise ValueError(f"{path}: expected columns {sorted(need)}")
        has_u = "u" in rd.fieldnames
        for row in rd:
            groups.setdefault(int(row["agent_id"]), []).append(
                (float(row["t"]), float(row["x"]), float(row["y"]),
                 float(row["u"]) if has_u and row["u"] != "" else math.nan))
    out = []
    for aid, rows in groups.items():
        rows.sort()
        arr = np.array(rows)
        u = arr[:, 3] if has_u and np.all(np.isfinite(arr[:, 3])) else None
        out.append(RawTrajectory(aid, arr[:, 0], arr[:, 1:3], u))
    return out


def write_params_csv(rows: Sequence[dict], path) -> None:
    cols = ["agent_id", *IDENTIFIED, "valid", "reason"]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(cols)
        for r in rows:
            wr.writerow([r["agent_id"]] + [repr(float(r[k])) for k in IDENTIFIED]
                        + [int(bool(r["valid"])), r["reason"]])


def read_kinematics_csv(path) -> Optional[List[KinematicSeries]]:
    """Series from a simulator export with v, w, u columns; None if they are absent."""
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        if rd.fieldnames is None or not {"t", "agent_id", "v", "w", "u"}.issubset(rd.fieldnames):
            return None
        groups: Dict[int, list] = OrderedDict()
        for row in rd:
            groups.setdefault(int(row["agent_id"]), []).append(
                (float(row["t"]), float(row["v"]), float(row["w"]), float(row["u"])))
    out = []
    for aid, rows in groups.items():
        rows.sort()
        a = np.array(rows)
        dT = a[1, 0] - a[0, 0] if len(a) > 1 else 1.0
        out.append(KinematicSeries(a[:, 0], a[:, 1], a[:, 2], a[:, 3],
                                   input_derivative(a[:, 3], dT), aid))
    return out
