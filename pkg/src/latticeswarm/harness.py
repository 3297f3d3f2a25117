"""Campaign orchestration: seeded trials, grid searches, sweeps and file emission."""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import multiprocessing as mp
import numpy as np

from . import __version__
from . import svg
from .dynamics import Trajectory, simulate
from .scenario import (ConfigError, SwarmScenario, config_hash, parse_scenario, resolve_path,
                       scenario_dict, with_path)

OUT_ENV = "LATTICESWARM_OUT"

ROW_FIELDS = ["trial", "t_end", "N_final", "t_ss", "e_theta_ss", "e_L_ss", "success", "C",
              "T_theta", "T_L", "T", "recovery", "e_final", "rigid_final", "converged",
              "d_min", "u_sum_max", "V_max_increase"]


class TrialError(RuntimeError):
    def __init__(self, trial: int, seed: int, cause: BaseException):
        super().__init__(f"trial {trial} (seed {seed}) failed: {type(cause).__name__}: {cause}")
        self.trial = trial
        self.seed = seed


def default_threads() -> int:
    return os.cpu_count() or 1


# --- single trials --------------------------------------------------------------------

def recovery_times(traj: Trajectory, e_theta_star: float, e_L_star: float) -> List[Optional[float]]:
    """For each event, delay until both metrics are next below their thresholds."""
    out = []
    s = traj.series
    ok = (s["e_theta"] < e_theta_star) & (s["e_L"] < e_L_star)
    for ev in traj.events:
        k0 = int(round(ev["t"] / traj.params.dt))
        # the event is applied before metrics are taken at step k0
        idx = np.flatnonzero(ok[k0:])
        out.append(None if len(idx) == 0 else float(traj.times[k0 + idx[0]] - ev["t"]))
    return out


def trial_row(sc: SwarmScenario, traj: Trajectory, trial: int) -> dict:
    row = {k: None for k in ROW_FIELDS}
    row.update(traj.summary)
    row["trial"] = trial
    if traj.events and "e_theta_ss" in traj.summary:
        rec = recovery_times(traj, sc.thresholds.e_theta, sc.thresholds.e_L)
        row["recovery"] = ";".join("" if r is None else repr(round(r, 10)) for r in rec)
    if "e_final" in traj.summary:
        ef = traj.summary["e_final"]
        row["converged"] = bool(ef is not None and ef < sc.analysis.rigid_tol
                                and traj.summary["rigid_final"])
    return {k: row.get(k) for k in ROW_FIELDS}


def run_trial(doc: dict, trial: int, keep: bool = False):
    """Worker entry point: one seeded trial from a scenario mapping."""
    sc = parse_scenario(doc)
    try:
        traj = simulate(sc, trial)
    except Exception as exc:  # recorded with the seed by the caller
        raise TrialError(trial, sc.seed, exc) from exc
    row = trial_row(sc, traj, trial)
    return row, (traj if keep else None)


def _pool(threads: int):
    ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else None
    return ProcessPoolExecutor(max_workers=threads, mp_context=ctx)


def _map(fn, args: Sequence[tuple], threads: int):
    if threads <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with _pool(min(threads, len(args))) as ex:
        futs = [ex.submit(fn, *a) for a in args]
        return [f.result() for f in futs]


# --- campaigns --------------------------------------------------------------------------

def _num(v):
    if v is None or isinstance(v, str):
        return None
    return float(v)


@dataclass
class CampaignResult:
    scenario: dict
    rows: List[dict]
    trajectories: List[Trajectory] = field(default_factory=list)

    @property
    def trials(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        vals = [_num(r.get(name)) for r in self.rows]
        return np.array([np.nan if v is None else v for v in vals], float)

    def aggregate(self) -> dict:
        out = {"trials": self.trials}
        for name in ("t_ss", "e_theta_ss", "e_L_ss", "C", "T", "e_final", "d_min", "u_sum_max",
                     "V_max_increase"):
            col = self.column(name)
            fin = col[np.isfinite(col)]
            if len(fin):
                out[name] = {"mean": float(np.mean(fin)), "min": float(np.min(fin)),
                             "max": float(np.max(fin)), "n": int(len(fin))}
        if any(r.get("success") is not None for r in self.rows):
            out["success_rate"] = float(np.mean([bool(r["success"]) for r in self.rows]))
        if any(r.get("converged") is not None for r in self.rows):
            out["rho"] = float(np.mean([bool(r["converged"]) for r in self.rows]))
        return out

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(",".join(ROW_FIELDS) + "\n")
            for r in self.rows:
                fh.write(",".join(_fmt(r.get(k)) for k in ROW_FIELDS) + "\n")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool) or isinstance(v, np.bool_):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def run_trials(sc: SwarmScenario, M: int, threads: int = 1, keep: bool = False,
               trials: Optional[Sequence[int]] = None) -> CampaignResult:
    """M independently seeded trials; rows come back ordered by trial index."""
    if M < 1:
        raise ValueError("need at least one trial")
    idx = list(range(M)) if trials is None else list(trials)
    doc = scenario_dict(sc)
    res = _map(run_trial, [(doc, t, keep) for t in idx], threads)
    order = np.argsort(idx, kind="stable")
    rows = [res[i][0] for i in order]
    trajs = [res[i][1] for i in order] if keep else []
    return CampaignResult(doc, rows, trajs)


# --- grid search -------------------------------------------------------------------

def default_evaluator(doc: dict, trial: int) -> float:
    row, _ = run_trial(doc, trial)
    return float(row["C"])


@dataclass
class GridResult:
    paths: List[str]
    axes: List[List[float]]
    cost: np.ndarray           # mean C per cell, shape (len(ax0), len(ax1))
    trials: int

    @property
    def argmin(self):
        i, j = np.unravel_index(int(np.nanargmin(self.cost)), self.cost.shape)
        return self.axes[0][i], self.axes[1][j]

    @property
    def min_cost(self) -> float:
        return float(np.nanmin(self.cost))

    @property
    def feasible(self) -> np.ndarray:
        return self.cost <= 1.0

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"{self.paths[0]},{self.paths[1]},C_mean,feasible\n")
            for i, a in enumerate(self.axes[0]):
                for j, b in enumerate(self.axes[1]):
                    c = self.cost[i, j]
                    fh.write(f"{a!r},{b!r},{float(c)!r},{int(c <= 1.0)}\n")


def _grid_cell(doc, p0, v0, p1, v1, trial, evaluator):
    sc = with_path(with_path(parse_scenario(doc), p0, v0), p1, v1)
    return evaluator(scenario_dict(sc), trial)


def grid_search(sc: SwarmScenario, grid: Dict[str, Sequence[float]], M: int, threads: int = 1,
                evaluator: Optional[Callable[[dict, int], float]] = None) -> GridResult:
    """Mean cost over M trials for every cell of a two-parameter grid."""
    if len(grid) != 2:
        raise ConfigError("grid search needs exactly two parameter paths")
    (p0, ax0), (p1, ax1) = list(grid.items())
    for p in (p0, p1):
        resolve_path(sc, p)
    if not ax0 or not ax1:
        raise ConfigError("grid axes must be non-empty")
    ev = evaluator or default_evaluator
    doc = scenario_dict(sc)
    args = [(doc, p0, a, p1, b, t, ev) for a in ax0 for b in ax1 for t in range(M)]
    vals = np.array(_map(_grid_cell, args, threads), float).reshape(len(ax0), len(ax1), M)
    return GridResult([p0, p1], [list(map(float, ax0)), list(map(float, ax1))],
                      vals.mean(axis=2), M)


# --- sweeps ------------------------------------------------------------------------------

@dataclass
class SweepResult:
    path: str
    values: List[float]
    campaigns: List[CampaignResult]

    def table(self) -> List[dict]:
        out = []
        for v, c in zip(self.values, self.campaigns):
            agg = c.aggregate()
            row = {"value": v, "trials": c.trials}
            for k in ("e_theta_ss", "e_L_ss", "T", "e_final"):
                if k in agg:
                    for s in ("mean", "min", "max"):
                        row[f"{k}_{s}"] = agg[k][s]
            for k in ("success_rate", "rho"):
                if k in agg:
                    row[k] = agg[k]
            out.append(row)
        return out

    def to_csv(self, path) -> None:
        rows = self.table()
        cols = []
        for r in rows:
            cols += [k for k in r if k not in cols]
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for r in rows:
                fh.write(",".join(_fmt(r.get(k)) for k in cols) + "\n")


def sweep(sc: SwarmScenario, path: str, values: Sequence[float], M: int,
          threads: int = 1) -> SweepResult:
    cur = resolve_path(sc, path)
    camps = []
    for v in values:
        if isinstance(cur, int) and not isinstance(cur, bool) and float(v).is_integer():
            v = int(v)
        camps.append(run_trials(with_path(sc, path, v), M, threads))
    return SweepResult(path, list(values), camps)


# --- emission ------------------------------------------------------------------------

def output_dir(sc, root=None, kind: str = "run") -> Path:
    root = Path(root or os.environ.get(OUT_ENV, "runs"))
    return root / f"{sc.name}-{kind}-{config_hash(sc)[:10]}"


def manifest(sc, extra: Optional[dict] = None) -> dict:
    m = {"tool": "latticeswarm", "version": __version__, "config_hash": config_hash(sc),
         "seed": sc.seed, "scenario": scenario_dict(sc)}
    if extra:
        m.update(extra)
    return m


def _write_json(path: Path, obj) -> None:
    try:
        path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o)}")


def _hold_pad(arrs):
    n = max(len(a) for a in arrs)
    return np.array([np.concatenate([a, np.full(n - len(a), a[-1])]) if len(a) else np.full(n, np.nan)
                     for a in arrs])


def emit(sc, camp: CampaignResult, out: Path, formats=("csv", "json", "svg")) -> List[Path]:
    """Write per-trial table, per-step series, manifest and plots; returns written paths."""
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written = []
    if "csv" in formats:
        p = out / "trials.csv"
        camp.to_csv(p)
        written.append(p)
        for tr, traj in zip(camp.rows, camp.trajectories):
            p = out / f"series_{tr['trial']:03d}.csv"
            traj.series_csv(p)
            written.append(p)
    if "json" in formats:
        p = out / "summary.json"
        _write_json(p, manifest(sc, {"aggregate": camp.aggregate()}))
        written.append(p)
    if "svg" in formats and camp.trajectories:
        trajs = camp.trajectories
        dt = trajs[0].params.dt
        bands = {}
        for name in ("e_theta", "e_L", "e"):
            arrs = [t.series[name] for t in trajs if name in t.series]
            if not arrs or all(np.all(np.isnan(a)) for a in arrs):
                continue
            Y = _hold_pad(arrs)
            with np.errstate(all="ignore"):
                bands[name] = (np.nanmin(Y, 0), np.nanmean(Y, 0), np.nanmax(Y, 0))
        if bands:
            n = len(next(iter(bands.values()))[0])
            p = out / "metrics.svg"
            svg.band_plot(np.arange(n) * dt, bands, p, xlabel="t [s]")
            written.append(p)
        fin = trajs[0].final
        hi = trajs[0].params.R_a or trajs[0].params.R_max
        p = out / "snapshot.svg"
        svg.snapshot(fin.positions, svg.link_pairs(fin.positions, trajs[0].params.R_min, hi), p)
        written.append(p)
    return written
