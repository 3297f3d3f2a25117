"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 runtime failure,
3 validation failure.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from . import harness as H
from . import identification as ident
from . import svg
from .dynamics import _interaction, initial_state, trial_rng
from .rigidity import (classify_spectrum, framework_from_positions, is_infinitesimally_rigid,
                       jacobian, rigidity_matrix)
from .scenario import (ConfigError, PopulationScenario, SwarmScenario, apply_overrides,
                       json_schema, load_raw, parse_scenario, set_path)
from .stochastic import PTWParams, simulate_population

EXIT_CONFIG, EXIT_RUNTIME, EXIT_VALIDATION = 1, 2, 3


class ValidationFailed(RuntimeError):
    pass


def _load(config, overrides, seed, trials):
    doc = apply_overrides(load_raw(config), overrides)
    if seed is not None:
        doc["seed"] = seed
    if trials is not None:
        set_path(doc, "campaign.trials", trials)
    return parse_scenario(doc)


def common(fn):
    fn = click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
                      help="Override a config field (dotted path), repeatable.")(fn)
    fn = click.option("--seed", type=int, default=None, help="Base seed.")(fn)
    fn = click.option("--trials", type=int, default=None, help="Number of trials.")(fn)
    fn = click.option("--threads", type=int, default=None,
                      help="Worker processes (default: logical cores).")(fn)
    fn = click.option("--out", type=click.Path(file_okay=False), default=None,
                      help=f"Output directory (default: ${H.OUT_ENV}/<name>-<kind>-<hash>).")(fn)
    fn = click.argument("config", type=click.Path(dir_okay=False))(fn)
    return fn


def _threads(t):
    return H.default_threads() if t is None else max(1, t)


def _outdir(sc, out, kind):
    p = Path(out) if out else H.output_dir(sc, kind=kind)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _require(sc, cls, cmd):
    if not isinstance(sc, cls):
        raise ConfigError(f"{cmd} needs a scenario of kind {cls.model_fields['kind'].default!r}")


@click.group()
@click.version_option(__version__)
def main():
    """Lattice-formation swarm simulator and analysis tools."""


@main.command()
@common
def simulate(config, overrides, seed, trials, threads, out):
    """Run a scenario (swarm campaign or stochastic population)."""
    sc = _load(config, overrides, seed, trials)
    if isinstance(sc, PopulationScenario):
        outp = _outdir(sc, out, "population")
        run = simulate_population(sc)
        run.to_csv(outp / "trajectories.csv")
        H._write_json(outp / "summary.json", H.manifest(sc, {"agents": run.n_agents,
                                                             "samples": len(run.times)}))
        click.echo(f"wrote {outp}")
        return
    M = trials if trials is not None else (sc.campaign.trials if sc.campaign.trials else 1)
    camp = H.run_trials(sc, M, _threads(threads), keep=True)
    outp = _outdir(sc, out, "simulate")
    H.emit(sc, camp, outp)
    click.echo(json.dumps(camp.aggregate(), sort_keys=True, default=H._json_default))
    click.echo(f"wrote {outp}")


@main.command()
@common
def tune(config, overrides, seed, trials, threads, out):
    """Grid search over two gain paths (campaign.grid); reports mean cost per cell."""
    sc = _load(config, overrides, seed, trials)
    _require(sc, SwarmScenario, "tune")
    if not sc.campaign.grid:
        raise ConfigError("tune needs campaign.grid with two dotted paths")
    res = H.grid_search(sc, sc.campaign.grid, sc.campaign.trials, _threads(threads))
    outp = _outdir(sc, out, "tune")
    res.to_csv(outp / "cost_map.csv")
    i, j = np.unravel_index(int(np.nanargmin(res.cost)), res.cost.shape)
    svg.heatmap(res.axes[0], res.axes[1], res.cost, outp / "cost_map.svg", mark=(i, j),
                xlabel=res.paths[1], ylabel=res.paths[0])
    info = {"argmin": list(res.argmin), "min_cost": res.min_cost,
            "feasible_cells": int(res.feasible.sum()), "trials_per_cell": res.trials}
    H._write_json(outp / "summary.json", H.manifest(sc, info))
    click.echo(json.dumps(info, sort_keys=True))


@main.command()
@common
def sweep(config, overrides, seed, trials, threads, out):
    """Sweep one parameter path (campaign.sweep) and tabulate mean/min/max bands."""
    sc = _load(config, overrides, seed, trials)
    _require(sc, SwarmScenario, "sweep")
    if sc.campaign.sweep is None:
        raise ConfigError("sweep needs campaign.sweep.path and campaign.sweep.values")
    sw = sc.campaign.sweep
    res = H.sweep(sc, sw.path, sw.values, sc.campaign.trials, _threads(threads))
    outp = _outdir(sc, out, "sweep")
    res.to_csv(outp / "sweep.csv")
    table = res.table()
    bands = {}
    for k in ("e_theta_ss", "e_L_ss", "e_final", "rho"):
        if all(f"{k}_mean" in r for r in table):
            bands[k] = tuple(np.array([r[f"{k}_{s}"] for r in table]) for s in ("min", "mean", "max"))
        elif all(k in r for r in table):
            v = np.array([r[k] for r in table])
            bands[k] = (v, v, v)
    if bands and len(table) > 1:
        svg.band_plot(np.array(sw.values, float), bands, outp / "sweep.svg", xlabel=sw.path)
    H._write_json(outp / "summary.json", H.manifest(sc, {"table": table}))
    for r in table:
        click.echo(json.dumps(r, sort_keys=True))


@main.command()
@common
def rigidity(config, overrides, seed, trials, threads, out):
    """Rank test and Jacobian spectrum of the scenario's initial configurations."""
    sc = _load(config, overrides, seed, trials)
    _require(sc, SwarmScenario, "rigidity")
    p = sc.params.build()
    hi = p.R_a if p.R_a is not None else p.R_max
    f = _interaction(sc, p)
    M = trials if trials is not None else sc.campaign.trials
    outp = _outdir(sc, out, "rigidity")
    rows = []
    for t in range(M):
        st, _ = initial_state(sc, p, trial_rng(sc.seed, t))
        x = np.asarray(st.positions)
        fw = framework_from_positions(x, hi, p.R_min)
        rigid, rep = is_infinitesimally_rigid(fw, R=p.R)
        J, notes = jacobian(x, f, f.derivative, hi, p.R_min)
        spec = classify_spectrum(J, rigidity_matrix(fw), notes=notes)
        row = {"trial": t, "N": len(x), "d": p.d, **rep.to_dict(), **spec.to_dict()}
        row.pop("notes")
        rows.append(row)
    cols = list(rows[0])
    with open(outp / "rigidity.csv", "w") as fh:
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(H._fmt(r[c]) for c in cols) + "\n")
    H._write_json(outp / "summary.json", H.manifest(sc, {"rows": rows}))
    ok = sum(bool(r["infinitesimally_rigid"]) for r in rows)
    click.echo(f"{ok}/{len(rows)} configurations infinitesimally rigid; wrote {outp}")


@main.command()
@common
@click.option("--trajectories", "traj_path", type=click.Path(dir_okay=False), required=True,
              help="Long-format CSV with t, agent_id, x, y (and optionally v, w, u).")
def identify(config, overrides, seed, trials, threads, out, traj_path):
    """Calibrate PTW parameters from a trajectory CSV."""
    sc = _load(config, overrides, seed, trials)
    _require(sc, PopulationScenario, "identify")
    cfg = sc.identification
    series = ident.read_kinematics_csv(traj_path) if cfg.source == "kinematics" else None
    if series is None:
        series = [ident.preprocess(tr, cfg.min_duration, cfg.window, derivative=cfg.derivative)
                  for tr in ident.read_trajectories_csv(traj_path)]
    pc = ident.calibrate_population(series, angular=cfg.angular, m=cfg.outlier_m)
    outp = _outdir(sc, out, "identify")
    ident.write_params_csv(pc.rows(), outp / "params.csv")
    ok = [s for s in series if isinstance(s, ident.KinematicSeries)]
    suspects = ident.screen_speed_outliers(ok, 2.5)
    info = {"agents": len(series), "valid": len(pc.kept), "rejection_rate": pc.rejection_rate,
            "medians": pc.medians(), "speed_outlier_suspects": len(suspects)}
    H._write_json(outp / "summary.json", H.manifest(sc, info))
    click.echo(json.dumps(info, sort_keys=True))


@main.command()
@common
@click.option("--tol", type=float, default=0.15, help="Relative tolerance on base parameters.")
@click.option("--tol-input", type=float, default=0.25, help="Relative tolerance on input gains.")
def validate(config, overrides, seed, trials, threads, out, tol, tol_input):
    """Round trip: simulate a PTW population, recalibrate, compare with the truth."""
    sc = _load(config, overrides, seed, trials)
    _require(sc, PopulationScenario, "validate")
    truth = PTWParams.from_cfg(sc.ptw)
    run = simulate_population(sc)
    pc = ident.calibrate_population(ident.series_from_run(run), angular=sc.identification.angular,
                                    m=sc.identification.outlier_m)
    med = pc.medians()
    report, failed = {}, []
    for k, v in med.items():
        ref = getattr(truth, k)
        lim = tol_input if k.startswith(("alpha", "beta")) else tol
        if ref == 0:
            continue
        rel = abs(v / ref - 1)
        report[k] = {"truth": ref, "median": v, "rel_err": rel, "tol": lim}
        if not rel <= lim:
            failed.append(k)
    outp = _outdir(sc, out, "validate")
    ident.write_params_csv(pc.rows(), outp / "params.csv")
    H._write_json(outp / "summary.json", H.manifest(sc, {"report": report, "failed": failed,
                                                         "rejection_rate": pc.rejection_rate}))
    for k, r in report.items():
        click.echo(f"{k:8s} truth={r['truth']:<10.4g} median={r['median']:<10.4g} "
                   f"rel_err={r['rel_err']:.3f} {'ok' if k not in failed else 'FAIL'}")
    if failed:
        raise ValidationFailed(f"parameters outside tolerance: {', '.join(failed)}")


@main.command()
def schema():
    """Print the JSON schema of both scenario kinds."""
    click.echo(json.dumps(json_schema(), indent=2, default=str))


def run(argv=None) -> int:
    try:
        main.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except (click.UsageError, ConfigError) as exc:
        click.echo(f"config error: {exc}", err=True)
        return EXIT_CONFIG
    except ValidationFailed as exc:
        click.echo(f"validation failed: {exc}", err=True)
        return EXIT_VALIDATION
    except click.Abort:
        return EXIT_RUNTIME
    except Exception as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        return EXIT_RUNTIME


def entry() -> None:
    sys.exit(run())


if __name__ == "__main__":
    entry()
