"""Command line: ``sncure simulate | fit | replicate | counterfactual``.

Settings come from flags, then an optional ``--config`` JSON file, then
defaults.  Every command echoes the effective configuration to stderr and
embeds it in its JSON output.

Exit codes: 0 success, 2 usage, 3 validation, 4 numerical, 5 I/O.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import os
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import io as panel_io
from .counterfactual import AT_RISK_NOTE, CapScenario, averted_curve_ci
from .data import validate_panel
from .errors import SncureError, ValidationError
from .estimator import METHODS, EstimatorConfig
from .inference import BootstrapResult, bootstrap, summarize
from .learners import LearnerSpec
from .montecarlo import run_replications
from .parametric import EffectEstimates
from .simulation import SimConfig, simulate_study
from .terminal import AlphaWeights

EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 2, 3, 4, 5
THREADS_ENV = "SNCURE_THREADS"


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


class Failure(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise Failure(EXIT_IO, f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise click.UsageError(f"config {path} is not valid JSON: {exc}") from exc


def _merge(defaults: dict, file_cfg: dict, flags: dict) -> dict:
    unknown = set(file_cfg) - set(defaults)
    if unknown:
        raise click.UsageError(f"unknown config field(s): {', '.join(sorted(unknown))}")
    out = dict(defaults)
    out.update(file_cfg)
    out.update({k: v for k, v in flags.items() if v is not None})
    return out


def _echo_config(command: str, cfg: dict):
    click.echo(f"sncure {command} effective config: {json.dumps(cfg, sort_keys=True, default=str)}",
               err=True)


def _sim_config(cfg: dict) -> SimConfig:
    fields = {f.name for f in dataclasses.fields(SimConfig)}
    kwargs = {k: v for k, v in cfg.items() if k in fields and v is not None}
    for key in ("beta_true", "alpha_true"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    try:
        return SimConfig(**kwargs)
    except (ValueError, TypeError) as exc:
        raise click.UsageError(f"invalid simulation config: {exc}") from exc


ESTIMATOR_DEFAULTS = {
    "estimator": "parametric", "M_lags": None, "V": 5, "R": 0, "bins": 5, "quadrature": "midpoint",
    "learner": "ensemble", "rounds": None, "learning_rate": None, "max_depth": None,
    "min_risk_set": 20, "weight_cap": None, "ci_level": 0.95, "seed": 0, "threads": None,
}


def _learner(cfg: dict) -> LearnerSpec:
    kind = cfg["learner"]
    kw = {}
    for key in ("rounds", "learning_rate", "max_depth"):
        if cfg.get(key) is not None:
            kw[key] = cfg[key]
    try:
        return LearnerSpec(kind, **kw)
    except ValueError as exc:
        raise click.UsageError(f"invalid learner: {exc}") from exc


def _estimator_config(cfg: dict) -> EstimatorConfig:
    try:
        return EstimatorConfig(method=cfg["estimator"], M_lags=cfg["M_lags"],
                               bins_per_period=cfg["bins"], quadrature=cfg["quadrature"],
                               V=cfg["V"], learner=_learner(cfg), min_risk_set=cfg["min_risk_set"],
                               weight_cap=cfg["weight_cap"])
    except ValueError as exc:
        raise click.UsageError(f"invalid estimator config: {exc}") from exc


def _check_ranges(cfg: dict):
    if cfg.get("R") is not None and cfg["R"] < 0:
        raise click.UsageError("R must be >= 0")
    if not 0 < cfg["ci_level"] < 1:
        raise click.UsageError("ci_level must lie in (0, 1)")


def _read_panel(path):
    try:
        panel = panel_io.read_panel(path)
    except OSError as exc:
        raise Failure(EXIT_IO, f"cannot read panel {path}: {exc}") from exc
    validate_panel(panel).raise_if_failed()
    return panel


def _write_text(path, text):
    if path is None or path == "-":
        click.echo(text, nl=False)
        return
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    except OSError as exc:
        raise Failure(EXIT_IO, f"cannot write {path}: {exc}") from exc


def _run(fn):
    """Map package errors onto exit codes."""
    try:
        fn()
    except click.ClickException:
        raise
    except Failure as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exc.code)
    except ValidationError as exc:
        click.echo(f"error: ValidationError: {exc}", err=True)
        for v in exc.violations[:50]:
            click.echo(f"  - {v}", err=True)
        sys.exit(EXIT_VALIDATION)
    except SncureError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(EXIT_NUMERICAL)
    except OSError as exc:
        click.echo(f"error: I/O: {exc}", err=True)
        sys.exit(EXIT_IO)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Causal effects of time-varying exposures on recurrent events."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


# ---------------------------------------------------------------------------

SIM_DEFAULTS = {f.name: f.default for f in dataclasses.fields(SimConfig)}
SIM_DEFAULTS["seed"] = None


@main.command()
@click.option("--config", "config_path", type=click.Path(), help="JSON file of simulation settings.")
@click.option("--seed", type=int, required=True, help="Random seed (required).")
@click.option("--n", type=int)
@click.option("--K", "K", type=int)
@click.option("--M", "M", type=int)
@click.option("--scenario", type=click.Choice(["simple", "complex"]))
@click.option("--var-ratio", type=float)
@click.option("--c", "c", type=float, help="Fix the confounding scale instead of calibrating it.")
@click.option("--out", "out_dir", type=click.Path(), required=True, help="Output directory.")
def simulate(config_path, seed, n, K, M, scenario, var_ratio, c, out_dir):
    """Simulate one study and write panel.csv, events.csv and metadata.json."""
    def go():
        cfg = _merge(SIM_DEFAULTS, _load_config(config_path),
                     dict(seed=seed, n=n, K=K, M=M, scenario=scenario, var_ratio=var_ratio, c=c))
        sim = _sim_config(cfg)
        _echo_config("simulate", sim.to_dict())
        panel = simulate_study(sim)
        try:
            paths = panel_io.write_panel(panel, out_dir)
        except OSError as exc:
            raise Failure(EXIT_IO, f"cannot write to {out_dir}: {exc}") from exc
        click.echo(json.dumps({k: str(v) for k, v in paths.items()}))
    _run(go)


def _estimate(panel, cfg, est_cfg):
    t0 = time.perf_counter()
    point = est_cfg.fit(panel, cfg["seed"])
    t_fit = time.perf_counter() - t0
    boot = None
    if cfg["R"] > 0:
        threads = cfg["threads"] or default_threads()
        boot = bootstrap(panel, lambda p, s: est_cfg.fit(p, s), cfg["R"], cfg["seed"],
                         cfg["ci_level"], point=point, threads=threads)
        point = summarize(boot, point)
    return point, boot, {"fit_seconds": t_fit, "total_seconds": time.perf_counter() - t0}


@main.command()
@click.option("--config", "config_path", type=click.Path())
@click.option("--panel", "panel_dir", type=click.Path(), required=True,
              help="Directory holding panel.csv, events.csv, metadata.json.")
@click.option("--estimator", type=click.Choice(METHODS))
@click.option("--M-lags", "M_lags", type=int)
@click.option("--V", "V", type=int, help="Cross-fitting folds (robust).")
@click.option("--R", "R", type=int, help="Bootstrap replicates (0: point estimates only).")
@click.option("--bins", type=int, help="Time bins per period.")
@click.option("--quadrature", type=click.Choice(["midpoint", "gauss"]))
@click.option("--learner", type=click.Choice(["linear", "gbt", "ensemble"]))
@click.option("--rounds", type=int)
@click.option("--learning-rate", type=float)
@click.option("--max-depth", type=int)
@click.option("--min-risk-set", type=int)
@click.option("--weight-cap", type=float)
@click.option("--ci-level", type=float)
@click.option("--seed", type=int)
@click.option("--threads", type=int, help=f"Worker processes (default: ${THREADS_ENV} or all cores).")
@click.option("--out", "out_path", type=click.Path(), help="Output JSON (default: stdout).")
def fit(config_path, panel_dir, out_path, **flags):
    """Estimate beta (and optionally bootstrap it) on a panel."""
    def go():
        cfg = _merge(ESTIMATOR_DEFAULTS, _load_config(config_path), flags)
        _check_ranges(cfg)
        est_cfg = _estimator_config(cfg)
        _echo_config("fit", cfg)
        panel = _read_panel(panel_dir)
        point, boot, timings = _estimate(panel, cfg, est_cfg)
        out = point.to_dict()
        out["config"] = {**cfg, "estimator_config": est_cfg.to_dict(), "panel": str(panel_dir)}
        out["timings"] = timings
        if boot is not None:
            out["bootstrap_replicates"] = boot.replicates.tolist()
        _write_text(out_path, panel_io.dumps(out))
    _run(go)


REPLICATE_DEFAULTS = {**ESTIMATOR_DEFAULTS, "estimators": "parametric,nonparametric,robust",
                      "reps": 100, "R": 200, "n": 2000, "scenario": "simple", "seed": None}


@main.command()
@click.option("--config", "config_path", type=click.Path())
@click.option("--seed", type=int, required=True)
@click.option("--n", type=int)
@click.option("--scenario", type=click.Choice(["simple", "complex"]))
@click.option("--reps", type=int, help="Simulated studies.")
@click.option("--R", "R", type=int, help="Bootstrap replicates per study.")
@click.option("--estimators", help="Comma-separated subset of parametric,nonparametric,robust.")
@click.option("--M-lags", "M_lags", type=int)
@click.option("--V", "V", type=int)
@click.option("--bins", type=int)
@click.option("--learner", type=click.Choice(["linear", "gbt", "ensemble"]))
@click.option("--rounds", type=int)
@click.option("--learning-rate", type=float)
@click.option("--min-risk-set", type=int)
@click.option("--ci-level", type=float)
@click.option("--threads", type=int)
@click.option("--out", "out_path", type=click.Path(), required=True, help="Summary CSV.")
def replicate(config_path, out_path, **flags):
    """Monte Carlo study: bias, bootstrap SE and coverage per estimator and lag."""
    def go():
        cfg = _merge(REPLICATE_DEFAULTS, _load_config(config_path), flags)
        _check_ranges(cfg)
        if cfg["reps"] < 1:
            raise click.UsageError("reps must be >= 1")
        names = [s.strip() for s in str(cfg["estimators"]).split(",") if s.strip()]
        bad = [s for s in names if s not in METHODS]
        if bad or not names:
            raise click.UsageError(f"unknown estimator(s): {', '.join(bad) or '(none)'}")
        sim = _sim_config({"n": cfg["n"], "scenario": cfg["scenario"], "seed": cfg["seed"]})
        ests = {name: _estimator_config({**cfg, "estimator": name}) for name in names}
        _echo_config("replicate", cfg)
        threads = cfg["threads"] or default_threads()
        result = run_replications(sim, ests, cfg["reps"], cfg["R"], cfg["seed"], cfg["ci_level"],
                                  threads=threads)
        try:
            result.write_csv(out_path)
        except OSError as exc:
            raise Failure(EXIT_IO, f"cannot write {out_path}: {exc}") from exc
        meta = {"config": cfg, "failures": {n: r.failures for n, r in result.runs.items()},
                "seconds": {n: r.seconds for n, r in result.runs.items()}}
        _write_text(str(out_path) + ".json", panel_io.dumps(meta))
    _run(go)


@main.command()
@click.option("--panel", "panel_dir", type=click.Path(), required=True)
@click.option("--estimates", "estimates_path", type=click.Path(), required=True,
              help="JSON written by `sncure fit`.")
@click.option("--cap", "caps", type=float, multiple=True, required=True,
              help="Exposure cap (repeatable).")
@click.option("--t-end", type=float, help="Count events up to this time (default: tau).")
@click.option("--ci-level", type=float)
@click.option("--out", "out_path", type=click.Path(), help="Output CSV (default: stdout).")
def counterfactual(panel_dir, estimates_path, caps, t_end, ci_level, out_path):
    """Cumulative events averted by capping exposure, per period, with bootstrap bounds."""
    def go():
        try:
            est = json.loads(Path(estimates_path).read_text())
        except OSError as exc:
            raise Failure(EXIT_IO, f"cannot read {estimates_path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise click.UsageError(f"{estimates_path} is not valid JSON: {exc}") from exc
        level = ci_level if ci_level is not None else est.get("ci_level") or 0.95
        try:
            scenarios = [CapScenario(c) for c in caps]
        except ValueError as exc:
            raise click.UsageError(str(exc)) from exc
        _echo_config("counterfactual", {"panel": panel_dir, "estimates": estimates_path,
                                        "caps": list(caps), "t_end": t_end, "ci_level": level,
                                        "note": AT_RISK_NOTE})
        panel = _read_panel(panel_dir)
        if t_end is not None and t_end > panel.tau:
            raise click.UsageError(f"--t-end {t_end} exceeds tau={panel.tau}")
        beta = np.asarray(est["beta"], dtype=float)
        boot = None
        if est.get("bootstrap_replicates"):
            reps = np.asarray(est["bootstrap_replicates"], dtype=float)
            boot = BootstrapResult(reps, reps.std(axis=0), level, est.get("method", ""))
        lines = []
        fields = ["label", "cap", "period", "cumulative_averted", "lo", "hi"]
        for sc in scenarios:
            rows = averted_curve_ci(panel, beta, boot, sc, t_end, level)
            for period, cum, lo, hi in rows:
                lines.append([sc.label, panel_io.fmt(sc.cap), int(period), panel_io.fmt(cum),
                              panel_io.fmt(lo), panel_io.fmt(hi)])
        from io import StringIO
        buf = StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(fields)
        w.writerows(lines)
        _write_text(out_path, buf.getvalue())
    _run(go)


if __name__ == "__main__":
    main()
