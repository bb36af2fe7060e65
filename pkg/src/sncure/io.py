"""Panel files: a long-format period table, an event table and a metadata JSON.

``panel.csv``    ``id,k,A,L1..Lp,x_time,death_observed``, one row per
                 (individual, period ``-M..K``); covariates are blank after
                 ``floor(x_time)``.
``events.csv``   ``id,t``, one row per recurrent event.
``metadata.json`` ``M``, ``K``, ``tau`` and whatever the producer recorded.

Reals are written with 17 significant digits so files round-trip exactly.
"""
from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from pathlib import Path

import numpy as np

from .data import Individual, Panel
from .errors import ValidationError

PANEL_FILE = "panel.csv"
EVENTS_FILE = "events.csv"
META_FILE = "metadata.json"


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def write_panel(panel: Panel, directory) -> dict:
    """Write the three panel files into ``directory``; returns their paths."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    p, M, K = panel.n_covariates, panel.M, panel.K
    paths = {"panel": d / PANEL_FILE, "events": d / EVENTS_FILE, "metadata": d / META_FILE}
    with open(paths["panel"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "k", "A"] + [f"L{j + 1}" for j in range(p)] + ["x_time", "death_observed"])
        for ind in panel.individuals:
            n_cov = ind.covariates.shape[0]
            for c in range(M + K + 1):
                cov = [fmt(v) for v in ind.covariates[c]] if c < n_cov else [""] * p
                w.writerow([ind.id, c - M, fmt(ind.exposures[c])] + cov
                           + [fmt(ind.x_time), int(ind.death_observed)])
    with open(paths["events"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "t"])
        for ind in panel.individuals:
            for t in ind.event_times:
                w.writerow([ind.id, fmt(t)])
    meta = dict(panel.metadata)
    meta.update(M=M, K=K, tau=panel.tau, n=panel.n, n_covariates=p)
    paths["metadata"].write_text(dumps(meta))
    return paths


def _parse_id(s: str):
    try:
        return int(s)
    except ValueError:
        return s


def _num(s: str, what: str, where: str, problems: list):
    try:
        v = float(s)
    except ValueError:
        problems.append(f"{where}: {what}={s!r} is not a number")
        return math.nan
    return v


def read_panel(directory) -> Panel:
    """Parse panel files; malformed rows raise :class:`ValidationError` naming the row."""
    d = Path(directory)
    meta = json.loads((d / META_FILE).read_text()) if (d / META_FILE).exists() else {}
    problems = []
    rows = defaultdict(list)
    with open(d / PANEL_FILE, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:3] != ["id", "k", "A"] or header[-2:] != ["x_time", "death_observed"]:
            raise ValidationError(f"{PANEL_FILE}: unexpected header {header}", [f"header {header}"])
        p = len(header) - 5
        for lineno, rec in enumerate(reader, start=2):
            where = f"{PANEL_FILE} row {lineno}"
            if len(rec) != len(header):
                problems.append(f"{where}: expected {len(header)} fields, found {len(rec)}")
                continue
            k = _num(rec[1], "k", where, problems)
            if math.isfinite(k) and k != int(k):
                problems.append(f"{where}: period k={rec[1]!r} is not an integer")
            A = _num(rec[2], "A", where, problems)
            L = [None if s == "" else _num(s, f"L{j + 1}", where, problems)
                 for j, s in enumerate(rec[3: 3 + p])]
            X = _num(rec[3 + p], "x_time", where, problems)
            if rec[4 + p] not in ("0", "1"):
                problems.append(f"{where}: death_observed={rec[4 + p]!r} is not 0 or 1")
            rows[_parse_id(rec[0])].append((lineno, k, A, L, X, rec[4 + p] == "1"))
    events = defaultdict(list)
    if (d / EVENTS_FILE).exists():
        with open(d / EVENTS_FILE, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["id", "t"]:
                raise ValidationError(f"{EVENTS_FILE}: unexpected header {header}", [f"header {header}"])
            for lineno, rec in enumerate(reader, start=2):
                where = f"{EVENTS_FILE} row {lineno}"
                if len(rec) != 2:
                    problems.append(f"{where}: expected 2 fields, found {len(rec)}")
                    continue
                pid = _parse_id(rec[0])
                if pid not in rows:
                    problems.append(f"{where}: unknown id {rec[0]!r}")
                    continue
                events[pid].append(_num(rec[1], "t", where, problems))
    if problems:
        raise ValidationError(f"panel files malformed: {problems[0]}"
                              + (f" (+{len(problems) - 1} more)" if len(problems) > 1 else ""),
                              problems)
    if not rows:
        raise ValidationError("panel has no rows", ["panel has no rows"])

    ks = [r[1] for recs in rows.values() for r in recs]
    M = int(meta.get("M", -min(ks)))
    K = int(meta.get("K", max(ks)))
    tau = float(meta.get("tau", K))
    individuals = []
    for pid, recs in rows.items():
        recs.sort(key=lambda r: r[1])
        first = recs[0]
        for r in recs:
            if r[4] != first[4] or r[5] != first[5]:
                problems.append(f"{PANEL_FILE} row {r[0]}: x_time/death_observed differ within id {pid!r}")
        ks_i = [int(r[1]) for r in recs]
        if ks_i != list(range(-M, -M + len(ks_i))):
            problems.append(f"id {pid!r}: periods are not consecutive from -M (rows "
                            f"{recs[0][0]}..{recs[-1][0]})")
        A = np.array([r[2] for r in recs])
        covs = []
        for r in recs:
            if any(v is None for v in r[3]):
                if not all(v is None for v in r[3]):
                    problems.append(f"{PANEL_FILE} row {r[0]}: partially missing covariates")
                break
            covs.append(r[3])
        cov = np.array(covs, dtype=float).reshape(len(covs), p)
        individuals.append(Individual(pid, A, cov, np.array(sorted(events.get(pid, []))),
                                      first[4], first[5]))
    if problems:
        raise ValidationError(f"panel files malformed: {problems[0]}", problems)
    extra = {k: v for k, v in meta.items() if k not in ("M", "K", "tau", "n", "n_covariates")}
    return Panel(tuple(individuals), M, K, tau, metadata=extra)
