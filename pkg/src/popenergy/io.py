"""File formats for sweep tables, paths, models and solutions.

All writers are deterministic: floats are serialized with repr (the
shortest round-trip form), newlines are always "\\n", and JSON keys are
sorted, so rerunning a seeded pipeline produces byte-identical files.
Every sweep CSV gets a JSON sidecar carrying the configuration, the
seed and the CSV's SHA-256, and the reader refuses a table whose
checksum no longer matches its sidecar.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .neuron import CellRecord, SweepResult, SweepRow

SWEEP_COLUMNS = ("v_rest", "g_leak", "g_syn", "mu_F", "sigma2_F",
                 "eps_sig_atp", "eps_bg_atp", "n_trials", "valid")
PATH_COLUMNS = ("epsilon", "v_rest", "g_leak", "eta", "width")
SOLUTION_COLUMNS = ("s", "p", "R", "g", "d", "FI", "delta_min")


def _fmt(value):
    if isinstance(value, (int, np.integer)):
        return repr(int(value))
    return repr(float(value))


def _jsonable(obj):
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _dump_json(path, payload):
    text = json.dumps(payload, indent=2, sort_keys=True, default=_jsonable)
    Path(path).write_text(text + "\n", newline="\n")


def file_sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def sidecar_path(csv_path):
    return Path(csv_path).with_suffix(".json")


def write_sweep(csv_path, result, config=None, profile=None):
    """Write a sweep table plus its JSON metadata sidecar.

    The CSV holds one row per (cell state, synaptic weight); the
    sidecar holds the root seed, per-cell calibration records, the
    package version, the optional config dict and profile name, and the
    CSV's SHA-256.

    Returns
    -------
    Path
        The sidecar path.
    """
    from . import __version__

    csv_path = Path(csv_path)
    lines = [",".join(SWEEP_COLUMNS)]
    for row in result.rows:
        lines.append(",".join((
            _fmt(row.v_rest), _fmt(row.g_leak), _fmt(row.g_syn),
            _fmt(row.mu_f), _fmt(row.sigma2_f),
            _fmt(row.eps_sig_atp), _fmt(row.eps_bg_atp),
            _fmt(int(row.n_trials)), _fmt(int(row.valid)))))
    csv_path.write_text("\n".join(lines) + "\n", newline="\n")
    meta = {
        "version": __version__,
        "root_seed": int(result.root_seed),
        "n_trials": int(result.n_trials),
        "n_rows": len(result.rows),
        "sha256": file_sha256(csv_path),
        "profile": profile,
        "config": config,
        "cells": [dataclasses.asdict(c) for c in result.cells],
    }
    side = sidecar_path(csv_path)
    _dump_json(side, meta)
    return side


def read_sweep(csv_path, verify=True):
    """Read a sweep table and its sidecar back into a SweepResult.

    With verify=True (the default) the CSV's SHA-256 must match the
    value recorded in the sidecar.
    """
    csv_path = Path(csv_path)
    side = sidecar_path(csv_path)
    if not side.exists():
        raise FileNotFoundError(f"sweep sidecar not found: {side}")
    meta = json.loads(side.read_text())
    if verify and file_sha256(csv_path) != meta["sha256"]:
        raise ValueError(
            f"{csv_path.name} does not match the checksum in its sidecar; "
            "the table was edited or truncated after writing")
    rows = []
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(SWEEP_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"sweep CSV missing columns {sorted(missing)}")
        for rec in reader:
            rows.append(SweepRow(
                v_rest=float(rec["v_rest"]), g_leak=float(rec["g_leak"]),
                g_syn=float(rec["g_syn"]), mu_f=float(rec["mu_F"]),
                sigma2_f=float(rec["sigma2_F"]),
                eps_sig_atp=float(rec["eps_sig_atp"]),
                eps_bg_atp=float(rec["eps_bg_atp"]),
                n_trials=int(rec["n_trials"]), valid=int(rec["valid"])))
    cells = tuple(CellRecord(**c) for c in meta["cells"])
    return SweepResult(rows=tuple(rows), cells=cells,
                       root_seed=int(meta["root_seed"]),
                       n_trials=int(meta["n_trials"]))


def write_path_csv(path, optimal_path):
    """Write one energy-indexed adaptation path as CSV."""
    lines = [",".join(PATH_COLUMNS)]
    for i in range(optimal_path.epsilon.size):
        lines.append(",".join((
            _fmt(optimal_path.epsilon[i]), _fmt(optimal_path.v_rest[i]),
            _fmt(optimal_path.g_leak[i]), _fmt(optimal_path.eta[i]),
            _fmt(optimal_path.width[i]))))
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")


def read_path_csv(path):
    """Read a path CSV back as a dict of float arrays keyed by column."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(PATH_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"path CSV missing columns {sorted(missing)}")
        recs = list(reader)
    return {c: np.array([float(r[c]) for r in recs]) for c in PATH_COLUMNS}


def write_dispersion_bundle(path, models, trends=None):
    """Write per-activity-level dispersion models as one JSON bundle.

    Each entry carries the affine energy map (a1, a2), the dispersion
    hyperbola in both coordinates (b1, b2 and c1, c2), the floor eta0
    and the fit qualities, which is everything needed to evaluate
    eta(E) = eta0 + c1 / (E - c2) downstream. Optional polynomial
    trends in the activity level are stored as ascending coefficient
    lists.
    """
    from . import __version__

    entries = []
    for m in models:
        entries.append({
            "kappa": m.kappa, "a1": m.a1, "a2": m.a2,
            "b1": m.b1, "b2": m.b2, "eta0": m.eta0,
            "c1": m.c1, "c2": m.c2,
            "r_squared_energy": m.r_squared_energy,
            "r_squared_dispersion": m.r_squared_dispersion,
        })
    payload = {"version": __version__, "models": entries}
    if trends is not None:
        payload["trends"] = {
            name: list(map(float, coeffs))
            for name, coeffs in (
                ("a1", trends.a1), ("a2", trends.a2), ("b1", trends.b1),
                ("b2", trends.b2), ("eta0", trends.eta0))
        }
        payload["trend_residuals"] = {
            name: list(map(float, vals))
            for name, vals in trends.residuals.items()
        }
    _dump_json(path, payload)


def read_dispersion_bundle(path):
    """Read a dispersion bundle; returns (models, trends_dict_or_None)."""
    from .paths import DispersionModel

    payload = json.loads(Path(path).read_text())
    models = [DispersionModel(**entry) for entry in payload["models"]]
    return models, payload.get("trends")


def write_solution_csv(path, solution):
    """Write an analytic allocation as CSV, one row per grid point."""
    grid = solution.grid
    fisher = solution.fisher
    delta = solution.delta_min
    lines = [",".join(SOLUTION_COLUMNS)]
    for i in range(grid.n):
        lines.append(",".join((
            _fmt(grid.points[i]), _fmt(solution.prior.density[i]),
            _fmt(solution.rate_target.values[i]), _fmt(solution.gain[i]),
            _fmt(solution.density[i]), _fmt(fisher[i]), _fmt(delta[i]))))
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")


def load_config(path):
    """Load a TOML run configuration as a nested dict."""
    with open(path, "rb") as fh:
        return tomllib.load(fh)
