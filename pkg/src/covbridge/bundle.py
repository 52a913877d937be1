"""Serialization of solver results: solution.json and the CSV schedules.

Numbers are written with 17 significant digits so every float64 round-trips
exactly. Column layouts are listed in ``schema/files.json``.
"""
import csv
import json
import os
from importlib import resources

import numpy as np

from . import __version__, kernels
from .config import config_hash, spec_to_dict
from .mc import tube_radii

FMT = "%.17g"


def _fmt(x):
    return FMT % x


def _mat(a):
    return np.atleast_2d(np.asarray(a, dtype=float)).tolist()


def bundle_dict(pipeline, steps):
    """The JSON document written to solution.json."""
    sol = pipeline.sol
    spec = pipeline.spec
    C = np.atleast_2d(sol.C)
    return {
        "model": spec_to_dict(spec),
        "static": {
            "X": _mat(sol.X),
            "Y": _mat(sol.Y),
            "Z": _mat(sol.Z),
            "Mlag": _mat(sol.Mlag),
            "PiT": _mat(pipeline.PiT),
            "CXCt": _mat(C @ sol.X @ C.T),
            "objective": float(sol.objective),
        },
        "energy": {
            "Jdyn": pipeline.energy.Jdyn,
            "Jstatic": pipeline.energy.Jstatic,
            "relgap": pipeline.energy.relgap,
        },
        "Jdyn": pipeline.energy.Jdyn,
        "Jstatic": pipeline.energy.Jstatic,
        "CXCt": _mat(C @ sol.X @ C.T),
        "residuals": {k: float(v) for k, v in pipeline.residuals.items()},
        "provenance": {
            "config_hash": config_hash(spec, steps),
            "grid": {"T": spec.T, "steps": int(steps)},
            "version": __version__,
            "backend": kernels.BACKEND,
        },
    }


def _flat_header(prefix, shape):
    return [f"{prefix}_{i}{j}" for i in range(shape[0]) for j in range(shape[1])]


def gains_rows(sched):
    Pi, K = sched.Pi, sched.K
    header = ["t"] + _flat_header("Pi", Pi.shape[1:]) + _flat_header("K", K.shape[1:])
    rows = [[t, *Pi[k].ravel(), *K[k].ravel()] for k, t in enumerate(sched.times)]
    return header, rows


def covariance_rows(cov, level=3.0):
    tube = tube_radii(cov, level)
    S = cov.Sigma
    n = S.shape[1]
    header = (["t"] + _flat_header("Sigma", S.shape[1:])
              + [f"radius_{i}" for i in range(n)]
              + _flat_header("axis", S.shape[1:]))
    rows = [[t, *S[k].ravel(), *tube.radii[k], *tube.axes[k].ravel()]
            for k, t in enumerate(cov.times)]
    return header, rows


def trajectory_rows(batch, max_paths=None):
    n = batch.states.shape[2]
    m = batch.controls.shape[2]
    header = ["path", "t"] + [f"x_{i}" for i in range(n)] + [f"u_{j}" for j in range(m)]
    count = batch.n_paths if not max_paths else min(max_paths, batch.n_paths)
    rows = []
    for p in range(count):
        for k, t in enumerate(batch.times):
            rows.append([p, t, *batch.states[p, k], *batch.controls[p, k]])
    return header, rows


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, (int, np.integer)) else _fmt(v) for v in row])


def read_csv(path):
    """Header and float array of a CSV written by :func:`write_csv`."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        data = np.array([[float(v) for v in row] for row in r])
    return header, data


def write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, allow_nan=True)
        fh.write("\n")


def write_solution(outdir, pipeline, steps):
    """Write solution.json, gains.csv and covariance.csv into ``outdir``."""
    os.makedirs(outdir, exist_ok=True)
    doc = bundle_dict(pipeline, steps)
    write_json(os.path.join(outdir, "solution.json"), doc)
    write_csv(os.path.join(outdir, "gains.csv"), *gains_rows(pipeline.sched))
    write_csv(os.path.join(outdir, "covariance.csv"), *covariance_rows(pipeline.cov))
    return doc


def load_solution(path):
    """Parse solution.json back into arrays."""
    with open(path) as fh:
        doc = json.load(fh)
    static = {k: (np.array(v) if isinstance(v, list) else v) for k, v in doc["static"].items()}
    return doc, static


def schema():
    text = resources.files("covbridge").joinpath("schema/files.json").read_text()
    return json.loads(text)
