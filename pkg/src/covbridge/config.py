"""Model configuration files (TOML) and the built-in example.

Layout::

    [model]
    T = 1.0
    A = [[0.0, 1.0], [-1.0, -1.0]]      # constant matrix, or
    # A = { times = [0.0, 1.0], values = [[[...]], [[...]]] }
    B = [[0.0], [1.0]]
    C = [[0.0, 1.0]]
    Sigma0 = [[0.5, 0.0], [0.0, 0.5]]

    [target]
    kind = "output"                      # or "state"
    Sigma = [[0.0625]]

    [grid]
    steps = 1000

    [simulate]                           # optional defaults for `simulate`
    paths = 10000
    seed = 42
    store_every = 10
"""
import hashlib
import json
import sys
from dataclasses import dataclass, field

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .model import FullState, MatrixFunction, ModelSpec, Output, ou_example


@dataclass
class RunConfig:
    spec: ModelSpec
    steps: int = 1000
    simulate: dict = field(default_factory=dict)
    source: str = "<memory>"


def _matrix(value, name):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: not a numeric matrix") from exc
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1) if name == "C" else arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ConfigError(f"{name}: expected a 2-D array, got {arr.ndim}-D")
    return arr


def _matrix_function(value, name):
    if isinstance(value, dict):
        if "times" not in value or "values" not in value:
            raise ConfigError(f"{name}: time-varying form needs 'times' and 'values'")
        vals = np.asarray(value["values"], dtype=float)
        return MatrixFunction(vals, times=value["times"])
    return MatrixFunction(_matrix(value, name))


def spec_from_dict(doc):
    """Build a :class:`ModelSpec` from a parsed configuration mapping."""
    try:
        model = doc["model"]
        target = doc["target"]
        A = _matrix_function(model["A"], "A")
        B = _matrix_function(model["B"], "B")
        C = _matrix(model.get("C", np.eye(A.shape[0])), "C")
        Sigma0 = _matrix(model["Sigma0"], "Sigma0")
        T = float(model["T"])
        kind = target.get("kind", "output")
        Sig = _matrix(target["Sigma"], "target.Sigma")
    except KeyError as exc:
        raise ConfigError(f"missing configuration key {exc}") from exc
    if kind == "output":
        tgt = Output(Sig)
    elif kind == "state":
        tgt = FullState(Sig)
    else:
        raise ConfigError(f"target.kind must be 'output' or 'state', not {kind!r}")
    return ModelSpec(A=A, B=B, C=C, T=T, Sigma0=Sigma0, target=tgt,
                     name=str(model.get("name", "model")))


def load_config(path):
    """Parse a TOML configuration file into a :class:`RunConfig`."""
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    spec = spec_from_dict(doc)
    steps = int(doc.get("grid", {}).get("steps", 1000))
    if steps < 2:
        raise ConfigError("grid.steps must be at least 2")
    return RunConfig(spec=spec, steps=steps, simulate=dict(doc.get("simulate", {})),
                     source=str(path))


def example_config(name):
    if name != "ou":
        raise ConfigError(f"unknown example {name!r} (available: ou)")
    return RunConfig(spec=ou_example(), steps=1000,
                     simulate={"paths": 10_000, "seed": 42, "store_every": 10},
                     source="example:ou")


def spec_to_dict(spec):
    """Inverse of :func:`spec_from_dict` (matrices as nested lists)."""
    def mf(f):
        if f.is_constant:
            return f.values[0].tolist()
        return {"times": f.times.tolist(), "values": f.values.tolist()}

    if isinstance(spec.target, Output):
        target = {"kind": "output", "Sigma": spec.target.SigmaY.tolist()}
    else:
        target = {"kind": "state", "Sigma": spec.target.SigmaT.tolist()}
    return {
        "model": {"name": spec.name, "T": spec.T, "A": mf(spec.A), "B": mf(spec.B),
                  "C": spec.C.tolist(), "Sigma0": spec.Sigma0.tolist()},
        "target": target,
    }


def config_hash(spec, steps):
    """SHA-256 over every field that affects the solution, and nothing else."""
    doc = spec_to_dict(spec)
    doc["model"].pop("name")
    doc["grid"] = {"steps": int(steps)}
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
