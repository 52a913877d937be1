"""
Monte Carlo simulation of the controlled SDE and moment checks.

Each path draws from its own Philox stream keyed by ``(seed, path index)``,
so a batch is bit-reproducible no matter how paths are chunked.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, InsufficientPaths, IntegrationFailure
from .symmat import as_spd

CHUNK = 2048


@dataclass(frozen=True)
class SimConfig:
    n_paths: int = 10_000
    seed: int = 0
    dt: float = None
    store_every: int = 1

    def __post_init__(self):
        if int(self.n_paths) < 1:
            raise ConfigError("n_paths must be positive")
        if int(self.store_every) < 1:
            raise ConfigError("store_every must be positive")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must fit in 64 unsigned bits")


@dataclass(frozen=True)
class TrajectoryBatch:
    times: np.ndarray
    node_index: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    energy: np.ndarray
    seed: int
    dt: float
    backend: str

    @property
    def n_paths(self):
        return self.states.shape[0]


def path_rng(seed, path):
    """Counter-based generator for one path."""
    key = np.array([path, seed], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _substeps(grid, dt):
    if dt is None:
        return 1
    ratio = grid.h / dt
    s = int(round(ratio))
    if s < 1 or abs(ratio - s) > 1e-9 * ratio:
        raise ConfigError(f"dt = {dt} does not divide the grid spacing {grid.h}")
    return s


def simulate_paths(spec, sched, cfg):
    """Euler-Maruyama paths of ``dx = (A + B K) x dt + B dw`` with ``x(0) ~ N(0, Sigma0)``.

    Gains are held constant from the left grid node over substeps. States and
    controls are stored every ``cfg.store_every`` grid nodes, always including
    the last one; the control energy is accumulated at full resolution.

    Returns
    -------
    TrajectoryBatch
    """
    grid = sched.grid
    s = _substeps(grid, cfg.dt)
    steps = grid.steps * s
    dt = grid.h / s
    tsub = np.linspace(0.0, grid.T, steps + 1)
    A = spec.A.at(tsub)
    B = spec.B.at(tsub)
    K = np.repeat(sched.K, s, axis=0)[: steps + 1]
    K[-1] = sched.K[-1]
    nodes = np.arange(0, grid.steps + 1, cfg.store_every)
    if nodes[-1] != grid.steps:
        nodes = np.append(nodes, grid.steps)
    store_idx = nodes * s

    n, m = spec.n, spec.m
    L = np.linalg.cholesky(as_spd(spec.Sigma0, "Sigma0"))
    sqdt = np.sqrt(dt)
    n_paths = int(cfg.n_paths)
    states = np.empty((n_paths, nodes.size, n))
    controls = np.empty((n_paths, nodes.size, m))
    energy = np.empty(n_paths)
    for start in range(0, n_paths, CHUNK):
        stop = min(start + CHUNK, n_paths)
        xi0 = np.empty((stop - start, n))
        dW = np.empty((stop - start, steps, m))
        for j, path in enumerate(range(start, stop)):
            rng = path_rng(int(cfg.seed), path)
            xi0[j] = rng.standard_normal(n)
            dW[j] = rng.standard_normal((steps, m))
        dW *= sqdt
        x0 = np.zeros((stop - start, n))
        # fixed accumulation order, independent of chunk size
        for i in range(n):
            for l in range(i + 1):
                x0[:, i] += L[i, l] * xi0[:, l]
        try:
            st, ct, en = kernels.em_paths(A, B, K, x0, dW, dt, store_idx)
        except FloatingPointError as exc:
            raise IntegrationFailure(f"IntegrationFailure: {exc}") from exc
        states[start:stop] = st
        controls[start:stop] = ct
        energy[start:stop] = en
    return TrajectoryBatch(times=grid.nodes[nodes], node_index=nodes, states=states,
                           controls=controls, energy=energy, seed=int(cfg.seed), dt=dt,
                           backend=kernels.BACKEND)


def empirical_moments(batch, node):
    """Sample mean and unbiased covariance of the state at stored node ``node``.

    ``node`` indexes the stored nodes of the batch (``-1`` is the terminal one).
    """
    if batch.n_paths < 2:
        raise InsufficientPaths(f"need at least 2 paths, got {batch.n_paths}")
    X = batch.states[:, node, :]
    mean = X.mean(axis=0)
    cov = np.atleast_2d(np.cov(X, rowvar=False, ddof=1))
    return mean, cov


def cov_standard_errors(Sigma, n_paths):
    """Standard errors of sample covariance entries for Gaussian data.

    ``Var(s_ij) = (Sigma_ij^2 + Sigma_ii Sigma_jj) / (n - 1)``.
    """
    d = np.diag(Sigma)
    return np.sqrt((Sigma ** 2 + np.outer(d, d)) / (n_paths - 1))


@dataclass(frozen=True)
class Tube:
    times: np.ndarray
    radii: np.ndarray
    axes: np.ndarray
    level: float


def tube_radii(cov, level=3.0):
    """Principal semi-axes of ``{x : x' Sigma(t)^{-1} x <= level^2}`` per node.

    Accepts a :class:`~covbridge.dynbridge.CovSchedule` or a stack of covariances.
    Radii are in increasing order with matching columns of ``axes``.
    """
    Sig = getattr(cov, "Sigma", cov)
    Sig = np.asarray(Sig, dtype=float)
    if Sig.ndim == 2:
        Sig = Sig[None]
    for k in range(Sig.shape[0]):
        as_spd(Sig[k], f"Sigma at node {k}")
    w, U = np.linalg.eigh(0.5 * (Sig + np.swapaxes(Sig, 1, 2)))
    times = cov.grid.nodes if hasattr(cov, "grid") else np.arange(Sig.shape[0], dtype=float)
    return Tube(times=times, radii=level * np.sqrt(w), axes=U, level=float(level))


def validate_batch(batch, pipeline, nsigma=3.0):
    """Compare empirical terminal moments and energy with their predictions.

    Returns a dict of named checks; each has ``value``, ``expected``,
    ``stderr``, ``z`` and ``pass``. The overall verdict is under ``"pass"``.
    """
    sol = pipeline.sol
    n_paths = batch.n_paths
    mean, cov = empirical_moments(batch, -1)
    Sig_T = pipeline.cov.Sigma[-1]
    checks = {}

    Cm = np.atleast_2d(sol.C)
    out_pred = Cm @ Sig_T @ Cm.T
    out_emp = Cm @ cov @ Cm.T
    out_se = cov_standard_errors(out_pred, n_paths)
    for i in range(out_pred.shape[0]):
        for j in range(i, out_pred.shape[1]):
            checks[f"output_cov[{i},{j}]"] = _check(out_emp[i, j], out_pred[i, j], out_se[i, j], nsigma)

    se = cov_standard_errors(Sig_T, n_paths)
    for i in range(Sig_T.shape[0]):
        for j in range(i, Sig_T.shape[1]):
            checks[f"state_cov[{i},{j}]"] = _check(cov[i, j], Sig_T[i, j], se[i, j], nsigma)

    mse = np.sqrt(np.diag(Sig_T) / n_paths)
    for i in range(mean.size):
        checks[f"mean[{i}]"] = _check(mean[i], 0.0, mse[i], nsigma)

    e_se = float(np.std(batch.energy, ddof=1) / np.sqrt(n_paths)) if n_paths > 1 else np.inf
    checks["energy"] = _check(float(np.mean(batch.energy)), pipeline.energy.Jdyn, e_se, nsigma)
    return {"checks": checks, "pass": all(c["pass"] for c in checks.values()),
            "empirical_terminal_cov": cov, "empirical_terminal_mean": mean,
            "empirical_energy": float(np.mean(batch.energy)), "n_paths": n_paths}


def _check(value, expected, stderr, nsigma):
    value, expected, stderr = float(value), float(expected), float(stderr)
    z = (value - expected) / stderr if stderr > 0 else (0.0 if value == expected else np.inf)
    return {"value": value, "expected": expected, "stderr": stderr, "z": z,
            "pass": bool(abs(z) <= nsigma)}
