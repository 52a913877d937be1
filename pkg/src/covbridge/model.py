"""
Linear Gauss-Markov model and the statistics of its uncontrolled flow.

The model is ``dx = A(t) x dt + B(t) u dt + B(t) dw`` on ``[0, T]`` with
``x(0) ~ N(0, Sigma0)`` and a terminal output ``y(T) = C x(T)``. This module
computes, on a uniform time grid, the transition matrices ``Phi(t, 0)`` and
``Phi(T, t)``, the controllability Gramians ``M_{0,t}`` and ``M_{t,T}``, and
the prior joint covariance of ``(x(0), x(T))`` together with the blocks of
its inverse.
"""
from dataclasses import dataclass, field
import warnings

import numpy as np

from . import kernels
from .errors import (ConfigError, DimensionMismatch, IntegrationFailure, NotControllable,
                     NotPositiveDefinite)
from .symmat import as_spd, spd_inv, sym

CTRL_TOL = 1e-10
CTRL_WARN = 1e-7


class MatrixFunction:
    """A matrix-valued function of time, constant or linearly interpolated.

    Parameters
    ----------
    value : array_like
        Either a single ``(r, c)`` matrix or a stack ``(k, r, c)`` of samples.
    times : array_like, optional
        Strictly increasing sample times, required with a stack of samples.
        Outside the sampled range the end values are held.
    """

    def __init__(self, value, times=None):
        value = np.asarray(value, dtype=float)
        if times is None:
            if value.ndim == 1:
                value = value.reshape(-1, 1)
            if value.ndim != 2:
                raise DimensionMismatch("constant matrix must be 2-D")
            self.times = None
            self.values = value[None]
        else:
            times = np.asarray(times, dtype=float)
            if value.ndim == 2:
                value = value[:, :, None]
            if value.ndim != 3 or value.shape[0] != times.size:
                raise DimensionMismatch("need one matrix sample per time")
            if times.size < 2 or np.any(np.diff(times) <= 0):
                raise ConfigError("sample times must be strictly increasing")
            self.times = times
            self.values = value

    @property
    def shape(self):
        return self.values.shape[1:]

    @property
    def is_constant(self):
        return self.times is None

    def at(self, t):
        """Evaluate at an array of times; returns shape ``(len(t), r, c)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.times is None:
            return np.broadcast_to(self.values[0], (t.size,) + self.shape).copy()
        idx = np.clip(np.searchsorted(self.times, t, side="right") - 1,
                      0, self.times.size - 2)
        t0 = self.times[idx]
        t1 = self.times[idx + 1]
        w = np.clip((t - t0) / (t1 - t0), 0.0, 1.0)[:, None, None]
        return (1.0 - w) * self.values[idx] + w * self.values[idx + 1]

    def __call__(self, t):
        return self.at([t])[0]


@dataclass(frozen=True)
class FullState:
    """Terminal target prescribing the whole state covariance."""
    SigmaT: np.ndarray


@dataclass(frozen=True)
class Output:
    """Terminal target prescribing only the covariance of ``C x(T)``."""
    SigmaY: np.ndarray


@dataclass
class ModelSpec:
    A: MatrixFunction
    B: MatrixFunction
    C: np.ndarray
    T: float
    Sigma0: np.ndarray
    target: object
    name: str = "model"

    def __post_init__(self):
        if not isinstance(self.A, MatrixFunction):
            self.A = MatrixFunction(self.A)
        if not isinstance(self.B, MatrixFunction):
            self.B = MatrixFunction(self.B)
        self.C = np.atleast_2d(np.asarray(self.C, dtype=float))
        self.T = float(self.T)
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got {self.A.shape}")
        if self.B.shape[0] != n:
            raise DimensionMismatch(f"B must have {n} rows, got {self.B.shape}")
        if self.C.shape[1] != n or self.C.shape[0] > n:
            raise DimensionMismatch(f"C must be p x {n} with p <= {n}, got {self.C.shape}")
        if not self.T > 0:
            raise ConfigError("horizon T must be positive")
        self.Sigma0 = as_spd(self.Sigma0, "Sigma0")
        if self.Sigma0.shape != (n, n):
            raise DimensionMismatch("Sigma0 must be n x n")
        if isinstance(self.target, FullState):
            St = as_spd(self.target.SigmaT, "target SigmaT")
            if St.shape != (n, n):
                raise DimensionMismatch("full-state target must be n x n")
            self.target = FullState(St)
        elif isinstance(self.target, Output):
            Sy = as_spd(self.target.SigmaY, "target SigmaY")
            if Sy.shape != (self.p, self.p):
                raise DimensionMismatch(f"output target must be {self.p} x {self.p}")
            self.target = Output(Sy)
        else:
            raise ConfigError("target must be FullState or Output")

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]


@dataclass(frozen=True)
class TimeGrid:
    T: float
    steps: int = 1000

    def __post_init__(self):
        if int(self.steps) < 2:
            raise ConfigError("grid needs at least 2 steps")
        if not self.T > 0:
            raise ConfigError("horizon T must be positive")

    @property
    def h(self):
        return self.T / self.steps

    @property
    def nodes(self):
        return np.linspace(0.0, self.T, self.steps + 1)

    def refined(self, factor):
        """Times at ``factor`` points per step (``factor * steps + 1`` total)."""
        return np.linspace(0.0, self.T, factor * self.steps + 1)


@dataclass(frozen=True)
class PriorMoments:
    """Second-order statistics of the uncontrolled model.

    Grids with a ``_fine`` suffix hold values at every half step (index
    ``2k`` is node ``t_k``); the unsuffixed properties return node values.
    """
    grid: TimeGrid
    Sigma0: np.ndarray
    A_fine: np.ndarray
    B_fine: np.ndarray
    phi_from0_fine: np.ndarray
    gram_from0_fine: np.ndarray
    phi_to_T_fine: np.ndarray
    gram_to_T_fine: np.ndarray
    S: np.ndarray
    Nblk: np.ndarray
    Vblk: np.ndarray
    Pblk: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def phi_from0(self):
        return self.phi_from0_fine[::2]

    @property
    def gram_from0(self):
        return self.gram_from0_fine[::2]

    @property
    def phi_to_T(self):
        return self.phi_to_T_fine[::2]

    @property
    def gram_to_T(self):
        return self.gram_to_T_fine[::2]

    @property
    def PhiT0(self):
        """``Phi(T, 0)``."""
        return self.phi_from0_fine[-1]

    @property
    def MT(self):
        """Controllability Gramian ``M_{0,T}``."""
        return self.gram_from0_fine[-1]

    @property
    def ST(self):
        """Prior terminal covariance."""
        n = self.Sigma0.shape[0]
        return self.S[n:, n:]

    @property
    def Sinv(self):
        return np.block([[self.Nblk, self.Vblk], [self.Vblk.T, self.Pblk]])


def _check_finite(name, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise IntegrationFailure(f"{name}: integrator produced non-finite values")


def compute_prior_moments(spec, grid=None):
    """Transition matrices, Gramians and prior joint covariance on ``grid``.

    ``Phi(t, 0)`` and ``M_{0,t}`` are integrated forward, ``Phi(T, t)`` and
    ``M_{t,T}`` backward, each by classical RK4 on the half-step grid so that
    downstream RK4 sweeps on the node grid have midpoint values available.

    Parameters
    ----------
    spec : ModelSpec
    grid : TimeGrid, optional
        Defaults to 1000 steps over ``[0, spec.T]``.

    Returns
    -------
    PriorMoments
    """
    if grid is None:
        grid = TimeGrid(spec.T)
    if not np.isclose(grid.T, spec.T, rtol=1e-12, atol=0.0):
        raise ConfigError(f"grid horizon {grid.T} differs from model horizon {spec.T}")
    n = spec.n
    hf = grid.h / 2.0
    tq = grid.refined(4)
    Aq = spec.A.at(tq)
    Bq = spec.B.at(tq)
    BBq = np.einsum("kij,klj->kil", Bq, Bq)

    phi = kernels.linear_rk4(Aq, np.eye(n), hf)
    gram0 = kernels.lyap_rk4(Aq, BBq, np.zeros((n, n)), hf)
    psi, gramT = kernels.gram_backward(Aq, BBq, hf)
    _check_finite("transition/Gramian sweep", phi, gram0, psi, gramT)

    Sigma0 = spec.Sigma0
    PhiT = phi[-1]
    MT = sym(gram0[-1])
    ST = sym(PhiT @ Sigma0 @ PhiT.T + MT)
    S = np.block([[Sigma0, Sigma0 @ PhiT.T], [PhiT @ Sigma0, ST]])
    S = sym(S)

    # blocks of S^{-1} from the Schur complement of Sigma0 in S, which is M_{0,T}
    try:
        Minv = spd_inv(MT, "controllability Gramian")
    except NotPositiveDefinite:
        # left for assert_controllable to report
        Minv = np.full((n, n), np.nan)
    Pblk = Minv
    Vblk = -PhiT.T @ Minv
    Nblk = sym(spd_inv(Sigma0, "Sigma0") + PhiT.T @ Minv @ PhiT)

    return PriorMoments(
        grid=grid,
        Sigma0=Sigma0,
        A_fine=Aq[::2].copy(),
        B_fine=Bq[::2].copy(),
        phi_from0_fine=phi,
        gram_from0_fine=gram0,
        phi_to_T_fine=psi,
        gram_to_T_fine=gramT,
        S=S,
        Nblk=Nblk,
        Vblk=Vblk,
        Pblk=Pblk,
        meta={"backend": kernels.BACKEND},
    )


def controllability_ratio(moments):
    w = np.linalg.eigvalsh(sym(moments.MT))
    if not np.all(np.isfinite(w)) or w[-1] <= 0.0:
        return 0.0
    return float(w[0] / w[-1])


def assert_controllable(moments, tol=CTRL_TOL):
    """Raise :class:`NotControllable` unless ``M_{0,T}`` is nonsingular.

    The test is ``lambda_min > tol * lambda_max`` on the Gramian over the
    whole horizon. Ratios between ``tol`` and ``CTRL_WARN`` only warn.
    """
    ratio = controllability_ratio(moments)
    if not ratio > tol:
        raise NotControllable(
            f"NotControllable: Gramian eigenvalue ratio {ratio:.3e} <= {tol:.1e}", ratio)
    if ratio < CTRL_WARN:
        warnings.warn(f"controllability Gramian is ill conditioned (ratio {ratio:.3e})",
                      RuntimeWarning, stacklevel=2)


def ou_example():
    """Stochastic oscillator with unit stiffness and friction, momentum target 1/16.

    State ``x = (q, p)``; the output is the momentum ``p``.
    """
    return ModelSpec(
        A=np.array([[0.0, 1.0], [-1.0, -1.0]]),
        B=np.array([[0.0], [1.0]]),
        C=np.array([[0.0, 1.0]]),
        T=1.0,
        Sigma0=0.5 * np.eye(2),
        target=Output(np.array([[1.0 / 16.0]])),
        name="ou",
    )
