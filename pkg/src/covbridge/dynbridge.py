"""
Time-domain controller built from a static solution.

The optimal control is ``u = -B(t)' Pi(t) x`` with ``Pi(T) = Z^{-1} - M_{0,T}^{-1}``
(rank at most ``p``). ``Pi`` is propagated in closed form,

    Pi(t) = Phi(T,t)' Pi_T (I + M_{t,T} Pi_T)^{-1} Phi(T,t),

which stays valid when ``Pi_T`` is singular. The closed-loop covariance and
the forward Lyapunov factor ``P(t)`` are integrated by RK4 and used to check
the boundary factorization ``Sigma(t)^{-1} = P(t)^{-1} + Pi(t)``.
"""
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from . import kernels
from .errors import (DimensionMismatch, IntegrationFailure, NotControllable,
                     NotPositiveDefinite, SingularFlow)
from .symmat import spd_inv, sym

SINGULAR_COND = 1e12
ENERGY_EPS = 1e-9


@dataclass(frozen=True)
class GainSchedule:
    """``Pi(t)`` and ``K(t) = -B(t)' Pi(t)``.

    ``Pi`` and ``K`` are node values; the ``_fine`` arrays add the half-step
    midpoints that the RK4 covariance sweep needs.
    """
    grid: object
    Pi_fine: np.ndarray
    K_fine: np.ndarray

    @property
    def Pi(self):
        return self.Pi_fine[::2]

    @property
    def K(self):
        return self.K_fine[::2]

    @property
    def times(self):
        return self.grid.nodes


@dataclass(frozen=True)
class CovSchedule:
    grid: object
    Sigma: np.ndarray
    Pmat: np.ndarray

    @property
    def times(self):
        return self.grid.nodes


@dataclass(frozen=True)
class EnergyReport:
    Jdyn: float
    Jstatic: float
    relgap: float


def terminal_pi(sol, moments):
    """Terminal weight ``Pi_T = Z^{-1} - M_{0,T}^{-1}``.

    Equals ``C' Mlag C``; the agreement is checked and a large disagreement
    raises ``ValueError``.
    """
    try:
        Minv = spd_inv(moments.MT, "controllability Gramian")
    except NotPositiveDefinite as exc:
        raise NotControllable(f"NotControllable: {exc}") from exc
    PiT = sym(spd_inv(sol.Z, "Z") - Minv)
    alt = sym(sol.C.T @ np.atleast_2d(sol.Mlag) @ sol.C)
    scale = 1.0 + np.linalg.norm(PiT)
    if np.linalg.norm(PiT - alt) > 1e-6 * scale:
        raise ValueError("terminal weight disagrees with the Lagrange multiplier "
                         f"({np.linalg.norm(PiT - alt):.3e})")
    return PiT


def _cond_vs_identity(G):
    """Condition number with the largest singular value floored at 1.

    Unlike the plain ratio this flags a near-zero scalar as singular.
    """
    sv = np.linalg.svd(G, compute_uv=False)
    return np.maximum(sv[..., 0], 1.0) / sv[..., -1]


def pi_schedule(PiT, moments):
    """Closed-form ``Pi(t)`` on the half-step grid and the feedback gains.

    Raises
    ------
    SingularFlow
        If ``I + M_{t,T} Pi_T`` is numerically singular at some time.
    """
    PiT = sym(PiT)
    n = PiT.shape[0]
    if moments.phi_to_T_fine.shape[1] != n:
        raise DimensionMismatch("Pi_T and moments have different state dimension")
    Psi = moments.phi_to_T_fine
    W = moments.gram_to_T_fine
    G = np.eye(n)[None] + W @ PiT
    cond = _cond_vs_identity(G)
    if not np.all(cond < SINGULAR_COND):
        k = int(np.argmax(~(cond < SINGULAR_COND)))
        raise SingularFlow(f"SingularFlow: I + M_(t,T) Pi_T singular at t = "
                           f"{k * moments.grid.h / 2:.4g} (cond {cond[k]:.3e})")
    # Pi_T (I + W Pi_T)^{-1} = ((I + W Pi_T)^{-T} Pi_T)^T with symmetric Pi_T, W
    core = np.swapaxes(np.linalg.solve(np.swapaxes(G, 1, 2), np.broadcast_to(PiT, G.shape)), 1, 2)
    Pi = np.swapaxes(Psi, 1, 2) @ core @ Psi
    Pi = 0.5 * (Pi + np.swapaxes(Pi, 1, 2))
    Pi[-1] = PiT
    K = -np.swapaxes(moments.B_fine, 1, 2) @ Pi
    return GainSchedule(grid=moments.grid, Pi_fine=Pi, K_fine=K)


def _coefficients(spec, grid):
    tf = grid.refined(2)
    Af = spec.A.at(tf)
    Bf = spec.B.at(tf)
    return Af, Bf, Bf @ np.swapaxes(Bf, 1, 2)


def propagate_closed_loop(spec, sched):
    """Covariance under the optimal feedback and the forward factor ``P(t)``.

    ``Sigma`` solves ``Sigma' = Acl Sigma + Sigma Acl' + BB'`` from ``Sigma0``
    with ``Acl = A - BB' Pi``. ``P`` solves ``P' = A P + P A' + BB'`` from
    ``P(0) = (Sigma0^{-1} - Pi(0))^{-1}``, which must be nonsingular but can be
    indefinite when the target is tighter than the prior.
    """
    grid = sched.grid
    Af, Bf, BBf = _coefficients(spec, grid)
    Acl = Af - BBf @ sched.Pi_fine
    Sigma = kernels.lyap_rk4(Acl, BBf, spec.Sigma0, grid.h)
    S0inv = spd_inv(spec.Sigma0, "Sigma0")
    P0inv = sym(S0inv - sched.Pi_fine[0])
    # symmetric and nonsingular, not necessarily definite
    ref = max(np.linalg.norm(S0inv, 2), np.linalg.norm(sched.Pi_fine[0], 2))
    if not _cond_vs_identity(P0inv / ref) < SINGULAR_COND:
        raise SingularFlow("SingularFlow: Sigma0^{-1} - Pi(0) is singular")
    P0 = sym(np.linalg.inv(P0inv))
    Pmat = kernels.lyap_rk4(Af, BBf, P0, grid.h)
    if not (np.all(np.isfinite(Sigma)) and np.all(np.isfinite(Pmat))):
        raise IntegrationFailure("closed-loop covariance sweep produced non-finite values")
    return CovSchedule(grid=grid, Sigma=Sigma, Pmat=Pmat)


def _d4(F, delta):
    """Fourth-order central difference of a stacked series, interior points only."""
    return (-F[4:] + 8.0 * F[3:-1] - 8.0 * F[1:-3] + F[:-4]) / (12.0 * delta)


def riccati_residual(sched, spec):
    """Max over interior nodes of ``|Pi' + A'Pi + Pi A - Pi BB' Pi| / (1 + |Pi|^2)``."""
    grid = sched.grid
    Af, _, BBf = _coefficients(spec, grid)
    Pi = sched.Pi_fine
    dPi = _d4(Pi, grid.h / 2.0)
    idx = np.arange(2, Pi.shape[0] - 2)
    # interior nodes are the even fine indices
    sel = idx % 2 == 0
    P = Pi[idx][sel]
    A = Af[idx][sel]
    BB = BBf[idx][sel]
    At = np.swapaxes(A, 1, 2)
    R = dPi[sel] + At @ P + P @ A - P @ BB @ P
    scale = 1.0 + np.linalg.norm(P, axis=(1, 2)) ** 2
    return float(np.max(np.linalg.norm(R, axis=(1, 2)) / scale))


def q_residual(sched, spec, cond_max=1e8):
    """Residual of ``Q' = AQ + QA' - BB'`` for ``Q = Pi^{-1}`` where ``Pi`` is invertible.

    Returns ``nan`` when no five consecutive fine points have invertible ``Pi``.
    """
    grid = sched.grid
    Af, _, BBf = _coefficients(spec, grid)
    Pi = sched.Pi_fine
    ok = np.linalg.cond(Pi) < cond_max
    Q = np.where(ok[:, None, None], np.linalg.pinv(Pi), np.nan)
    dQ = _d4(Q, grid.h / 2.0)
    Qi = Q[2:-2]
    R = dQ - Af[2:-2] @ Qi - Qi @ np.swapaxes(Af[2:-2], 1, 2) + BBf[2:-2]
    r = np.linalg.norm(R, axis=(1, 2)) / (1.0 + np.linalg.norm(Qi, axis=(1, 2)))
    r = r[np.isfinite(r)]
    return float(np.max(r)) if r.size else float("nan")


def _lyap_fd_residual(X, F, Q, h):
    """Residual of ``X' = F X + X F' + Q`` at nodes, relative to ``1 + |X|``."""
    dX = _d4(X, h)
    Xi = X[2:-2]
    Fi = F[2:-2]
    R = dX - Fi @ Xi - Xi @ np.swapaxes(Fi, 1, 2) - Q[2:-2]
    return float(np.max(np.linalg.norm(R, axis=(1, 2)) / (1.0 + np.linalg.norm(Xi, axis=(1, 2)))))


def pq_boundary_residuals(sched, cov, spec, sol):
    """Residuals of the coupled boundary conditions and the Lyapunov flows.

    Returns
    -------
    dict
        ``r0`` and ``rT``: factorization ``Sigma^{-1} = P^{-1} + Pi`` at the
        ends against ``Sigma0`` and ``X``; ``rLyap``: forward Lyapunov residual
        of ``P``; ``rSigma``: closed-loop Lyapunov residual of ``Sigma``;
        ``rFactor``: interior factorization identity; ``rRiccati`` and ``rQ``.
    """
    grid = sched.grid
    Af, _, BBf = _coefficients(spec, grid)
    Pn = cov.Pmat
    Pi = sched.Pi
    S0inv = spd_inv(spec.Sigma0, "Sigma0")
    Xinv = spd_inv(sol.X, "X")
    r0 = np.linalg.norm(S0inv - np.linalg.inv(Pn[0]) - Pi[0]) / np.linalg.norm(S0inv)
    rT = np.linalg.norm(Xinv - np.linalg.inv(Pn[-1]) - Pi[-1]) / np.linalg.norm(Xinv)
    Anode, BBnode = Af[::2], BBf[::2]
    rLyap = _lyap_fd_residual(Pn, Anode, BBnode, grid.h)
    Acl = Anode - BBnode @ Pi
    rSigma = _lyap_fd_residual(cov.Sigma, Acl, BBnode, grid.h)
    Sinv = np.linalg.inv(cov.Sigma)
    F = Sinv - np.linalg.inv(Pn) - Pi
    rFactor = float(np.max(np.linalg.norm(F, axis=(1, 2)) / np.linalg.norm(Sinv, axis=(1, 2))))
    return {
        "r0": float(r0),
        "rT": float(rT),
        "rLyap": rLyap,
        "rSigma": rSigma,
        "rFactor": rFactor,
        "rRiccati": riccati_residual(sched, spec),
        "rQ": q_residual(sched, spec),
    }


def expected_energy(sched, cov, sol):
    """Quadrature of ``E|u|^2 = tr(K Sigma K')`` against the static prediction."""
    if sched.K.shape[0] != cov.Sigma.shape[0]:
        raise DimensionMismatch("gain and covariance schedules are on different grids")
    K = sched.K
    power = np.einsum("kij,kjl,kil->k", K, cov.Sigma, K)
    Jdyn = float(simpson(power, x=cov.grid.nodes))
    Jstatic = float(sol.Jpred)
    relgap = abs(Jdyn - Jstatic) / max(Jstatic, ENERGY_EPS)
    return EnergyReport(Jdyn=Jdyn, Jstatic=Jstatic, relgap=relgap)


@dataclass(frozen=True)
class Pipeline:
    """Everything computed for one model on one grid."""
    spec: object
    moments: object
    sol: object
    PiT: np.ndarray
    sched: GainSchedule
    cov: CovSchedule
    energy: EnergyReport
    residuals: dict


def solve_pipeline(spec, grid=None):
    """Prior moments, static solve, gains, covariance flow and energy in one call."""
    from .model import TimeGrid, assert_controllable, compute_prior_moments
    from .staticbridge import solve_bridge, static_residuals

    grid = grid or TimeGrid(spec.T)
    moments = compute_prior_moments(spec, grid)
    assert_controllable(moments)
    sol = solve_bridge(spec, moments)
    PiT = terminal_pi(sol, moments)
    sched = pi_schedule(PiT, moments)
    cov = propagate_closed_loop(spec, sched)
    energy = expected_energy(sched, cov, sol)
    residuals = dict(static_residuals(sol))
    residuals.update(pq_boundary_residuals(sched, cov, spec, sol))
    residuals["terminal_cov"] = float(np.linalg.norm(cov.Sigma[-1] - sol.X)
                                      / np.linalg.norm(sol.X))
    residuals["terminal_output"] = float(
        np.linalg.norm(sol.C @ cov.Sigma[-1] @ sol.C.T - sol.SigmaY) / np.linalg.norm(sol.SigmaY))
    residuals["energy_relgap"] = energy.relgap
    return Pipeline(spec=spec, moments=moments, sol=sol, PiT=PiT, sched=sched, cov=cov,
                    energy=energy, residuals=residuals)
