"""
Static maximum-entropy problem over endpoint covariances.

Given the prior joint covariance ``S`` of ``(x(0), x(T))``, find the joint
covariance ``[[Sigma0, Y], [Y', X]]`` closest to it in relative entropy
subject to ``C X C' = SigmaY``. The closed-form solution works in
coordinates where ``C = [I | 0]``; :func:`oracle_minimize` solves the same
convex program by projected gradient descent for cross-checking.
"""
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConstraintInfeasible, DimensionMismatch, NoConvergence, RankDeficient
from .model import FullState, Output
from .symmat import as_spd, kl_gaussian, logdet_spd, quadratic_solve, spd_inv, sym, sym_inv

CONSTRAINT_TOL = 1e-8


@dataclass(frozen=True)
class OutputTransform:
    """State change ``x = Tmat @ xt`` that puts the output map in normal form."""
    Tmat: np.ndarray
    TmatInv: np.ndarray


@dataclass(frozen=True)
class StaticSolution:
    """Optimal endpoint joint covariance and its multiplier.

    ``X``, ``Y`` and ``Z`` are in the original coordinates. The ``normal``
    dict keeps the normal-form quantities (``Sigma0``, ``V``, ``P``, ``Z``,
    ``Ahat``) that the residual checks need.
    """
    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    Mlag: np.ndarray
    objective: float
    Jpred: float
    C: np.ndarray
    SigmaY: np.ndarray
    Sigma0: np.ndarray
    transform: OutputTransform
    normal: dict = field(default_factory=dict, repr=False)

    @property
    def joint(self):
        return sym(np.block([[self.Sigma0, self.Y], [self.Y.T, self.X]]))


def output_transform(C, tol=1e-10):
    """Invertible ``Tmat`` with ``C @ Tmat = [I | 0]``.

    The first ``p`` columns are the pseudoinverse ``C'(CC')^{-1}``; the rest
    are an orthonormal basis of the null space of ``C``, each oriented so its
    first nonzero entry is positive.
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    p, n = C.shape
    if p > n:
        raise DimensionMismatch(f"C has more rows ({p}) than columns ({n})")
    _, s, Vt = np.linalg.svd(C)
    if s.size < p or s[-1] <= tol * max(s[0], 1.0):
        raise RankDeficient(f"RankDeficient: C has rank < {p} (singular values {s})")
    pinv = C.T @ np.linalg.inv(C @ C.T)
    null = Vt[p:].T.copy()
    for j in range(null.shape[1]):
        col = null[:, j]
        lead = col[np.flatnonzero(np.abs(col) > 1e-12)[0]]
        if lead < 0:
            null[:, j] = -col
    Tmat = np.hstack([pinv, null])
    return OutputTransform(Tmat=Tmat, TmatInv=np.linalg.inv(Tmat))


def static_objective(joint, S):
    """``-ln det joint + tr(S^{-1} joint)``."""
    joint = as_spd(joint, "joint covariance")
    S = as_spd(S, "S")
    if joint.shape != S.shape:
        raise DimensionMismatch(f"shapes {joint.shape} and {S.shape} differ")
    return -logdet_spd(joint) + float(np.trace(np.linalg.solve(S, joint)))


def _target(spec):
    if isinstance(spec.target, Output):
        return spec.C, spec.target.SigmaY
    return np.eye(spec.n), spec.target.SigmaT


def _normal_form_solve(Sig0, V, P, SigmaY):
    """Solve in coordinates where ``C = [I | 0]``; returns ``(Z, Mlag, Ahat)``."""
    n = Sig0.shape[0]
    p = SigmaY.shape[0]
    K = sym(V.T @ Sig0 @ V)
    if p == n:
        Z = quadratic_solve(K, SigmaY)
        return Z, sym(sym_inv(Z) - P), K
    P11, P12 = P[:p, :p], P[:p, p:]
    P21, P22 = P[p:, :p], P[p:, p:]
    P22inv = spd_inv(P22, "P22")
    F = np.hstack([np.eye(p), -P12 @ P22inv])
    Ahat = sym(F @ K @ F.T)
    Z11 = quadratic_solve(Ahat, SigmaY)
    Z21 = -P22inv @ P21 @ Z11
    Z12 = Z21.T
    Z22 = P22inv - Z21 @ P12 @ P22inv
    Z = sym(np.block([[Z11, Z12], [Z21, Z22]]))
    Z11inv = sym_inv(Z11)
    Mlag = sym(Z11inv @ (np.eye(p) - Z12 @ P21) - P11)
    return Z, Mlag, Ahat


def _finish(spec, moments, C, SigmaY, tr, Zt, Mlag, Ahat, Sig0t, Vt, Pt):
    T = tr.Tmat
    Yt = -Sig0t @ Vt @ Zt
    Xt = sym(Zt + Zt @ Vt.T @ Sig0t @ Vt @ Zt)
    X = sym(T @ Xt @ T.T)
    Y = T @ Yt @ T.T
    Z = sym(T @ Zt @ T.T)
    gap = np.linalg.norm(C @ X @ C.T - SigmaY) / (1.0 + np.linalg.norm(SigmaY))
    if not gap <= CONSTRAINT_TOL:
        raise ConstraintInfeasible(
            f"ConstraintInfeasible: |CXC' - SigmaY| relative residual {gap:.3e}")
    joint = sym(np.block([[spec.Sigma0, Y], [Y.T, X]]))
    S = moments.S
    return StaticSolution(
        X=X, Y=Y, Z=Z, Mlag=Mlag,
        objective=static_objective(joint, S),
        Jpred=2.0 * kl_gaussian(joint, S),
        C=C, SigmaY=SigmaY, Sigma0=spec.Sigma0, transform=tr,
        normal={"Sigma0": Sig0t, "V": Vt, "P": Pt, "Z": Zt, "Y": Yt, "X": Xt,
                "Ahat": Ahat, "C": C @ T},
    )


def _congruences(spec, moments, tr):
    T, Ti = tr.Tmat, tr.TmatInv
    Sig0t = sym(Ti @ spec.Sigma0 @ Ti.T)
    Vt = T.T @ moments.Vblk @ T
    Pt = sym(T.T @ moments.Pblk @ T)
    return Sig0t, Vt, Pt


def solve_output_bridge(spec, moments):
    """Closed-form optimum for an output-covariance target.

    Parameters
    ----------
    spec : ModelSpec
        Must carry an :class:`Output` target.
    moments : PriorMoments

    Returns
    -------
    StaticSolution
    """
    if not isinstance(spec.target, Output):
        raise TypeError("solve_output_bridge needs an Output target")
    C, SigmaY = spec.C, spec.target.SigmaY
    tr = output_transform(C)
    Sig0t, Vt, Pt = _congruences(spec, moments, tr)
    Zt, Mlag, Ahat = _normal_form_solve(Sig0t, Vt, Pt, SigmaY)
    return _finish(spec, moments, C, SigmaY, tr, Zt, Mlag, Ahat, Sig0t, Vt, Pt)


def solve_state_bridge(spec, moments):
    """Closed-form optimum when the whole terminal covariance is prescribed."""
    if not isinstance(spec.target, FullState):
        raise TypeError("solve_state_bridge needs a FullState target")
    n = spec.n
    tr = OutputTransform(np.eye(n), np.eye(n))
    Sig0t, Vt, Pt = _congruences(spec, moments, tr)
    SigmaT = spec.target.SigmaT
    Zt, Mlag, Ahat = _normal_form_solve(Sig0t, Vt, Pt, SigmaT)
    sol = _finish(spec, moments, np.eye(n), SigmaT, tr, Zt, Mlag, Ahat, Sig0t, Vt, Pt)
    # the constraint pins X exactly
    return replace(sol, X=SigmaT)


def solve_bridge(spec, moments):
    """Dispatch on the target type."""
    if isinstance(spec.target, Output):
        return solve_output_bridge(spec, moments)
    return solve_state_bridge(spec, moments)


def static_residuals(sol):
    """Stationarity, constraint and quadratic residuals of a static solution.

    Returns a dict of relative residual norms keyed ``stat_x`` and ``stat_y``
    (stationarity in X and Y), ``constraint`` (``C X C' = SigmaY``),
    ``quadratic`` (``Z11 + Z11 Ahat Z11 = SigmaY``) and ``mlag_sym``.
    """
    nf = sol.normal
    Sig0, V, P, Z, Y, X = (nf[k] for k in ("Sigma0", "V", "P", "Z", "Y", "X"))
    Ct = nf["C"]
    p = sol.SigmaY.shape[0]
    Zslack = sym(X - Y.T @ np.linalg.solve(Sig0, Y))
    Mlag = np.atleast_2d(sol.Mlag)
    r_x = np.linalg.norm(P + Ct.T @ Mlag @ Ct - np.linalg.inv(Zslack)) / (1.0 + np.linalg.norm(P))
    r_y = np.linalg.norm(V + np.linalg.solve(Sig0, Y) @ np.linalg.inv(Zslack)) \
        / (1.0 + np.linalg.norm(V))
    r_c = np.linalg.norm(sol.C @ sol.X @ sol.C.T - sol.SigmaY) / (1.0 + np.linalg.norm(sol.SigmaY))
    Z11 = Z[:p, :p]
    Ahat = nf["Ahat"]
    r_q = np.linalg.norm(Z11 + Z11 @ Ahat @ Z11 - sol.SigmaY) / (1.0 + np.linalg.norm(sol.SigmaY))
    rsym = np.max(np.abs(Mlag - Mlag.T), initial=0.0)
    return {"stat_x": float(r_x), "stat_y": float(r_y), "constraint": float(r_c),
            "quadratic": float(r_q), "mlag_sym": float(rsym)}


def oracle_minimize(spec, moments, max_iter=100_000, gtol=1e-9):
    """Projected gradient descent on the static objective.

    Works on ``(X, Y)`` in the original coordinates. ``X`` is kept on the
    affine set ``C X C' = SigmaY`` by projecting with ``C^+``; steps use a
    Barzilai-Borwein trial length with backtracking (halving). Gradients come
    straight from ``d/dJ [-ln det J + tr(S^{-1} J)] = S^{-1} - J^{-1}``, so
    nothing here shares code with the closed form.

    Raises
    ------
    NoConvergence
        If the projected gradient norm stays above ``gtol`` after ``max_iter``
        iterations.
    """
    C, SigmaY = _target(spec)
    n = spec.n
    Sig0 = spec.Sigma0
    S = moments.S
    Sinv = np.linalg.inv(S)
    Sinv = 0.5 * (Sinv + Sinv.T)
    Cp = C.T @ np.linalg.inv(C @ C.T)
    Proj = Cp @ C

    def project(Xf):
        Xf = 0.5 * (Xf + Xf.T)
        return Xf + Cp @ (SigmaY - C @ Xf @ C.T) @ Cp.T

    def tangent(D):
        D = 0.5 * (D + D.T)
        return D - Proj @ D @ Proj

    def f_and_grad(X, Y):
        J = np.block([[Sig0, Y], [Y.T, X]])
        J = 0.5 * (J + J.T)
        try:
            L = np.linalg.cholesky(J)
        except np.linalg.LinAlgError:
            return np.inf, None, None
        logdet = 2.0 * np.sum(np.log(np.diag(L)))
        f = -logdet + float(np.sum(Sinv * J))
        Jinv = np.linalg.inv(J)
        G = Sinv - 0.5 * (Jinv + Jinv.T)
        return f, tangent(G[n:, n:]), 2.0 * G[:n, n:]

    X = project(Cp @ SigmaY @ Cp.T + (np.eye(n) - Proj))
    Y = np.zeros((n, n))
    f, gX, gY = f_and_grad(X, Y)
    step = 1.0
    prev = None
    stalls = 0
    for it in range(max_iter):
        gnorm = np.sqrt(np.sum(gX * gX) + np.sum(gY * gY))
        if gnorm < gtol:
            break
        if prev is not None:
            sX, sY, yX, yY = X - prev[0], Y - prev[1], gX - prev[2], gY - prev[3]
            sy = np.sum(sX * yX) + np.sum(sY * yY)
            if sy > 0:
                step = (np.sum(sX * sX) + np.sum(sY * sY)) / sy
        alpha = step
        # near the optimum the sufficient decrease drops below rounding in f
        slack = 64.0 * np.finfo(float).eps * (1.0 + abs(f))
        while True:
            Xn = project(X - alpha * gX)
            Yn = Y - alpha * gY
            fn, gXn, gYn = f_and_grad(Xn, Yn)
            if fn <= f - 1e-4 * alpha * gnorm ** 2 + slack:
                break
            alpha *= 0.5
            if alpha < 1e-30:
                break
        if alpha < 1e-30:
            # stalled at rounding level
            if gnorm < 1e-6:
                break
            raise NoConvergence(f"line search failed at iteration {it}, |grad| = {gnorm:.3e}")
        # gradients of an ill-conditioned joint bottom out near 1e-7 from
        # rounding; stop once the objective no longer decreases there
        stalls = stalls + 1 if fn >= f else 0
        if stalls >= 20 and gnorm < 1e-6:
            break
        prev = (X, Y, gX, gY)
        X, Y, f, gX, gY = Xn, Yn, fn, gXn, gYn
    else:
        raise NoConvergence(f"no convergence in {max_iter} iterations")

    Z = sym(X - Y.T @ np.linalg.solve(Sig0, Y))
    Mlag = sym(Cp.T @ (np.linalg.inv(Z) - moments.Pblk) @ Cp)
    joint = sym(np.block([[Sig0, Y], [Y.T, X]]))
    return StaticSolution(
        X=sym(X), Y=Y, Z=Z, Mlag=Mlag,
        objective=static_objective(joint, S),
        Jpred=2.0 * kl_gaussian(joint, S),
        C=C, SigmaY=SigmaY, Sigma0=Sig0,
        transform=OutputTransform(np.eye(n), np.eye(n)),
        normal={"iterations": it},
    )
