"""
Symmetric and positive-definite matrix helpers
~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~

Small dense-matrix routines used by every solver layer: symmetrization,
positive-definiteness checks, spectral square roots, the positive root of the
matrix quadratic ``Z + Z H Z = R`` and the relative entropy between two
zero-mean Gaussians.

All functions take and return plain ``numpy.ndarray`` objects and never
mutate their inputs.
"""
import numpy as np

from .errors import DimensionMismatch, NotPositiveDefinite

SYM_TOL = 1e-9
SPD_TOL = 1e-10


def sym(M):
    """Return the symmetric part ``(M + M') / 2`` as a float array."""
    M = np.asarray(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {M.shape}")
    return 0.5 * (M + M.T)


def is_symmetric(M, tol=SYM_TOL):
    M = np.asarray(M, dtype=float)
    scale = 1.0 + np.max(np.abs(M), initial=0.0)
    return np.max(np.abs(M - M.T), initial=0.0) <= tol * scale


def as_spd(M, name="matrix"):
    """Symmetrize ``M`` and verify it is positive definite.

    Raises
    ------
    NotPositiveDefinite
        If the smallest eigenvalue is not above ``-SPD_TOL`` times the largest
        one, or if a Cholesky factorization fails.
    """
    S = sym(M)
    if not np.all(np.isfinite(S)):
        raise NotPositiveDefinite(f"{name} has non-finite entries")
    w = np.linalg.eigvalsh(S)
    if w[-1] <= 0.0 or w[0] <= -SPD_TOL * w[-1]:
        raise NotPositiveDefinite(
            f"{name} is not positive definite (eigenvalue range [{w[0]:.3e}, {w[-1]:.3e}])")
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"{name} has no Cholesky factor") from exc
    return S


def _eigh_spd(S, name):
    S = as_spd(S, name)
    w, U = np.linalg.eigh(S)
    # eigenvalues within the SPD tolerance band may still be tiny negatives
    w = np.maximum(w, 0.0)
    return w, U


def sym_sqrt(S, name="matrix"):
    """Principal square root of an SPD matrix via eigendecomposition."""
    w, U = _eigh_spd(S, name)
    return sym((U * np.sqrt(w)) @ U.T)


def sym_invsqrt(S, name="matrix"):
    """Inverse of the principal square root, ``S^{-1/2}``."""
    w, U = _eigh_spd(S, name)
    if np.any(w <= 0.0):
        raise NotPositiveDefinite(f"{name} is singular")
    return sym((U / np.sqrt(w)) @ U.T)


def sym_inv(S):
    """Inverse of a symmetric nonsingular matrix, re-symmetrized."""
    return sym(np.linalg.inv(sym(S)))


def spd_inv(S, name="matrix"):
    """Inverse of an SPD matrix through its Cholesky factor."""
    S = as_spd(S, name)
    L = np.linalg.cholesky(S)
    Linv = np.linalg.solve(L, np.eye(S.shape[0]))
    return sym(Linv.T @ Linv)


def logdet_spd(S, name="matrix"):
    """``ln det S`` from the Cholesky factor (no overflow of ``det``)."""
    S = as_spd(S, name)
    L = np.linalg.cholesky(S)
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def _check_same_shape(*mats):
    shapes = {np.shape(M) for M in mats}
    if len(shapes) != 1:
        raise DimensionMismatch(f"incompatible shapes {sorted(shapes)}")


def quadratic_roots(H, R):
    """Both roots ``(Z+, Z-)`` of ``Z + Z H Z = R`` for SPD ``H`` and ``R``.

    With ``W = (I/4 + H^{1/2} R H^{1/2})^{1/2}`` the roots are
    ``H^{-1/2} (+-W - I/2) H^{-1/2}``.
    """
    H = as_spd(H, "H")
    R = as_spd(R, "R")
    _check_same_shape(H, R)
    n = H.shape[0]
    Hh = sym_sqrt(H, "H")
    Hmh = sym_invsqrt(H, "H")
    W = sym_sqrt(0.25 * np.eye(n) + Hh @ R @ Hh, "I/4 + H^1/2 R H^1/2")
    zp = sym(Hmh @ (W - 0.5 * np.eye(n)) @ Hmh)
    zm = sym(Hmh @ (-W - 0.5 * np.eye(n)) @ Hmh)
    return zp, zm


def quadratic_solve(H, R):
    """Positive-definite solution of ``Z + Z H Z = R``.

    Parameters
    ----------
    H, R : ndarray
        SPD matrices of equal dimension.

    Returns
    -------
    ndarray
        The root ``Z+``, which is the only positive-definite one.
    """
    zp, _ = quadratic_roots(H, R)
    return as_spd(zp, "Z+")


def kl_gaussian(Sigma, S):
    """Relative entropy ``D(N(0, Sigma) || N(0, S))``.

    Computes ``0.5 * [tr(S^{-1} Sigma) - d + ln det S - ln det Sigma]``.
    """
    Sigma = as_spd(Sigma, "Sigma")
    S = as_spd(S, "S")
    _check_same_shape(Sigma, S)
    d = S.shape[0]
    tr = float(np.trace(np.linalg.solve(S, Sigma)))
    val = 0.5 * (tr - d + logdet_spd(S) - logdet_spd(Sigma))
    # Gibbs: negative values only arise from rounding
    return max(val, 0.0)
