"""Pure-Python/numpy versions of the hot loops.

The compiled module ``covbridge._kernels`` exposes the same four functions
with the same signatures; :mod:`covbridge.kernels` picks one at import time.

Coefficient arrays are sampled at half steps: for ``S`` steps of size ``h``
an array has ``2*S + 1`` entries and entry ``2*k + 1`` is the value at the
midpoint of step ``k``.
"""
import numpy as np


def linear_rk4(F, X0, h):
    """Classical RK4 for ``X' = F(t) X``; returns all ``S + 1`` iterates."""
    F = np.ascontiguousarray(F, dtype=float)
    X = np.array(X0, dtype=float)
    steps = (F.shape[0] - 1) // 2
    out = np.empty((steps + 1,) + X.shape)
    out[0] = X
    for k in range(steps):
        F0, Fm, F1 = F[2 * k], F[2 * k + 1], F[2 * k + 2]
        k1 = F0 @ X
        k2 = Fm @ (X + 0.5 * h * k1)
        k3 = Fm @ (X + 0.5 * h * k2)
        k4 = F1 @ (X + h * k3)
        X = X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k + 1] = X
    return out


def lyap_rk4(F, Q, X0, h):
    """Classical RK4 for ``X' = F X + X F' + Q``, symmetrizing each iterate."""
    F = np.ascontiguousarray(F, dtype=float)
    Q = np.ascontiguousarray(Q, dtype=float)
    X = np.array(X0, dtype=float)
    steps = (F.shape[0] - 1) // 2
    out = np.empty((steps + 1,) + X.shape)
    out[0] = X

    def rhs(Fk, Qk, Y):
        FY = Fk @ Y
        return FY + FY.T + Qk

    for k in range(steps):
        i0, im, i1 = 2 * k, 2 * k + 1, 2 * k + 2
        k1 = rhs(F[i0], Q[i0], X)
        k2 = rhs(F[im], Q[im], X + 0.5 * h * k1)
        k3 = rhs(F[im], Q[im], X + 0.5 * h * k2)
        k4 = rhs(F[i1], Q[i1], X + h * k3)
        X = X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        X = 0.5 * (X + X.T)
        out[k + 1] = X
    return out


def gram_backward(A, Q, h):
    """Backward sweep for ``Psi(t) = Phi(T, t)`` and ``W(t) = int_t^T Psi Q Psi' ds``.

    Integrates ``dPsi/dt = -Psi A`` and ``dW/dt = -Psi Q Psi'`` from
    ``Psi(T) = I``, ``W(T) = 0`` down to the first sample. Results are
    returned in forward time order.
    """
    A = np.ascontiguousarray(A, dtype=float)
    Q = np.ascontiguousarray(Q, dtype=float)
    n = A.shape[1]
    steps = (A.shape[0] - 1) // 2
    Psi = np.eye(n)
    W = np.zeros((n, n))
    psi_out = np.empty((steps + 1, n, n))
    w_out = np.empty((steps + 1, n, n))
    psi_out[steps] = Psi
    w_out[steps] = W
    # in reversed time s = T - t: dPsi/ds = Psi A, dW/ds = Psi Q Psi'
    for k in range(steps, 0, -1):
        i0, im, i1 = 2 * k, 2 * k - 1, 2 * k - 2
        P1 = Psi
        k1 = P1 @ A[i0]
        g1 = P1 @ Q[i0] @ P1.T
        P2 = Psi + 0.5 * h * k1
        k2 = P2 @ A[im]
        g2 = P2 @ Q[im] @ P2.T
        P3 = Psi + 0.5 * h * k2
        k3 = P3 @ A[im]
        g3 = P3 @ Q[im] @ P3.T
        P4 = Psi + h * k3
        k4 = P4 @ A[i1]
        g4 = P4 @ Q[i1] @ P4.T
        Psi = Psi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        W = W + (h / 6.0) * (g1 + 2.0 * g2 + 2.0 * g3 + g4)
        W = 0.5 * (W + W.T)
        psi_out[k - 1] = Psi
        w_out[k - 1] = W
    return psi_out, w_out


def em_paths(A, B, K, x0, dW, dt, store_idx):
    """Euler-Maruyama for ``dx = (A + B K) x dt + B dW`` on a batch of paths.

    Parameters
    ----------
    A, B, K : ndarray
        Per-step coefficients, shapes ``(steps + 1, n, n)``, ``(steps + 1, n, m)``
        and ``(steps + 1, m, n)``; the last entry is used only for the control
        recorded at the final stored node.
    x0 : ndarray, shape (paths, n)
    dW : ndarray, shape (paths, steps, m)
        Brownian increments, already scaled by ``sqrt(dt)``.
    dt : float
    store_idx : ndarray of int
        Increasing step indices at which state and control are recorded.

    Returns
    -------
    states, controls, energy
        ``(paths, len(store_idx), n)``, ``(paths, len(store_idx), m)`` and the
        left-point quadrature of ``int |u|^2 dt`` per path.

    Notes
    -----
    Every sum is accumulated elementwise in a fixed order so that results are
    bit-identical to the compiled kernel and independent of batch size.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    K = np.asarray(K, dtype=float)
    x = np.array(x0, dtype=float)
    dW = np.asarray(dW, dtype=float)
    store_idx = np.asarray(store_idx, dtype=np.int64)
    paths, n = x.shape
    m = B.shape[2]
    steps = dW.shape[1]
    states = np.empty((paths, store_idx.size, n))
    controls = np.empty((paths, store_idx.size, m))
    energy = np.zeros(paths)
    with np.errstate(over="ignore", invalid="ignore"):
        _em_loop(A, B, K, x, dW, dt, store_idx, states, controls, energy)
    return states, controls, energy


def _em_loop(A, B, K, x, dW, dt, store_idx, states, controls, energy):
    paths, n = x.shape
    m = B.shape[2]
    steps = dW.shape[1]
    u = np.empty((paths, m))
    xn = np.empty((paths, n))
    s = 0
    for k in range(steps + 1):
        for j in range(m):
            acc = np.zeros(paths)
            for l in range(n):
                acc += K[k, j, l] * x[:, l]
            u[:, j] = acc
        if s < store_idx.size and store_idx[s] == k:
            states[:, s] = x
            controls[:, s] = u
            s += 1
        if k == steps:
            break
        usq = np.zeros(paths)
        for j in range(m):
            usq += u[:, j] * u[:, j]
        energy += usq * dt
        for i in range(n):
            drift = np.zeros(paths)
            for l in range(n):
                drift += A[k, i, l] * x[:, l]
            for j in range(m):
                drift += B[k, i, j] * u[:, j]
            noise = np.zeros(paths)
            for j in range(m):
                noise += B[k, i, j] * dW[:, k, j]
            xn[:, i] = x[:, i] + drift * dt + noise
        x, xn = xn, x
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"non-finite state at step {k + 1}")
