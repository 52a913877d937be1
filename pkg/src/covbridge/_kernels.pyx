# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot loops in :mod:`covbridge._kernels_py`.

Same signatures and sampling conventions as the pure-Python module. The
Euler-Maruyama kernel reproduces the fallback's accumulation order exactly;
build without floating-point contraction to keep the two bit-identical.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport isfinite

cnp.import_array()


cdef inline void _matmul(const double[:, ::1] A, const double[:, ::1] B,
                         double[:, ::1] C) noexcept nogil:
    cdef Py_ssize_t i, j, l
    cdef Py_ssize_t r = A.shape[0], inner = A.shape[1], c = B.shape[1]
    cdef double acc
    for i in range(r):
        for j in range(c):
            acc = 0.0
            for l in range(inner):
                acc = acc + A[i, l] * B[l, j]
            C[i, j] = acc


cdef inline void _axpy(double[:, ::1] out, const double[:, ::1] X, double a,
                       const double[:, ::1] Y) noexcept nogil:
    # out = X + a * Y
    cdef Py_ssize_t i, j
    for i in range(X.shape[0]):
        for j in range(X.shape[1]):
            out[i, j] = X[i, j] + a * Y[i, j]


def linear_rk4(F, X0, double h):
    cdef const double[:, :, ::1] Fv = np.ascontiguousarray(F, dtype=np.float64)
    X0 = np.asarray(X0, dtype=np.float64)
    cdef Py_ssize_t steps = (Fv.shape[0] - 1) // 2
    cdef Py_ssize_t n = X0.shape[0], c = X0.shape[1]
    out_arr = np.empty((steps + 1, n, c))
    cdef double[:, :, ::1] out = out_arr
    cdef double[:, ::1] X = np.array(X0, dtype=np.float64, order="C")
    cdef double[:, ::1] k1 = np.empty((n, c)), k2 = np.empty((n, c))
    cdef double[:, ::1] k3 = np.empty((n, c)), k4 = np.empty((n, c))
    cdef double[:, ::1] tmp = np.empty((n, c))
    cdef Py_ssize_t k, i, j
    with nogil:
        out[0, :, :] = X
        for k in range(steps):
            _matmul(Fv[2 * k], X, k1)
            _axpy(tmp, X, 0.5 * h, k1)
            _matmul(Fv[2 * k + 1], tmp, k2)
            _axpy(tmp, X, 0.5 * h, k2)
            _matmul(Fv[2 * k + 1], tmp, k3)
            _axpy(tmp, X, h, k3)
            _matmul(Fv[2 * k + 2], tmp, k4)
            for i in range(n):
                for j in range(c):
                    X[i, j] = X[i, j] + (h / 6.0) * (
                        k1[i, j] + 2.0 * k2[i, j] + 2.0 * k3[i, j] + k4[i, j])
            out[k + 1, :, :] = X
    return out_arr


cdef inline void _lyap_rhs(const double[:, ::1] F, const double[:, ::1] Q,
                           const double[:, ::1] Y, double[:, ::1] FY,
                           double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t i, j
    _matmul(F, Y, FY)
    for i in range(Y.shape[0]):
        for j in range(Y.shape[0]):
            out[i, j] = FY[i, j] + FY[j, i] + Q[i, j]


def lyap_rk4(F, Q, X0, double h):
    cdef const double[:, :, ::1] Fv = np.ascontiguousarray(F, dtype=np.float64)
    cdef const double[:, :, ::1] Qv = np.ascontiguousarray(Q, dtype=np.float64)
    cdef Py_ssize_t steps = (Fv.shape[0] - 1) // 2
    cdef Py_ssize_t n = Fv.shape[1]
    out_arr = np.empty((steps + 1, n, n))
    cdef double[:, :, ::1] out = out_arr
    cdef double[:, ::1] X = np.array(X0, dtype=np.float64, order="C")
    cdef double[:, ::1] k1 = np.empty((n, n)), k2 = np.empty((n, n))
    cdef double[:, ::1] k3 = np.empty((n, n)), k4 = np.empty((n, n))
    cdef double[:, ::1] tmp = np.empty((n, n)), FY = np.empty((n, n))
    cdef Py_ssize_t k, i, j
    cdef double s
    with nogil:
        out[0, :, :] = X
        for k in range(steps):
            _lyap_rhs(Fv[2 * k], Qv[2 * k], X, FY, k1)
            _axpy(tmp, X, 0.5 * h, k1)
            _lyap_rhs(Fv[2 * k + 1], Qv[2 * k + 1], tmp, FY, k2)
            _axpy(tmp, X, 0.5 * h, k2)
            _lyap_rhs(Fv[2 * k + 1], Qv[2 * k + 1], tmp, FY, k3)
            _axpy(tmp, X, h, k3)
            _lyap_rhs(Fv[2 * k + 2], Qv[2 * k + 2], tmp, FY, k4)
            for i in range(n):
                for j in range(n):
                    X[i, j] = X[i, j] + (h / 6.0) * (
                        k1[i, j] + 2.0 * k2[i, j] + 2.0 * k3[i, j] + k4[i, j])
            for i in range(n):
                for j in range(i + 1, n):
                    s = 0.5 * (X[i, j] + X[j, i])
                    X[i, j] = s
                    X[j, i] = s
            out[k + 1, :, :] = X
    return out_arr


cdef inline void _back_stage(const double[:, ::1] P, const double[:, ::1] A,
                             const double[:, ::1] Q, double[:, ::1] kP,
                             double[:, ::1] PQ, double[:, ::1] g) noexcept nogil:
    # kP = P A ; g = P Q P'
    cdef Py_ssize_t i, j, l, n = P.shape[0]
    cdef double acc
    _matmul(P, A, kP)
    _matmul(P, Q, PQ)
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for l in range(n):
                acc = acc + PQ[i, l] * P[j, l]
            g[i, j] = acc


def gram_backward(A, Q, double h):
    cdef const double[:, :, ::1] Av = np.ascontiguousarray(A, dtype=np.float64)
    cdef const double[:, :, ::1] Qv = np.ascontiguousarray(Q, dtype=np.float64)
    cdef Py_ssize_t steps = (Av.shape[0] - 1) // 2
    cdef Py_ssize_t n = Av.shape[1]
    psi_arr = np.empty((steps + 1, n, n))
    w_arr = np.empty((steps + 1, n, n))
    cdef double[:, :, ::1] psi_out = psi_arr
    cdef double[:, :, ::1] w_out = w_arr
    cdef double[:, ::1] Psi = np.eye(n)
    cdef double[:, ::1] W = np.zeros((n, n))
    cdef double[:, ::1] k1 = np.empty((n, n)), k2 = np.empty((n, n))
    cdef double[:, ::1] k3 = np.empty((n, n)), k4 = np.empty((n, n))
    cdef double[:, ::1] g1 = np.empty((n, n)), g2 = np.empty((n, n))
    cdef double[:, ::1] g3 = np.empty((n, n)), g4 = np.empty((n, n))
    cdef double[:, ::1] tmp = np.empty((n, n)), PQ = np.empty((n, n))
    cdef Py_ssize_t k, i, j, i0, im, i1
    cdef double s
    with nogil:
        psi_out[steps, :, :] = Psi
        w_out[steps, :, :] = W
        for k in range(steps, 0, -1):
            i0 = 2 * k
            im = 2 * k - 1
            i1 = 2 * k - 2
            _back_stage(Psi, Av[i0], Qv[i0], k1, PQ, g1)
            _axpy(tmp, Psi, 0.5 * h, k1)
            _back_stage(tmp, Av[im], Qv[im], k2, PQ, g2)
            _axpy(tmp, Psi, 0.5 * h, k2)
            _back_stage(tmp, Av[im], Qv[im], k3, PQ, g3)
            _axpy(tmp, Psi, h, k3)
            _back_stage(tmp, Av[i1], Qv[i1], k4, PQ, g4)
            for i in range(n):
                for j in range(n):
                    Psi[i, j] = Psi[i, j] + (h / 6.0) * (
                        k1[i, j] + 2.0 * k2[i, j] + 2.0 * k3[i, j] + k4[i, j])
                    W[i, j] = W[i, j] + (h / 6.0) * (
                        g1[i, j] + 2.0 * g2[i, j] + 2.0 * g3[i, j] + g4[i, j])
            for i in range(n):
                for j in range(i + 1, n):
                    s = 0.5 * (W[i, j] + W[j, i])
                    W[i, j] = s
                    W[j, i] = s
            psi_out[k - 1, :, :] = Psi
            w_out[k - 1, :, :] = W
    return psi_arr, w_arr


def em_paths(A, B, K, x0, dW, double dt, store_idx):
    cdef const double[:, :, ::1] Av = np.ascontiguousarray(A, dtype=np.float64)
    cdef const double[:, :, ::1] Bv = np.ascontiguousarray(B, dtype=np.float64)
    cdef const double[:, :, ::1] Kv = np.ascontiguousarray(K, dtype=np.float64)
    cdef const double[:, :, ::1] dWv = np.ascontiguousarray(dW, dtype=np.float64)
    cdef const cnp.int64_t[::1] sidx = np.ascontiguousarray(store_idx, dtype=np.int64)
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    cdef Py_ssize_t paths = x0.shape[0], n = x0.shape[1], m = Bv.shape[2]
    cdef Py_ssize_t steps = dWv.shape[1], nstore = sidx.shape[0]
    states_arr = np.empty((paths, nstore, n))
    controls_arr = np.empty((paths, nstore, m))
    energy_arr = np.zeros(paths)
    cdef double[:, :, ::1] states = states_arr
    cdef double[:, :, ::1] controls = controls_arr
    cdef double[::1] energy = energy_arr
    cdef double[:, ::1] xs = np.array(x0, order="C")
    cdef double[::1] x = np.empty(n), xn = np.empty(n), u = np.empty(m)
    cdef Py_ssize_t p, k, i, j, l, s
    cdef double acc, drift, noise, usq
    cdef bint bad = False
    cdef Py_ssize_t bad_step = 0
    with nogil:
        for p in range(paths):
            for i in range(n):
                x[i] = xs[p, i]
            s = 0
            for k in range(steps + 1):
                for j in range(m):
                    acc = 0.0
                    for l in range(n):
                        acc = acc + Kv[k, j, l] * x[l]
                    u[j] = acc
                if s < nstore and sidx[s] == k:
                    for i in range(n):
                        states[p, s, i] = x[i]
                    for j in range(m):
                        controls[p, s, j] = u[j]
                    s += 1
                if k == steps:
                    break
                usq = 0.0
                for j in range(m):
                    usq = usq + u[j] * u[j]
                energy[p] = energy[p] + usq * dt
                for i in range(n):
                    drift = 0.0
                    for l in range(n):
                        drift = drift + Av[k, i, l] * x[l]
                    for j in range(m):
                        drift = drift + Bv[k, i, j] * u[j]
                    noise = 0.0
                    for j in range(m):
                        noise = noise + Bv[k, i, j] * dWv[p, k, j]
                    xn[i] = x[i] + drift * dt + noise
                for i in range(n):
                    x[i] = xn[i]
                    if not isfinite(x[i]):
                        bad = True
                if bad:
                    bad_step = k + 1
                    break
            if bad:
                break
    if bad:
        raise FloatingPointError(f"non-finite state at step {bad_step}")
    return states_arr, controls_arr, energy_arr
