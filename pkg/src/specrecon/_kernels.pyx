# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-pixel kernels. Semantics match ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt
from libc.stdlib cimport malloc, free
from libc.string cimport memcpy
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


def block_apply(padded, weights, Py_ssize_t block):
    """Per output row: gather the block vectors, then one BLAS matrix product."""
    cdef const double[:, :, ::1] P = np.ascontiguousarray(padded, dtype=np.float64)
    cdef const double[:, ::1] W = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t m = P.shape[2]
    cdef Py_ssize_t h = P.shape[0] - block + 1
    cdef Py_ssize_t w = P.shape[1] - block + 1
    cdef int nb = <int>W.shape[0]
    cdef int kk = <int>W.shape[1]
    cdef int wi = <int>w
    out_arr = np.zeros((h, w, nb))
    if h <= 0 or w <= 0:
        return out_arr
    cdef double[:, :, ::1] out = out_arr
    cols_arr = np.empty((w, kk))
    cdef double[:, ::1] cols = cols_arr
    cdef Py_ssize_t y, x, dy, run = block * m
    cdef double one = 1.0, zero = 0.0
    cdef char tn = b'T', nn = b'N'
    with nogil:
        for y in range(h):
            for x in range(w):
                for dy in range(block):
                    # block row dy of pixel x is a contiguous run of block*m values
                    memcpy(&cols[x, dy * run], &P[y + dy, x, 0], run * sizeof(double))
            # column-major view: out[y]^T (nb x w) = W (nb x kk) @ cols^T (kk x w)
            dgemm(&tn, &nn, &nb, &wi, &kk, &one, <double *>&W[0, 0], &kk, &cols[0, 0], &kk,
                  &zero, &out[y, 0, 0], &nb)
    return out_arr


cdef int _cholesky(double *A, Py_ssize_t n) noexcept nogil:
    """In-place lower Cholesky factor of a row-major n x n matrix."""
    cdef Py_ssize_t i, j, k
    cdef double s
    for j in range(n):
        s = A[j * n + j]
        for k in range(j):
            s -= A[j * n + k] * A[j * n + k]
        if s <= 0.0:
            return -1
        s = sqrt(s)
        A[j * n + j] = s
        for i in range(j + 1, n):
            for k in range(j):
                A[i * n + j] -= A[i * n + k] * A[j * n + k]
            A[i * n + j] /= s
    return 0


cdef void _chol_solve(const double *L, double *b, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, k
    cdef double s
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i * n + k] * b[k]
        b[i] = s / L[i * n + i]
    for i in range(n - 1, -1, -1):
        s = b[i]
        for k in range(i + 1, n):
            s -= L[k * n + i] * b[k]
        b[i] = s / L[i * n + i]


def epssw_apply(padded, Py_ssize_t block, double spatial_var, double range_var,
                noise_var, cov_ft, f_cov_ft):
    cdef double[:, :, ::1] P = np.ascontiguousarray(padded, dtype=np.float64)
    cdef double[::1] nv = np.ascontiguousarray(noise_var, dtype=np.float64)
    cdef double[:, ::1] KF = np.ascontiguousarray(cov_ft, dtype=np.float64)
    cdef double[:, ::1] FKF = np.ascontiguousarray(f_cov_ft, dtype=np.float64)
    cdef Py_ssize_t r = block // 2
    cdef Py_ssize_t m = P.shape[2]
    cdef Py_ssize_t h = P.shape[0] - 2 * r
    cdef Py_ssize_t w = P.shape[1] - 2 * r
    cdef Py_ssize_t nb = KF.shape[0]
    cdef Py_ssize_t nblk = block * block
    out_arr = np.zeros((h, w, nb))
    cdef double[:, :, ::1] out = out_arr

    cdef double[::1] spatial = np.empty(nblk)
    cdef Py_ssize_t dy, dx, k
    for dy in range(block):
        for dx in range(block):
            spatial[dy * block + dx] = exp(-((dy - r) ** 2 + (dx - r) ** 2) / (2.0 * spatial_var))

    cdef double *wts = <double *> malloc(nblk * sizeof(double))
    cdef double *cbar = <double *> malloc(m * sizeof(double))
    cdef double *diff = <double *> malloc(m * sizeof(double))
    cdef double *kw = <double *> malloc(m * m * sizeof(double))
    cdef double *A = <double *> malloc(m * m * sizeof(double))
    cdef double *X = <double *> malloc(m * m * sizeof(double))
    cdef double *wd = <double *> malloc(m * m * sizeof(double))
    cdef double *T = <double *> malloc(m * m * sizeof(double))
    cdef double *B = <double *> malloc(m * m * sizeof(double))
    cdef double *yv = <double *> malloc(m * sizeof(double))
    cdef double *col = <double *> malloc(m * sizeof(double))
    if not (wts and cbar and diff and kw and A and X and wd and T and B and yv and col):
        free(wts); free(cbar); free(diff); free(kw); free(A); free(X)
        free(wd); free(T); free(B); free(yv); free(col)
        raise MemoryError()

    cdef Py_ssize_t y, x, i, j, c, n
    cdef double d, wsum, wk, s, eps
    cdef int status = 0
    try:
        with nogil:
            for y in range(h):
                for x in range(w):
                    # bilateral weights
                    wsum = 0.0
                    for dy in range(block):
                        for dx in range(block):
                            d = 0.0
                            for c in range(m):
                                s = P[y + dy, x + dx, c] - P[y + r, x + r, c]
                                d += s * s
                            wk = spatial[dy * block + dx] * exp(-d / (2.0 * range_var))
                            wts[dy * block + dx] = wk
                            wsum += wk
                    for c in range(m):
                        cbar[c] = 0.0
                    for dy in range(block):
                        for dx in range(block):
                            wk = wts[dy * block + dx]
                            for c in range(m):
                                cbar[c] += wk * P[y + dy, x + dx, c]
                    for c in range(m):
                        cbar[c] /= wsum
                    # weighted centered second moment
                    for i in range(m * m):
                        kw[i] = 0.0
                    for dy in range(block):
                        for dx in range(block):
                            wk = wts[dy * block + dx]
                            for c in range(m):
                                diff[c] = P[y + dy, x + dx, c] - cbar[c]
                            for i in range(m):
                                for j in range(m):
                                    kw[i * m + j] += wk * diff[i] * diff[j]
                    for i in range(m * m):
                        kw[i] /= wsum
                    # denoiser W_d = I - N A^-1, A = K_w + N (+ tiny ridge)
                    s = 0.0
                    for i in range(m):
                        s += kw[i * m + i] + nv[i]
                    eps = 1e-12 * s / m + 1e-300
                    for i in range(m):
                        for j in range(m):
                            A[i * m + j] = kw[i * m + j]
                        A[i * m + i] += nv[i] + eps
                    if _cholesky(A, m) != 0:
                        status = -1
                        break
                    # X = A^-1 N, column by column
                    for j in range(m):
                        for i in range(m):
                            col[i] = 0.0
                        col[j] = nv[j]
                        _chol_solve(A, col, m)
                        for i in range(m):
                            X[i * m + j] = col[i]
                    for i in range(m):
                        for j in range(m):
                            wd[i * m + j] = -X[j * m + i]
                        wd[i * m + i] += 1.0
                    for i in range(m):
                        s = cbar[i]
                        for j in range(m):
                            s += wd[i * m + j] * (P[y + r, x + r, j] - cbar[j])
                        yv[i] = s
                    # residual noise: X^T K_w X + W_d N W_d^T
                    for i in range(m):
                        for j in range(m):
                            s = 0.0
                            for k in range(m):
                                s += kw[i * m + k] * X[k * m + j]
                            T[i * m + j] = s
                    for i in range(m):
                        for j in range(m):
                            s = 0.0
                            for k in range(m):
                                s += X[k * m + i] * T[k * m + j]
                                s += wd[i * m + k] * nv[k] * wd[j * m + k]
                            B[i * m + j] = s
                    for i in range(m):
                        for j in range(m):
                            T[i * m + j] = FKF[i, j] + 0.5 * (B[i * m + j] + B[j * m + i])
                    if _cholesky(T, m) != 0:
                        status = -2
                        break
                    _chol_solve(T, yv, m)
                    for n in range(nb):
                        s = 0.0
                        for c in range(m):
                            s += KF[n, c] * yv[c]
                        out[y, x, n] = s
                if status != 0:
                    break
    finally:
        free(wts); free(cbar); free(diff); free(kw); free(A); free(X)
        free(wd); free(T); free(B); free(yv); free(col)
    if status != 0:
        raise np.linalg.LinAlgError("EPSSW per-pixel system is not positive definite")
    return out_arr
