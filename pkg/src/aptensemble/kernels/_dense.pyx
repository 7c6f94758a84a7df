# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled dense-layer kernels.

Same contract as _dense_py. Small batches (the per-sample RL update
path) run a fused typed loop that skips numpy dispatch entirely; large
batches hand the matmul to BLAS and keep only the bias/activation
fusion here, so the autoencoder path never loses to the fallback.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh

ACT_IDENTITY = 0
ACT_RELU = 1
ACT_SIGMOID = 2
ACT_TANH = 3

# Work sizes past this run the BLAS path; the fused loop wins below it.
# Crossover measured on n * d_in * d_out.
DEF BLAS_MIN_FLOPS = 16384


def layer_forward(double[:, ::1] a_prev, double[:, ::1] w, double[::1] b, int act):
    cdef Py_ssize_t n = a_prev.shape[0]
    cdef Py_ssize_t d_in = a_prev.shape[1]
    cdef Py_ssize_t d_out = w.shape[0]
    cdef Py_ssize_t r, j, i
    cdef double acc

    if n * d_in * d_out >= BLAS_MIN_FLOPS:
        out_arr = np.dot(np.asarray(a_prev), np.asarray(w).T)
        _bias_activate(out_arr, b, act)
        return out_arr

    out_arr = np.empty((n, d_out), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for r in range(n):
        for j in range(d_out):
            acc = b[j]
            for i in range(d_in):
                acc += a_prev[r, i] * w[j, i]
            if act == 1:
                acc = acc if acc > 0.0 else 0.0
            elif act == 2:
                acc = 1.0 / (1.0 + exp(-acc))
            elif act == 3:
                acc = tanh(acc)
            out[r, j] = acc
    return out_arr


cdef void _bias_activate(double[:, ::1] z, double[::1] b, int act) noexcept:
    """In-place z <- act(z + b), fused so no temporaries are allocated."""
    cdef Py_ssize_t n = z.shape[0]
    cdef Py_ssize_t d_out = z.shape[1]
    cdef Py_ssize_t r, j
    cdef double acc
    for r in range(n):
        for j in range(d_out):
            acc = z[r, j] + b[j]
            if act == 1:
                acc = acc if acc > 0.0 else 0.0
            elif act == 2:
                acc = 1.0 / (1.0 + exp(-acc))
            elif act == 3:
                acc = tanh(acc)
            z[r, j] = acc


def layer_backward(double[:, ::1] d_a, double[:, ::1] a, double[:, ::1] a_prev,
                   double[:, ::1] w, int act):
    cdef Py_ssize_t n = a_prev.shape[0]
    cdef Py_ssize_t d_in = a_prev.shape[1]
    cdef Py_ssize_t d_out = w.shape[0]
    cdef Py_ssize_t r, j, i
    cdef double dz, av

    if n * d_in * d_out >= BLAS_MIN_FLOPS:
        dz_arr = np.empty((n, d_out), dtype=np.float64)
        _activation_grad(d_a, a, dz_arr, act)
        d_w_arr = np.dot(dz_arr.T, np.asarray(a_prev))
        d_b_arr = dz_arr.sum(axis=0)
        d_a_prev_arr = np.dot(dz_arr, np.asarray(w))
        return d_w_arr, d_b_arr, d_a_prev_arr

    d_w_arr = np.zeros((d_out, d_in), dtype=np.float64)
    d_b_arr = np.zeros(d_out, dtype=np.float64)
    d_a_prev_arr = np.zeros((n, d_in), dtype=np.float64)
    cdef double[:, ::1] d_w = d_w_arr
    cdef double[::1] d_b = d_b_arr
    cdef double[:, ::1] d_a_prev = d_a_prev_arr
    for r in range(n):
        for j in range(d_out):
            av = a[r, j]
            dz = d_a[r, j]
            if act == 1:
                dz = dz if av > 0.0 else 0.0
            elif act == 2:
                dz = dz * av * (1.0 - av)
            elif act == 3:
                dz = dz * (1.0 - av * av)
            if dz == 0.0:
                continue
            d_b[j] += dz
            for i in range(d_in):
                d_w[j, i] += dz * a_prev[r, i]
                d_a_prev[r, i] += dz * w[j, i]
    return d_w_arr, d_b_arr, d_a_prev_arr


cdef void _activation_grad(double[:, ::1] d_a, double[:, ::1] a,
                           double[:, ::1] dz, int act) noexcept:
    """dz <- d_a * act'(z), expressed through the stored activations."""
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t d_out = a.shape[1]
    cdef Py_ssize_t r, j
    cdef double g, av
    for r in range(n):
        for j in range(d_out):
            av = a[r, j]
            g = d_a[r, j]
            if act == 1:
                g = g if av > 0.0 else 0.0
            elif act == 2:
                g = g * av * (1.0 - av)
            elif act == 3:
                g = g * (1.0 - av * av)
            dz[r, j] = g
