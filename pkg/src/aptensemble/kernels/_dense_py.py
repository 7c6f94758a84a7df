"""Numpy implementation of the dense-layer kernels.

Reference backend: the compiled extension in _dense.pyx must produce the
same results (up to float summation order) for the same inputs.
"""

import numpy as np

ACT_IDENTITY = 0
ACT_RELU = 1
ACT_SIGMOID = 2
ACT_TANH = 3


def layer_forward(a_prev, w, b, act):
    """One dense layer: activation(a_prev @ w.T + b).

    a_prev: (n, d_in), w: (d_out, d_in), b: (d_out,). Returns (n, d_out).
    """
    z = a_prev @ w.T
    z += b
    if act == ACT_IDENTITY:
        return z
    if act == ACT_RELU:
        return np.maximum(z, 0.0, out=z)
    if act == ACT_SIGMOID:
        # sigmoid(z) = 1 / (1 + exp(-z)), stable for large |z| in float64
        np.negative(z, out=z)
        np.exp(z, out=z)
        z += 1.0
        np.reciprocal(z, out=z)
        return z
    if act == ACT_TANH:
        return np.tanh(z, out=z)
    raise ValueError(f"unknown activation code {act}")


def layer_backward(d_a, a, a_prev, w, act):
    """Backprop through one dense layer.

    d_a: gradient w.r.t. the layer output a (n, d_out).
    a: the forward output (activation values), used for the activation
       derivative so the pre-activation never needs to be cached.
    Returns (d_w, d_b, d_a_prev).
    """
    if act == ACT_IDENTITY:
        dz = d_a
    elif act == ACT_RELU:
        dz = d_a * (a > 0.0)
    elif act == ACT_SIGMOID:
        dz = d_a * a * (1.0 - a)
    elif act == ACT_TANH:
        dz = d_a * (1.0 - a * a)
    else:
        raise ValueError(f"unknown activation code {act}")
    d_w = dz.T @ a_prev
    d_b = dz.sum(axis=0)
    d_a_prev = dz @ w
    return d_w, d_b, d_a_prev
