import numpy as np
import pytest


def finite_difference_grads(loss_fn, net, h=1e-4):
    """Central finite differences of loss_fn() w.r.t. every net parameter.

    loss_fn must read the net's current parameters and return a scalar.
    Returns a list of (d_w, d_b) matching net.layers.
    """
    grads = []
    for layer in net.layers:
        d_w = np.zeros_like(layer.w)
        for idx in np.ndindex(layer.w.shape):
            orig = layer.w[idx]
            layer.w[idx] = orig + h
            hi = loss_fn()
            layer.w[idx] = orig - h
            lo = loss_fn()
            layer.w[idx] = orig
            d_w[idx] = (hi - lo) / (2 * h)
        d_b = np.zeros_like(layer.b)
        for idx in np.ndindex(layer.b.shape):
            orig = layer.b[idx]
            layer.b[idx] = orig + h
            hi = loss_fn()
            layer.b[idx] = orig - h
            lo = loss_fn()
            layer.b[idx] = orig
            d_b[idx] = (hi - lo) / (2 * h)
        grads.append((d_w, d_b))
    return grads


def max_relative_error(analytic, numeric, floor=1e-8):
    """Worst-case per-coordinate relative error between two grad lists."""
    worst = 0.0
    for (aw, ab), (nw, nb) in zip(analytic, numeric):
        for a, n in ((aw, nw), (ab, nb)):
            denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
            worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
