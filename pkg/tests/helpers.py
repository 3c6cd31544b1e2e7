"""Shared test oracles."""

import numpy as np


def fd_gradients(f, xs, step=1e-5):
    """Central finite differences of a scalar function of numpy arrays.

    Returns one gradient array per input, evaluated coordinate by
    coordinate. Slow on purpose; use only at small dimensions.
    """
    grads = []
    for i in range(len(xs)):
        g = np.zeros_like(np.asarray(xs[i], dtype=np.float64))
        for j in range(g.size):
            plus = [np.array(a, dtype=np.float64, copy=True) for a in xs]
            minus = [np.array(a, dtype=np.float64, copy=True) for a in xs]
            plus[i].ravel()[j] += step
            minus[i].ravel()[j] -= step
            g.ravel()[j] = (f(*plus) - f(*minus)) / (2 * step)
        grads.append(g)
    return grads


def relative_error(analytic, numeric):
    """Max elementwise |a - n| / max(|n|, 1) over an array pair."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.abs(numeric), 1.0)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0
