"""Small numerical helpers: finite differences and monotone inversion."""

import numpy as np
from scipy.optimize import brentq


def fd_step(x):
    return 1e-6 * (1.0 + np.linalg.norm(x))


def fd_gradient(fun, x, h=None):
    """Central-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    h = fd_step(x) if h is None else h
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        grad[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return grad


def fd_jacobian(fun, x, h=None):
    """Central-difference Jacobian; row i is d fun / d x_i transposed to (out, n)."""
    x = np.asarray(x, dtype=float)
    h = fd_step(x) if h is None else h
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def relative_error(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.linalg.norm(a - b) / max(1.0, np.linalg.norm(b))


def invert_monotone(fun, y, hi=1.0, xtol=1e-10):
    """Solve ``fun(x) = y`` for increasing ``fun`` with ``fun(0) = 0``.

    The upper bracket is doubled until it encloses the root.
    """
    if y <= 0:
        return 0.0
    while fun(hi) < y:
        hi *= 2.0
        if hi > 1e12:
            raise ValueError("could not bracket the inverse")
    return brentq(lambda s: fun(s) - y, 0.0, hi, xtol=xtol)
