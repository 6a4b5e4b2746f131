"""Finite-difference derivatives used when no analytic plug-in is registered.

Central differences with a step scaled by the state magnitude; Hessians
optionally Richardson-extrapolated (two steps, h and h/2) to push the
truncation error below the structural-zero thresholds used by the checker.
"""

import numpy as np

DEFAULT_STEP = 1e-6


def scaled_step(u, h0=DEFAULT_STEP):
    """Step h0 * (1 + |u|); keeps relative resolution away from the origin."""
    return h0 * (1.0 + float(np.linalg.norm(np.asarray(u, dtype=float))))


def grad(f, u, h0=DEFAULT_STEP):
    """Central-difference gradient of a scalar function at u."""
    u = np.asarray(u, dtype=float)
    h = scaled_step(u, h0)
    g = np.zeros(u.size)
    for i in range(u.size):
        up = u.copy()
        um = u.copy()
        up[i] += h
        um[i] -= h
        g[i] = (f(up) - f(um)) / (2.0 * h)
    return g


def jacobian(f, u, h0=DEFAULT_STEP):
    """Central-difference Jacobian of a vector function; columns are d/du_i."""
    u = np.asarray(u, dtype=float)
    h = scaled_step(u, h0)
    cols = []
    for i in range(u.size):
        up = u.copy()
        um = u.copy()
        up[i] += h
        um[i] -= h
        cols.append((np.asarray(f(up), dtype=float) - np.asarray(f(um), dtype=float)) / (2.0 * h))
    return np.stack(cols, axis=-1)


def _hessian_single(f, u, h):
    n = u.size
    H = np.zeros((n, n))
    f0 = f(u)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h
        H[i, i] = (f(u + ei) - 2.0 * f0 + f(u - ei)) / h**2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h
            H[i, j] = (f(u + ei + ej) - f(u + ei - ej) - f(u - ei + ej) + f(u - ei - ej)) / (4.0 * h**2)
            H[j, i] = H[i, j]
    return H


def hessian(f, u, h=1e-3, richardson=True):
    """Hessian of a scalar function by central differences.

    With richardson=True the h and h/2 tables are combined as
    (4*H(h/2) - H(h)) / 3, cancelling the leading h^2 error term.  The
    halved step (rather than h/10) keeps the fine table's roundoff,
    which the extrapolation amplifies, near the truncation level; in
    double precision this lands around 1e-8 for O(1) smooth functions,
    where an h/10 pair would sit at 1e-6.
    """
    u = np.asarray(u, dtype=float)
    H1 = _hessian_single(f, u, h)
    if not richardson:
        return H1
    H2 = _hessian_single(f, u, h / 2.0)
    return (4.0 * H2 - H1) / 3.0
