"""Deterministic sample sets: low-discrepancy balls and direction grids."""

import numpy as np
from scipy import stats
from scipy.stats import qmc


def ball_samples(n_dim, radius, count, seed, include_axes=True):
    """Low-discrepancy points in the ball of given radius around the origin.

    Scrambled Sobol points pushed through the inverse normal CDF give
    directions; a separate Sobol coordinate gives the radial factor with
    the r^(1/n) volume correction.  The origin and the +-radius axis
    points are appended so structural zeros get probed exactly where the
    displayed examples evaluate them.
    """
    eng = qmc.Sobol(d=n_dim + 1, scramble=True, seed=seed)
    # draw a power-of-two batch (the sequence's natural block size) and
    # truncate; the leading points are identical either way
    raw = eng.random(1 << max(0, int(np.ceil(np.log2(count)))))[:count]
    gauss = stats.norm.ppf(np.clip(raw[:, :n_dim], 1e-12, 1 - 1e-12))
    nrm = np.linalg.norm(gauss, axis=1, keepdims=True)
    nrm[nrm == 0.0] = 1.0
    dirs = gauss / nrm
    radial = radius * raw[:, n_dim:] ** (1.0 / n_dim)
    pts = dirs * radial
    if include_axes:
        extra = [np.zeros(n_dim)]
        for i in range(n_dim):
            e = np.zeros(n_dim)
            e[i] = radius
            extra.extend([e.copy(), -e])
        pts = np.vstack([pts, extra])
    return pts


def sphere_samples(d, count):
    """Unit directions: +-1 for d=1, equi-angular for d=2, Fibonacci for d=3."""
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        th = 2.0 * np.pi * np.arange(count) / count
        return np.column_stack([np.cos(th), np.sin(th)])
    if d == 3:
        i = np.arange(count) + 0.5
        phi = np.arccos(1.0 - 2.0 * i / count)
        golden = np.pi * (1.0 + np.sqrt(5.0))
        th = golden * i
        return np.column_stack([
            np.sin(phi) * np.cos(th), np.sin(phi) * np.sin(th), np.cos(phi)])
    raise ValueError("d must be 1, 2 or 3")
