"""Biorthonormal eigen-decomposition of the direction matrix A(u, omega).

Family index 0 (the "first" family in the 1-based convention used in
reports) is the distinguished one: its right eigenvector lies in the
kernel of the source linearization at the equilibrium, so the partial
damping never acts on it directly.  Analytic providers attached to a
system are authoritative for labeling; the generic numeric path is kept
for cross-checks and for systems without closed-form eigenvectors.
"""

import dataclasses

import numpy as np
import scipy.linalg


class HyperbolicityError(ValueError):
    """Eigenvalues with non-negligible imaginary part."""


class DegenerateEigenvectorsError(ValueError):
    """Eigenvector matrix too ill-conditioned to biorthonormalize."""

    def __init__(self, msg, cluster=None):
        super().__init__(msg)
        self.cluster = cluster


@dataclasses.dataclass(frozen=True)
class EigenPacket:
    """Eigenvalues with matched left rows and right columns, l_i r_j = delta_ij."""

    lambdas: np.ndarray
    left: np.ndarray
    right: np.ndarray
    at: tuple  # (state, direction) the packet was evaluated at

    @property
    def n(self):
        return self.lambdas.size


def verify_packet(packet, A):
    """Max residuals of the packet invariants against an explicit matrix.

    Returns a dict with the biorthonormality residual ``lr_identity``,
    the two spectral residuals ``left_spectral`` (LA - diag(lambda) L) and
    ``right_spectral`` (AR - R diag(lambda)), plus their overall max.
    """
    A = np.asarray(A, dtype=float)
    L, R, lam = packet.left, packet.right, packet.lambdas
    lr = np.max(np.abs(L @ R - np.eye(packet.n)))
    la = np.max(np.abs(L @ A - lam[:, None] * L))
    ar = np.max(np.abs(A @ R - R * lam[None, :]))
    return {
        "lr_identity": float(lr),
        "left_spectral": float(la),
        "right_spectral": float(ar),
        "max": float(max(lr, la, ar)),
    }


def _check_direction(omega):
    omega = np.asarray(omega, dtype=float)
    nrm = np.linalg.norm(omega)
    if abs(nrm - 1.0) > 1e-12:
        raise ValueError(
            "direction must be a unit vector (|omega| = %.3e); normalize it first" % nrm
        )
    return omega


def eigen_decompose(sys, u, omega, force_numeric=False):
    """Eigen-decompose A(u, omega) into an EigenPacket.

    The system's analytic provider wins when present (it fixes smooth
    labeling and eigenvector scaling across repeated eigenvalues, which a
    numeric solver cannot).  The numeric fallback identifies the first
    family by the kernel test against the source linearization at the
    equilibrium and orders the remaining families by eigenvalue.
    """
    omega = _check_direction(omega)
    u = np.asarray(u, dtype=float)
    if sys.eigen_provider is not None and not force_numeric:
        return sys.eigen_provider(u, omega)

    A = sys.direction_matrix(u, omega)
    lam, R = scipy.linalg.eig(A)
    rho = max(np.max(np.abs(lam)), 0.0)
    tol_imag = 1e-9 * (1.0 + rho)
    if np.max(np.abs(lam.imag)) > tol_imag:
        raise HyperbolicityError(
            "direction matrix is not hyperbolic here: complex eigenvalues beyond "
            "tolerance (max imag %.3e)" % np.max(np.abs(lam.imag))
        )
    lam = lam.real
    R = R.real

    # family 1 by the kernel test |grad_Q(u*) r| ~ 0, then ascending eigenvalue
    K = sys.grad_Q(sys.equilibrium)
    scores = np.linalg.norm(K @ R, axis=0) / np.maximum(np.linalg.norm(R, axis=0), 1e-300)
    fam1 = int(np.argmin(scores))
    rest = [i for i in range(lam.size) if i != fam1]
    rest.sort(key=lambda i: (lam[i], i))
    order = [fam1] + rest
    lam = lam[order]
    R = R[:, order]

    cond = np.linalg.cond(R)
    if not np.isfinite(cond) or cond > 1e12:
        gaps = np.sort(lam)
        cluster = [
            (float(gaps[i]), float(gaps[i + 1]))
            for i in range(lam.size - 1)
            if abs(gaps[i + 1] - gaps[i]) < 1e-8 * (1.0 + rho)
        ]
        raise DegenerateEigenvectorsError(
            "eigenvector matrix near-defective (cond %.3e)" % cond, cluster=cluster
        )
    L = np.linalg.inv(R)
    return EigenPacket(lambdas=lam, left=L, right=R, at=(u.copy(), omega.copy()))


# --- first-family accessors -------------------------------------------------
#
# The distinguished family is queried constantly (trajectory right-hand
# sides, degeneracy checks), so these resolve the cheapest available path
# once and hand back a closure.

def _canonical_direction(d):
    e1 = np.zeros(d)
    e1[0] = 1.0
    return e1


def first_right_fn(sys):
    plug = sys.plugins.get("first_right")
    if plug is not None:
        return lambda u: np.asarray(plug(u), dtype=float)
    e1 = _canonical_direction(sys.d)
    return lambda u: eigen_decompose(sys, u, e1).right[:, 0].copy()


def first_left_fn(sys):
    plug = sys.plugins.get("first_left")
    if plug is not None:
        return lambda u: np.asarray(plug(u), dtype=float)
    e1 = _canonical_direction(sys.d)
    return lambda u: eigen_decompose(sys, u, e1).left[0, :].copy()


def first_right(sys, u):
    return first_right_fn(sys)(u)


def first_left(sys, u):
    return first_left_fn(sys)(u)


def lambda1_fn(sys):
    plug = sys.plugins.get("lambda1")
    if plug is not None:
        return lambda u, omega: float(plug(u, omega))
    return lambda u, omega: float(eigen_decompose(sys, u, omega).lambdas[0])


def grad_first_right_fn(sys):
    """du -> d(r_1)/du as an (n, n) matrix, analytic plug-in preferred."""
    plug = sys.plugins.get("grad_first_right")
    if plug is not None:
        return lambda u: np.asarray(plug(u), dtype=float)
    from . import numdiff

    r1 = first_right_fn(sys)
    return lambda u: numdiff.jacobian(r1, u)
