"""Symmetrizer, damped-block dissipation matrix, and the skew compensator.

All objects live in the flat (n-1)-dimensional block of the chart
coordinates: index 0..r-2 is the undamped C part, r-1..n-2 the damped D
part.  The compensator couples transported and damped components through
a skew-symmetric K(omega) found by direct non-smooth maximization of the
smallest eigenvalue of the associated linear-matrix inequality.
"""

import dataclasses
import json

import numpy as np
from scipy import optimize

from .sampling import ball_samples, sphere_samples


def symmetrizer(tsys, ut):
    """Entropy-based symmetrizer for the flat block at chart state ut.

    Hessian of the transformed entropy minus the curvature of the
    conserved-variable map weighted by the entropy gradient; the weight
    vanishes at the origin so the value there is just the entropy
    Hessian's flat block.
    """
    if tsys.parent.eval_G is None:
        raise ValueError(
            "symmetrizer checks require conserved variables: register eval_G")
    ut = np.asarray(ut, dtype=float)
    H = tsys.hess_eta(ut)
    w = tsys.grad_eta(ut) @ np.linalg.inv(tsys.grad_G(ut))
    HG = tsys.hess_G_components(ut)
    full = H - np.einsum("i,ijk->jk", w, HG)
    full = 0.5 * (full + full.T)
    return full[1:, 1:]


def symmetrizer_checks(tsys, n_samples=64, radius=0.05, seed=0):
    """Commutation and positive-definiteness of the symmetrizer on a ball."""
    max_comm = 0.0
    min_eig = np.inf
    for ut in ball_samples(tsys.n, radius, n_samples, seed):
        S0 = symmetrizer(tsys, ut)
        min_eig = min(min_eig, float(np.min(np.linalg.eigvalsh(S0))))
        for k in range(tsys.d):
            Ak = tsys.A(ut, k)[1:, 1:]
            M = S0 @ Ak
            max_comm = max(max_comm, float(np.max(np.abs(M - M.T))))
    return {
        "max_commutation": max_comm,
        "min_eigenvalue": min_eig,
        "pass_commutation": max_comm < 1e-6,
        "pass_posdef": min_eig > 0.0,
        "pass": max_comm < 1e-6 and min_eig > 0.0,
    }


@dataclasses.dataclass
class DissipationResult:
    M_D: np.ndarray
    c_m: float
    symmetry_residual: float
    cross_check_residual: float
    identity_residual: float
    passed: bool
    note: str = ""


def dissipation_matrix(tsys):
    """Damped-block dissipation matrix and its positivity constant.

    M_D = -(B4 Theta_D + Theta_D^T B4) with B4 the damped block of the
    transformed entropy Hessian at 0.  Two consistency residuals come
    along: the full Hessian/source assembly must vanish on every block
    touching the undamped components, and the flat-symmetrizer identity
    must reproduce -diag(0, M_D) there too.
    """
    r, n = tsys.r, tsys.n
    B = tsys.hess_eta(np.zeros(n))
    B4 = B[r:, r:]
    theta_D = tsys.theta_D
    M_D = -(B4 @ theta_D + theta_D.T @ B4)
    sym_res = float(np.max(np.abs(M_D - M_D.T)))
    c_m = float(np.min(np.linalg.eigvalsh(0.5 * (M_D + M_D.T))))

    theta = tsys.theta
    P = B @ theta + theta.T @ B
    lead = np.zeros((n, n), dtype=bool)
    lead[:r, :] = True
    lead[:, :r] = True
    cross = float(np.max(np.abs(P[lead])))

    S0 = symmetrizer(tsys, np.zeros(n))
    T = np.zeros((n - 1, n - 1))
    T[r - 1:, r - 1:] = theta_D
    target = np.zeros((n - 1, n - 1))
    target[r - 1:, r - 1:] = M_D
    resid = S0 @ T + T.T @ S0 + target
    flat_lead = np.zeros((n - 1, n - 1), dtype=bool)
    flat_lead[:r - 1, :] = True
    flat_lead[:, :r - 1] = True
    identity = float(np.max(np.abs(resid[flat_lead]))) if r > 1 else 0.0

    passed = c_m > 0.0
    note = "" if passed else (
        "structural failure: damped dissipation matrix is not positive "
        "definite (c_m = %.3e)" % c_m)
    return DissipationResult(M_D=M_D, c_m=c_m, symmetry_residual=sym_res,
                             cross_check_residual=cross,
                             identity_residual=identity,
                             passed=passed, note=note)


# --- compensator -------------------------------------------------------------


def _damping_mask(n, r, variant):
    """Diagonal target block in flat coordinates: which components carry
    direct dissipation.  "damped" puts the identity on the D indices; the
    "printed" variant reproduces the trailing (r-1)-sized block instead."""
    E = np.zeros((n - 1, n - 1))
    if variant == "damped":
        E[r - 1:, r - 1:] = np.eye(n - r)
    elif variant == "printed":
        if r > 1:
            E[-(r - 1):, -(r - 1):] = np.eye(r - 1)
    else:
        raise ValueError("unknown compensator variant %r" % (variant,))
    return E


def _skew_from_vector(theta, m):
    K = np.zeros((m, m))
    iu = np.triu_indices(m, k=1)
    K[iu] = theta
    return K - K.T


@dataclasses.dataclass
class CompensatorSlice:
    omega: np.ndarray
    K: np.ndarray
    margin: float
    passed: bool


def build_compensator(tsys, omega, norm_bound=10.0, restarts=20, seed=0,
                      variant="damped"):
    """Best skew K for one direction, by subgradient ascent plus a
    derivative-free polish on the strict upper triangle."""
    omega = np.asarray(omega, dtype=float)
    A = tsys.A_flat(np.zeros(tsys.n), omega)
    E = _damping_mask(tsys.n, tsys.r, variant)
    m = A.shape[0]
    iu = np.triu_indices(m, k=1)

    def lmi(K):
        return K @ A - A.T @ K + 2.0 * E

    def min_eig_and_vec(K):
        vals, vecs = np.linalg.eigh(lmi(K))
        return vals[0], vecs[:, 0]

    def ascend(K):
        best_val, _ = min_eig_and_vec(K)
        best_K = K.copy()
        for t in range(200):
            val, w = min_eig_and_vec(K)
            if val > best_val:
                best_val, best_K = val, K.copy()
            a = A @ w
            G = np.outer(w, a) - np.outer(a, w)
            gn = np.linalg.norm(G)
            if gn < 1e-14:
                break
            K = K + (0.3 / np.sqrt(1.0 + t)) * G / gn
            K = 0.5 * (K - K.T)
            nrm = np.linalg.norm(K)
            if nrm > norm_bound:
                K *= norm_bound / nrm
        return best_val, best_K

    rng = np.random.default_rng(seed)
    best_val, best_K = ascend(np.zeros((m, m)))
    for _ in range(restarts):
        R = rng.normal(scale=0.5, size=(m, m))
        val, K = ascend(R - R.T)
        if val > best_val:
            best_val, best_K = val, K

    def neg_margin(theta):
        K = _skew_from_vector(theta, m)
        nrm = np.linalg.norm(K)
        if nrm > norm_bound:
            K *= norm_bound / nrm
        return -np.linalg.eigvalsh(lmi(K))[0]

    res = optimize.minimize(neg_margin, best_K[iu], method="Nelder-Mead",
                            options={"fatol": 1e-13, "xatol": 1e-11,
                                     "maxiter": 4000})
    if -res.fun > best_val:
        best_K = _skew_from_vector(res.x, m)
        nrm = np.linalg.norm(best_K)
        if nrm > norm_bound:
            best_K *= norm_bound / nrm
        best_val = -res.fun

    c_k = 0.5 * best_val
    return CompensatorSlice(omega=omega, K=best_K, margin=float(c_k),
                            passed=bool(c_k >= 1e-4))


def _canonical_sign(omega):
    for x in omega:
        if abs(x) > 1e-12:
            return 1.0 if x > 0 else -1.0
    return 1.0


@dataclasses.dataclass
class CompensatorK:
    omegas: np.ndarray        # (m, d)
    tables: np.ndarray        # (m, n-1, n-1)
    margins: np.ndarray       # (m,)
    c_k: float
    norm_bound: float
    variant: str
    failures: list

    @classmethod
    def build(cls, tsys, n_directions=64, norm_bound=10.0, restarts=20,
              seed=0, variant="damped"):
        """Compensator table over a sphere grid.  Each direction is solved
        once on its canonical hemisphere representative and extended by
        K(-omega) = -K(omega), so oddness holds by construction."""
        omegas = sphere_samples(tsys.d, n_directions)
        cache = {}
        tables, margins, failures = [], [], []
        for i, om in enumerate(omegas):
            sign = _canonical_sign(om)
            canon = sign * om
            key = tuple(np.round(canon, 12))
            if key not in cache:
                cache[key] = build_compensator(tsys, canon, norm_bound,
                                               restarts, seed, variant)
            sl = cache[key]
            tables.append(sign * sl.K)
            margins.append(sl.margin)
            if not sl.passed:
                failures.append(i)
        margins = np.asarray(margins)
        return cls(omegas=np.asarray(omegas), tables=np.asarray(tables),
                   margins=margins, c_k=float(np.min(margins)),
                   norm_bound=norm_bound, variant=variant, failures=failures)

    @property
    def passed(self):
        return not self.failures and self.c_k >= 1e-4

    def skew_residual(self):
        return float(max(np.max(np.abs(K + K.T)) for K in self.tables))

    def oddness_residual(self):
        """Max mismatch of K(-omega) + K(omega) over antipodal grid pairs;
        0 when the grid has none (the table is still odd by construction)."""
        worst = 0.0
        for i, om in enumerate(self.omegas):
            diffs = np.linalg.norm(self.omegas + om, axis=1)
            j = int(np.argmin(diffs))
            if diffs[j] < 1e-10:
                worst = max(worst, float(np.max(np.abs(self.tables[i]
                                                       + self.tables[j]))))
        return worst

    def lmi_residual(self, tsys):
        """Most negative eigenvalue of the certified inequality across the
        grid (>= -1e-9 when the margins are genuine)."""
        E = _damping_mask(tsys.n, tsys.r, self.variant)
        worst = 0.0
        z = np.zeros(tsys.n)
        for om, K, ck in zip(self.omegas, self.tables, self.margins):
            A = tsys.A_flat(z, om)
            S = K @ A - A.T @ K + 2.0 * E - 2.0 * ck * np.eye(A.shape[0])
            worst = min(worst, float(np.linalg.eigvalsh(S)[0]))
        return worst

    def to_json(self):
        entries = {}
        for i in range(len(self.omegas)):
            entries[str(i)] = {
                "omega": [float(x) for x in self.omegas[i]],
                "margin": float(self.margins[i]),
                "K": [[float(x) for x in row] for row in self.tables[i]],
            }
        return json.dumps({
            "variant": self.variant,
            "norm_bound": self.norm_bound,
            "c_k": self.c_k,
            "failures": list(self.failures),
            "entries": entries,
        }, sort_keys=True, indent=2)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            data = json.load(fh)
        idx = sorted(data["entries"], key=int)
        omegas = np.asarray([data["entries"][i]["omega"] for i in idx])
        tables = np.asarray([data["entries"][i]["K"] for i in idx])
        margins = np.asarray([data["entries"][i]["margin"] for i in idx])
        return cls(omegas=omegas, tables=tables, margins=margins,
                   c_k=data["c_k"], norm_bound=data["norm_bound"],
                   variant=data["variant"], failures=data["failures"])


def entropy_functional(field, system, grid):
    """Integral of the entropy over the periodic box for a gridded state.

    Accepts either a raw system (field in original variables) or a
    transformed one (field in chart variables, mapped back pointwise).
    """
    field = np.asarray(field, dtype=float)
    if hasattr(system, "u_of_batch"):  # transformed: go back to raw states
        U = system.u_of_batch(field)
        base = system.parent
    else:
        U = field
        base = system
    plug = base.plugins.get("eta_batch")
    if plug is not None:
        vals = np.asarray(plug(U), dtype=float)
    else:
        flat = U.reshape(U.shape[0], -1)
        vals = np.apply_along_axis(base.eta, 0, flat).reshape(U.shape[1:])
    return float(grid.integrate(vals))
