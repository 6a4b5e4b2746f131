"""Partially normalized coordinates.

Pipeline: normalize_equilibrium (systems module) -> preprocess_linear
(two linear changes of state so grad Q(0) has zero leading columns and
the first eigenvector at the origin is e1) -> build_chart (curvilinear
map straightening the first-family trajectories) -> transform_system
(evaluators of the system written in chart coordinates, where the
first column of every A matrix below row 1 vanishes).

Wave-decomposition and v1 diagnostics for gridded chart fields live at
the bottom; they are what the solver's traces are built from.
"""

import numpy as np
from scipy import optimize

from . import numdiff
from .eigen import (
    EigenPacket,
    first_left_fn,
    first_right_fn,
    grad_first_right_fn,
    lambda1_fn,
)
from .systems import SystemSpec, conjugate_plugins
from .sampling import ball_samples, sphere_samples


class ChartDomainError(RuntimeError):
    """Point cannot be handled by the chart (outside its validity ball)."""


class TrajectoryEscapeError(ChartDomainError):
    """Integral curve left the state-space domain ball before the arc ended."""

    def __init__(self, message, arc_reached, state):
        super().__init__(message)
        self.arc_reached = arc_reached
        self.state = state


def _rk4(rhs, y, h):
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * h * k1)
    k3 = rhs(y + 0.5 * h * k2)
    k4 = rhs(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_adaptive(rhs, y0, s_end, tol=1e-10, max_steps=200000, monitor=None):
    """Autonomous RK4 with step doubling; local error kept under tol per unit arc.

    The accepted value is the Richardson combination of the full and
    half-step results (effectively fifth order locally).  monitor, if
    given, is called with (arc_so_far, state) after every accepted step.
    """
    y = np.asarray(y0, dtype=float).copy()
    if s_end == 0.0:
        return y
    direction = np.sign(s_end)
    s = 0.0
    h = direction * min(0.05, abs(s_end))
    for _ in range(max_steps):
        if direction * (s + h) > direction * s_end:
            h = s_end - s
        y_full = _rk4(rhs, y, h)
        y_half = _rk4(rhs, _rk4(rhs, y, 0.5 * h), 0.5 * h)
        err = np.max(np.abs(y_full - y_half)) / 15.0
        budget = tol * abs(h)
        if err <= budget:
            y = y_half + (y_half - y_full) / 15.0
            s += h
            if monitor is not None:
                monitor(s, y)
            if abs(s - s_end) <= 1e-15 * (1.0 + abs(s_end)):
                return y
        factor = 0.9 * (budget / (err + 1e-300)) ** 0.25
        h *= min(5.0, max(0.2, factor))
    raise RuntimeError("adaptive integrator exceeded the step budget")


def trajectory(sys, u0, s, tol=1e-10, enforce_domain=True):
    """Integral curve of the first characteristic field through u0, arc s.

    Uses the closed-form flow plug-in when the system registers one;
    otherwise adaptive RK4 on du/ds = r1(u).  Leaving the system's
    domain ball raises TrajectoryEscapeError carrying the reached arc.
    """
    from .systems import StateVector

    wrap = isinstance(u0, StateVector)
    u = np.asarray(u0.data if wrap else u0, dtype=float)
    if enforce_domain and not sys.in_domain(u):
        raise TrajectoryEscapeError("initial state outside the domain ball", 0.0, u)

    flow = sys.plugins.get("first_flow")
    if flow is not None:
        out = np.asarray(flow(u, float(s)), dtype=float)
        if enforce_domain and not sys.in_domain(out):
            lo, hi = 0.0, float(s)
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if sys.in_domain(np.asarray(flow(u, mid), dtype=float)):
                    lo = mid
                else:
                    hi = mid
            state = np.asarray(flow(u, lo), dtype=float)
            raise TrajectoryEscapeError(
                "trajectory left the domain ball at arc %.6g (target %.6g)"
                % (lo, float(s)), lo, state)
    else:
        r1 = first_right_fn(sys)

        def monitor(arc, y):
            if enforce_domain and not sys.in_domain(y):
                raise TrajectoryEscapeError(
                    "trajectory left the domain ball at arc %.6g (target %.6g)"
                    % (arc, float(s)), arc, y)

        out = integrate_adaptive(r1, u, float(s), tol=tol, monitor=monitor)
    return sys.split(out) if wrap else out


# --- linear preprocessing (two changes of state) -----------------------------


def preprocess_linear(sys):
    """Linear change of state giving grad Q(0) zero leading columns and
    first eigenvector e1 at the origin.

    Returns a new SystemSpec (states z, original u = P z) with the
    composite matrix recorded under params["preprocess_matrix"]; a
    system already in the target form is returned unchanged.
    """
    n, r = sys.n, sys.r
    z = np.zeros(n)
    if np.linalg.norm(sys.equilibrium) > 0.0:
        raise ValueError("equilibrium must sit at the origin; "
                         "apply normalize_equilibrium first")
    K = sys.grad_Q(z)
    KD = K[r:, r:]
    smin = np.linalg.svd(KD, compute_uv=False)[-1]
    if smin <= 1e-8:
        raise ValueError(
            "damped block of grad Q(0) is singular (sigma_min = %.3e); "
            "the preprocessing premise fails" % smin)
    r1_0 = first_right_fn(sys)(z)
    kern = np.linalg.norm(K @ r1_0) / max(np.linalg.norm(r1_0), 1e-300)
    if kern > 1e-6 * (1.0 + np.linalg.norm(K)):
        raise ValueError(
            "first eigenvector at the origin is not in ker grad Q(0) "
            "(residual %.3e); the distinguished-family premise fails" % kern)

    cols_zero = np.max(np.abs(K[:, :r])) < 1e-12
    r1_is_e1 = abs(r1_0[0] - 1.0) < 1e-12 and np.max(np.abs(r1_0[1:])) < 1e-12
    if cols_zero and r1_is_e1:
        return sys

    # step 1: row shear making the leading columns of grad Q(0) vanish
    M = np.eye(n)
    if not cols_zero:
        M[r:, :r] = np.linalg.solve(KD, K[r:, :r])
    Minv = np.eye(n)
    Minv[r:, :r] = -M[r:, :r]
    r1p = M @ r1_0

    # step 2: column replacement sending the first eigenvector to e1
    head = np.abs(r1p[:r])
    if np.max(head) < 1e-10:
        raise ValueError(
            "structural contradiction: the first eigenvector has no weight "
            "on the undamped components, so it cannot be mapped to e1 while "
            "keeping the zero-column form")
    i1 = int(np.argmax(head))
    R = np.zeros((n, n))
    R[:, 0] = r1p
    col = 1
    for q in range(r):
        if q == i1:
            continue
        R[q, col] = 1.0
        col += 1
    for p in range(r, n):
        R[p, col] = 1.0
        col += 1
    if abs(np.linalg.det(R)) < 1e-12:
        raise ValueError("preprocessing column matrix is singular")

    P = Minv @ R          # u = P z
    Pinv = np.linalg.inv(P)

    # post-checks: the construction must actually reach the target form
    Kz = Pinv @ K @ P
    if np.max(np.abs(Kz[:, :r])) > 1e-10:
        raise ValueError("preprocessing failed to zero the leading columns "
                         "of grad Q(0) (residual %.3e)" % np.max(np.abs(Kz[:, :r])))
    r1z = Pinv @ r1_0
    if np.max(np.abs(r1z - np.eye(n)[:, 0])) > 1e-10:
        raise ValueError("preprocessing failed to send the first eigenvector to e1")

    eval_A = lambda zz, k: Pinv @ sys.eval_A(P @ np.asarray(zz, float), k) @ P
    eval_Q = lambda zz: Pinv @ np.asarray(sys.eval_Q(P @ np.asarray(zz, float)), float)
    eval_G = None
    if sys.eval_G is not None:
        eval_G = lambda zz: Pinv @ np.asarray(sys.eval_G(P @ np.asarray(zz, float)), float)
    eval_eta = None
    if sys.eval_eta is not None:
        eval_eta = lambda zz: sys.eval_eta(P @ np.asarray(zz, float))
    eval_psi = None
    if sys.eval_psi is not None:
        eval_psi = lambda zz, k: sys.eval_psi(P @ np.asarray(zz, float), k)

    eigen_provider = None
    if sys.eigen_provider is not None:
        def eigen_provider(zz, omega):
            pkt = sys.eigen_provider(P @ np.asarray(zz, float), omega)
            return EigenPacket(lambdas=pkt.lambdas, left=pkt.left @ P,
                               right=Pinv @ pkt.right,
                               at=(np.asarray(zz, float), np.asarray(omega, float)))

    params = dict(sys.params)
    params["preprocess_matrix"] = P.tolist()
    params["preprocess_matrix_inv"] = Pinv.tolist()
    sig_max = np.linalg.svd(P, compute_uv=False)[0]

    return SystemSpec(
        name=sys.name,
        d=sys.d,
        n=n,
        r=r,
        eval_A=eval_A,
        eval_Q=eval_Q,
        equilibrium=np.zeros(n),
        eval_G=eval_G,
        eval_eta=eval_eta,
        eval_psi=eval_psi,
        eigen_provider=eigen_provider,
        domain_radius=sys.domain_radius / sig_max,
        params=params,
        plugins=conjugate_plugins(sys.plugins, P, Pinv),
    )


# --- the chart ---------------------------------------------------------------


class Chart:
    """Curvilinear coordinates straightening the first-family trajectories.

    forward maps chart coordinates to states by flowing the base point
    (0, ut_2..ut_n) an arc ut_1 along the first eigenvector field;
    inverse is Newton; jacobian integrates the variational equation
    (or uses the flow-Jacobian plug-in), with the first column set to
    the exact eigenvector.  Batch variants act on (n, *grid) arrays.
    """

    def __init__(self, parent, radius=0.2):
        self.parent = parent
        self.radius = float(radius)
        self.n = parent.n
        self._flow = parent.plugins.get("first_flow")
        self._flowJ = parent.plugins.get("first_flow_jacobian")
        self._r1 = first_right_fn(parent)
        self._gradr1 = grad_first_right_fn(parent)
        self._r1b_plug = parent.plugins.get("first_right_batch")
        self.shrink_count = 0
        self.cond_max = None

    # pointwise ---------------------------------------------------------------

    def forward(self, ut):
        ut = np.asarray(ut, dtype=float)
        base = ut.copy()
        base[0] = 0.0
        arc = float(ut[0])
        if self._flow is not None:
            return np.asarray(self._flow(base, arc), dtype=float)
        if arc == 0.0:
            return base
        return integrate_adaptive(self._r1, base, arc, tol=1e-12)

    def inverse(self, u, tol=1e-12, max_iter=50):
        u = np.asarray(u, dtype=float)
        ut = u.copy()  # J(0) = I makes the state itself a valid first guess
        res = np.max(np.abs(self.forward(ut) - u))
        for _ in range(max_iter):
            if res < tol:
                return ut
            F = self.forward(ut) - u
            step = np.linalg.solve(self.jacobian(ut), F)
            lam = 1.0
            for _ in range(25):
                cand = ut - lam * step
                cand_res = np.max(np.abs(self.forward(cand) - u))
                if cand_res < res:
                    ut, res = cand, cand_res
                    break
                lam *= 0.5
            else:
                break  # no descent; switch to the arc bisection fallback
        ut = self._inverse_arc(u, tol=tol)
        if ut is None:
            raise ChartDomainError(
                "Newton inverse did not converge; point outside chart domain")
        return ut

    def _inverse_arc(self, u, tol=1e-12):
        """Fallback inverse: find the arc sigma with flow(-sigma, u)_1 = 0."""

        def back(sig):
            if self._flow is not None:
                return np.asarray(self._flow(u, -sig), dtype=float)
            return integrate_adaptive(self._r1, u, -sig, tol=1e-12)

        sigma = float(u[0])
        ok = False
        for _ in range(30):
            w = back(sigma)
            F = float(w[0])
            if abs(F) < tol:
                ok = True
                break
            r11 = float(self._r1(w)[0])
            if abs(r11) < 1e-8:
                break
            sigma += F / r11
        if not ok:
            span = 2.0 * max(self.radius, abs(float(u[0])))
            lo, hi = -span, span
            flo, fhi = float(back(lo)[0]), float(back(hi)[0])
            grow = 0
            while flo * fhi > 0.0 and grow < 4:
                lo *= 2.0
                hi *= 2.0
                flo, fhi = float(back(lo)[0]), float(back(hi)[0])
                grow += 1
            if flo * fhi > 0.0:
                return None
            sigma = optimize.brentq(lambda s: float(back(s)[0]), lo, hi,
                                    xtol=1e-14)
            w = back(sigma)
        ut = w.copy()
        ut[0] = sigma
        return ut

    def jacobian(self, ut):
        ut = np.asarray(ut, dtype=float)
        u = self.forward(ut)
        n = self.n
        J = np.empty((n, n))
        J[:, 0] = self._r1(u)
        base = ut.copy()
        base[0] = 0.0
        arc = float(ut[0])
        if self._flowJ is not None:
            DPhi = np.asarray(self._flowJ(base, arc), dtype=float)
            J[:, 1:] = DPhi[:, 1:]
            return J
        if arc == 0.0:
            J[:, 1:] = np.eye(n)[:, 1:]
            return J
        # variational equation dV/ds = grad r1(u(s)) V along the trajectory
        y0 = np.concatenate([base, np.eye(n).ravel()])

        def rhs(y):
            uu = y[:n]
            V = y[n:].reshape(n, n)
            return np.concatenate([self._r1(uu),
                                   (self._gradr1(uu) @ V).ravel()])

        y = integrate_adaptive(rhs, y0, arc, tol=1e-12)
        V = y[n:].reshape(n, n)
        J[:, 1:] = V[:, 1:]
        return J

    def jacobian_fd(self, ut, h0=1e-6):
        """Finite-difference Jacobian of forward; cross-check for jacobian.

        The first column is replaced by the exact eigenvector at the
        image point, which both paths share by construction.
        """
        ut = np.asarray(ut, dtype=float)
        J = numdiff.jacobian(self.forward, ut, h0=h0)
        J[:, 0] = self._r1(self.forward(ut))
        return J

    def in_domain(self, ut):
        return np.linalg.norm(np.asarray(ut, dtype=float)) <= self.radius

    # batch -------------------------------------------------------------------

    def _r1_batch(self, U):
        if self._r1b_plug is not None:
            return np.asarray(self._r1b_plug(U), dtype=float)
        shape = U.shape
        flat = U.reshape(shape[0], -1)
        out = np.empty_like(flat)
        for j in range(flat.shape[1]):
            out[:, j] = self._r1(flat[:, j])
        return out.reshape(shape)

    def forward_batch(self, U):
        U = np.asarray(U, dtype=float)
        base = U.copy()
        base[0] = 0.0
        s = U[0]
        if self._flow is not None:
            return np.asarray(self._flow(base, s), dtype=float)
        # rescaled arc: dY/dtau = s * r1(Y), tau in [0,1], fixed-step RK4
        steps = 64
        h = 1.0 / steps
        Y = base
        rhs = lambda W: s * self._r1_batch(W)
        for _ in range(steps):
            Y = _rk4(rhs, Y, h)
        return Y

    def inverse_batch(self, U, tol=1e-12, max_iter=50):
        U = np.asarray(U, dtype=float)
        if self._flow is None:
            shape = U.shape
            flat = U.reshape(shape[0], -1)
            out = np.empty_like(flat)
            for j in range(flat.shape[1]):
                out[:, j] = self.inverse(flat[:, j])
            return out.reshape(shape)
        sigma = U[0].copy()
        for _ in range(max_iter):
            W = np.asarray(self._flow(U, -sigma), dtype=float)
            F = W[0]
            if np.max(np.abs(F)) < tol:
                break
            r11 = self._r1_batch(W)[0]
            sigma = sigma + F / r11
        else:
            raise ChartDomainError("batch inverse did not converge")
        out = W.copy()
        out[0] = sigma
        return out

    def jacobian_batch(self, U):
        U = np.asarray(U, dtype=float)
        if self._flowJ is None:
            shape = U.shape
            flat = U.reshape(shape[0], -1)
            out = np.empty((shape[0], shape[0], flat.shape[1]))
            for j in range(flat.shape[1]):
                out[:, :, j] = self.jacobian(flat[:, j])
            return out.reshape((shape[0], shape[0]) + shape[1:])
        base = U.copy()
        base[0] = 0.0
        J = np.asarray(self._flowJ(base, U[0]), dtype=float).copy()
        J[:, 0] = self._r1_batch(self.forward_batch(U))
        return J


def build_chart(sys, radius=0.2, seed=0, n_validate=32):
    """Chart around the origin of a preprocessed system.

    Shrinks the advertised radius (halving, recorded on the chart) until
    the Jacobian conditioning stays below 1e6 on a validation sample.
    """
    z = np.zeros(sys.n)
    r1_0 = first_right_fn(sys)(z)
    if np.max(np.abs(r1_0 - np.eye(sys.n)[:, 0])) > 1e-8:
        raise ValueError("first eigenvector at the origin is not e1; "
                         "apply preprocess_linear before building the chart")
    chart = Chart(sys, radius=radius)
    for _ in range(20):
        pts = ball_samples(sys.n, chart.radius, n_validate, seed)
        conds = [np.linalg.cond(chart.jacobian(p)) for p in pts]
        chart.cond_max = float(np.max(conds))
        if chart.cond_max <= 1e6:
            break
        chart.radius *= 0.5
        chart.shrink_count += 1
    else:
        raise ChartDomainError("chart Jacobian stays ill-conditioned even "
                               "after shrinking the domain")
    return chart


# --- the system in chart coordinates ----------------------------------------


class TransformedSystem:
    """Evaluators of the balance law written in chart coordinates.

    Matrices conjugate by the chart Jacobian, the source pulls back
    through it, eigenvectors map columnwise/rowwise, and the entropy
    becomes eta(u(ut)) with gradient J^T grad eta.  Theta (the source
    linearization at the origin) and the second-order source tensor are
    cached after first use.
    """

    def __init__(self, chart):
        self.chart = chart
        self.parent = chart.parent
        self.n = self.parent.n
        self.d = self.parent.d
        self.r = self.parent.r
        self._r1 = first_right_fn(self.parent)
        self._l1 = first_left_fn(self.parent)
        self._lam1 = lambda1_fn(self.parent)
        self._theta = None
        self._theta_fd_delta = None
        self._upsilon = None

    # geometry ----------------------------------------------------------------

    @property
    def radius(self):
        return self.chart.radius

    def in_domain(self, ut):
        return self.chart.in_domain(ut)

    def u_of(self, ut):
        return self.chart.forward(ut)

    def J(self, ut):
        J = self.chart.jacobian(ut)
        cond = np.linalg.cond(J)
        if cond > 1e6:
            raise ChartDomainError(
                "chart Jacobian condition %.3e at |ut|=%.3g; shrink the chart"
                % (cond, np.linalg.norm(ut)))
        return J

    # matrices and source -----------------------------------------------------

    def A(self, ut, k):
        u = self.u_of(ut)
        J = self.J(ut)
        return np.linalg.solve(J, self.parent.A(u, k) @ J)

    def A_dir(self, ut, omega):
        u = self.u_of(ut)
        J = self.J(ut)
        return np.linalg.solve(J, self.parent.direction_matrix(u, omega) @ J)

    def A_flat(self, ut, omega):
        return self.A_dir(ut, omega)[1:, 1:]

    def A_sharp(self, ut, omega):
        return self.A_dir(ut, omega)[0, 1:]

    def Q(self, ut):
        return np.linalg.solve(self.J(ut), self.parent.Q(self.u_of(ut)))

    @property
    def theta(self):
        if self._theta is None:
            z = np.zeros(self.n)
            fd = numdiff.jacobian(self.Q, z)
            analytic = self.parent.grad_Q(z)
            self._theta_fd_delta = float(np.max(np.abs(fd - analytic)))
            if self._theta_fd_delta > 1e-5:
                raise RuntimeError(
                    "source linearization through the chart differs from the "
                    "origin value by %.3e; chart inconsistent" % self._theta_fd_delta)
            self._theta = analytic
        return self._theta

    @property
    def theta_flat(self):
        return self.theta[1:, 1:]

    @property
    def theta_D(self):
        return self.theta[self.r:, self.r:]

    def upsilon(self):
        """Second derivatives of the transformed source at the origin,
        as a tensor T[i, i', i'']."""
        if self._upsilon is None:
            z = np.zeros(self.n)
            T = np.empty((self.n, self.n, self.n))
            for i in range(self.n):
                T[i] = numdiff.hessian(
                    lambda w, i=i: float(self.Q(w)[i]), z, h=1e-3)
            self._upsilon = T
        return self._upsilon

    # eigen structure ---------------------------------------------------------

    def eigen(self, ut, omega):
        u = self.u_of(ut)
        J = self.J(ut)
        pkt = None
        if self.parent.eigen_provider is not None:
            pkt = self.parent.eigen_provider(u, np.asarray(omega, float))
        else:
            from .eigen import eigen_decompose
            pkt = eigen_decompose(self.parent, u, omega)
        return EigenPacket(
            lambdas=pkt.lambdas,
            left=pkt.left @ J,
            right=np.linalg.solve(J, pkt.right),
            at=(np.asarray(ut, float), np.asarray(omega, float)))

    def lam(self, ut, omega):
        return self.eigen(ut, omega).lambdas

    def lambda1(self, ut, omega):
        return self._lam1(self.u_of(ut), np.asarray(omega, float))

    def r1(self, ut):
        return np.linalg.solve(self.J(ut), self._r1(self.u_of(ut)))

    def l1(self, ut):
        return self._l1(self.u_of(ut)) @ self.J(ut)

    # entropy and conserved variables ----------------------------------------

    def eta(self, ut):
        return self.parent.eta(self.u_of(ut))

    def grad_eta(self, ut):
        return self.J(ut).T @ self.parent.grad_eta(self.u_of(ut))

    def hess_eta(self, ut):
        H = numdiff.jacobian(self.grad_eta, np.asarray(ut, float))
        return 0.5 * (H + H.T)

    def G(self, ut):
        return self.parent.G(self.u_of(ut))

    def grad_G(self, ut):
        return self.parent.grad_G(self.u_of(ut)) @ self.J(ut)

    def hess_G_components(self, ut):
        """Hessian (in chart coords) of each conserved-variable component."""
        ut = np.asarray(ut, float)
        rows = numdiff.jacobian(lambda w: self.grad_G(w).ravel(), ut)
        n = self.n
        out = np.empty((n, n, n))
        for i in range(n):
            Hi = rows[i * n:(i + 1) * n, :]
            out[i] = 0.5 * (Hi + Hi.T)
        return out

    # batch helpers for the solver -------------------------------------------

    def u_of_batch(self, Ut):
        return self.chart.forward_batch(Ut)

    def l1_batch(self, Ut):
        """Row covector of the first family at every grid point, (n, *grid)."""
        Ut = np.asarray(Ut, dtype=float)
        J = self.chart.jacobian_batch(Ut)
        U = self.chart.forward_batch(Ut)
        shape = Ut.shape
        flat = U.reshape(shape[0], -1)
        lrows = np.empty_like(flat)
        for j in range(flat.shape[1]):
            lrows[:, j] = self._l1(flat[:, j])
        lrows = lrows.reshape(shape)
        return np.einsum("i...,ij...->j...", lrows, J)

    def rhs_batch(self, Ut, DUt):
        """Advection + source of the chart-coordinate system.

        Ut is the chart field (n, *grid); DUt its spatial derivatives
        (d, n, *grid).  Returns -sum_k Atil^k dUt_k + Qtil pointwise,
        computed by pushing derivatives through the Jacobian so only the
        parent's batch evaluators are needed.
        """
        Ut = np.asarray(Ut, dtype=float)
        DUt = np.asarray(DUt, dtype=float)
        U = self.chart.forward_batch(Ut)
        Jb = self.chart.jacobian_batch(Ut)
        DU = np.einsum("ij...,kj...->ki...", Jb, DUt)
        adv_plug = self.parent.plugins.get("advection_batch")
        src_plug = self.parent.plugins.get("source_batch")
        if adv_plug is not None:
            adv = np.asarray(adv_plug(U, DU), dtype=float)
        else:
            shape = U.shape
            flat_u = U.reshape(shape[0], -1)
            flat_d = DU.reshape(self.d, shape[0], -1)
            adv = np.zeros_like(flat_u)
            for j in range(flat_u.shape[1]):
                for k in range(self.d):
                    adv[:, j] += self.parent.A(flat_u[:, j], k) @ flat_d[k, :, j]
            adv = adv.reshape(shape)
        if src_plug is not None:
            src = np.asarray(src_plug(U), dtype=float)
        else:
            shape = U.shape
            flat_u = U.reshape(shape[0], -1)
            src = np.empty_like(flat_u)
            for j in range(flat_u.shape[1]):
                src[:, j] = self.parent.Q(flat_u[:, j])
            src = src.reshape(shape)
        rhs_u = src - adv
        Jmoved = np.moveaxis(Jb, (0, 1), (-2, -1))
        rhs_moved = np.moveaxis(rhs_u, 0, -1)[..., None]
        sol = np.linalg.solve(Jmoved, rhs_moved)[..., 0]
        return np.moveaxis(sol, -1, 0)


def transform_system(sys, chart):
    if chart.parent is not sys:
        raise ValueError("chart was built for a different system")
    return TransformedSystem(chart)


def verify_block_structure(tsys, n_samples=128, seed=0, radius=0.1):
    """Sampled residuals of the chart-coordinate block structure.

    Checks, over paired (state, direction) samples: the vanishing first
    column below row 1, the first diagonal entry equalling the first
    eigenvalue, the first right eigenvector being e1, the first left
    covector being e1^T, and the zero leading rows/columns of theta.
    """
    radius = min(radius, tsys.radius)
    pts = ball_samples(tsys.n, radius, n_samples, seed)
    omegas = sphere_samples(tsys.d, max(8, n_samples // 4))
    e1 = np.eye(tsys.n)[:, 0]
    worst = {"A_j1": 0.0, "A_11_vs_lambda1": 0.0, "r1_vs_e1": 0.0,
             "l1_structure": 0.0}
    for j, ut in enumerate(pts):
        omega = omegas[j % len(omegas)]
        Ad = tsys.A_dir(ut, omega)
        lam1 = tsys.lambda1(ut, omega)
        worst["A_j1"] = max(worst["A_j1"], float(np.max(np.abs(Ad[1:, 0]))))
        worst["A_11_vs_lambda1"] = max(worst["A_11_vs_lambda1"],
                                       abs(float(Ad[0, 0]) - lam1))
        worst["r1_vs_e1"] = max(worst["r1_vs_e1"],
                                float(np.max(np.abs(tsys.r1(ut) - e1))))
        l1 = tsys.l1(ut)
        worst["l1_structure"] = max(worst["l1_structure"],
                                    abs(l1[0] - 1.0))
        pkt = tsys.eigen(ut, omega)
        worst["l1_structure"] = max(worst["l1_structure"],
                                    float(np.max(np.abs(pkt.left[1:, 0]))))
    th = tsys.theta
    r = tsys.r
    theta_res = max(float(np.max(np.abs(th[:r, :]))),
                    float(np.max(np.abs(th[:, :r]))))
    report = {
        "samples": len(pts),
        "radius": radius,
        "max_A_j1": worst["A_j1"],
        "max_A11_minus_lambda1": worst["A_11_vs_lambda1"],
        "max_r1_minus_e1": worst["r1_vs_e1"],
        "max_l1_structure": worst["l1_structure"],
        "theta_leading_rows_cols": theta_res,
        "pass_A_j1": worst["A_j1"] < 1e-7,
        "pass_A11": worst["A_11_vs_lambda1"] < 1e-7,
        "pass_r1": worst["r1_vs_e1"] < 1e-9,
        "pass_l1": worst["l1_structure"] < 1e-9,
        "pass_theta": theta_res < 1e-8,
    }
    report["pass"] = all(v for k, v in report.items() if k.startswith("pass_"))
    return report


# --- gridded diagnostics -----------------------------------------------------


def wave_decompose(field, k, tsys, grid):
    """Characteristic components w_i = l_i(ut, e_k) . d(ut)/dx_k pointwise.

    field is a chart-coordinate state field (n, *grid).  Returns an array
    of the same shape whose component i is the i-th wave strength.  The
    per-point eigen solve makes this a diagnostic for modest grids, not
    an inner-loop operation.
    """
    field = np.asarray(field, dtype=float)
    dU = grid.deriv(field, k)
    ek = np.zeros(tsys.d)
    ek[k] = 1.0
    n = field.shape[0]
    flat_u = field.reshape(n, -1)
    flat_d = dU.reshape(n, -1)
    out = np.empty_like(flat_u)
    for j in range(flat_u.shape[1]):
        pkt = tsys.eigen(flat_u[:, j], ek)
        out[:, j] = pkt.left @ flat_d[:, j]
    return out.reshape(field.shape)


def wave_reconstruct(waves, field, k, tsys):
    """Inverse of wave_decompose at each point: sum_i w_i r_i."""
    field = np.asarray(field, dtype=float)
    waves = np.asarray(waves, dtype=float)
    ek = np.zeros(tsys.d)
    ek[k] = 1.0
    n = field.shape[0]
    flat_u = field.reshape(n, -1)
    flat_w = waves.reshape(n, -1)
    out = np.empty_like(flat_w)
    for j in range(flat_u.shape[1]):
        pkt = tsys.eigen(flat_u[:, j], ek)
        out[:, j] = pkt.right @ flat_w[:, j]
    return out.reshape(field.shape)


def v1_diagnostic(field, tsys, grid, qs=(1.0, 2.0)):
    """Scalar first-family variable v1(x) = l1(ut(x)) . ut(x) and L^q norms."""
    field = np.asarray(field, dtype=float)
    for q in qs:
        if not (1.0 <= float(q) <= 2.0):
            raise ValueError("q must lie in [1, 2]")
    amp = float(np.max(np.sqrt(np.sum(field**2, axis=0))))
    if amp > tsys.radius:
        raise ChartDomainError(
            "field amplitude %.3g exceeds the chart radius %.3g" % (amp, tsys.radius))
    l1 = tsys.l1_batch(field)
    v1 = np.sum(l1 * field, axis=0)
    norms = {float(q): grid.lq_norm(v1, q) for q in qs}
    return v1, norms


def chart_to_raw(chart, Ut):
    """Chart field -> normalized raw-coordinate field (undo chart, then
    undo the linear preprocessing when one is recorded)."""
    U = chart.forward_batch(np.asarray(Ut, dtype=float))
    P = chart.parent.params.get("preprocess_matrix")
    if P is not None:
        U = np.tensordot(np.asarray(P, dtype=float), U, axes=(1, 0))
    return U


def raw_to_chart(chart, U):
    """Normalized raw-coordinate field -> chart field."""
    U = np.asarray(U, dtype=float)
    Pinv = chart.parent.params.get("preprocess_matrix_inv")
    if Pinv is not None:
        U = np.tensordot(np.asarray(Pinv, dtype=float), U, axes=(1, 0))
    return chart.inverse_batch(U)
