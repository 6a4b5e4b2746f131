"""Pseudo-spectral time integration on the periodic box.

The stepper advances either the preprocessed state variables (default)
or the chart variables; in both cases the linear source at equilibrium
is integrated exactly by an exponential factor, and only the genuinely
nonlinear remainder goes through the RK4 stages.  Diagnostics are always
taken in chart coordinates, where the component groups and the
transported scalar are defined.
"""

import dataclasses
from typing import Optional

import numpy as np
from scipy import linalg as sla

from .coords import ChartDomainError, v1_diagnostic
from .dissipation import entropy_functional
from .fitting import fit_loglog
from .traces import DecayTrace, group_slice


@dataclasses.dataclass
class SimConfig:
    t_end: float = 40.0
    cfl: float = 0.4
    snapshot_dt: float = 1.0
    integrator: str = "ifrk4"           # ifrk4 | rk4
    mode: str = "u"                     # u | chart
    family: str = "gaussian"            # gaussian | dilated | packet
    eps: float = 1e-2
    width: float = 1.0
    group: str = "D"
    norms: tuple = ((0.0, "u1"), (0.0, "C"), (0.0, "D"))
    v1_q: tuple = (1.0,)
    fit_window: tuple = (5.0, 40.0)
    dt: Optional[float] = None
    k0: Optional[float] = None
    store_fields: bool = False

    def __post_init__(self):
        if self.integrator not in ("ifrk4", "rk4"):
            raise ValueError("integrator must be ifrk4 or rk4")
        if self.mode not in ("u", "chart"):
            raise ValueError("mode must be u or chart")


def measure_lambda_s(field, s, group, r, grid):
    """L2 norm of Lambda^s applied to one component group of a state."""
    field = np.asarray(field, dtype=float)
    view = field[group_slice(group, r, field.shape[0])]
    return grid.lambda_s_norm(view, s)


def make_initial_data(grid, tsys, family="gaussian", eps=1e-2, width=1.0,
                      group="D", k0=None, ell=2.0):
    """Chart-variable initial field of the requested family, with its
    surrogate size report.  Amplitudes that leave the chart ball are
    rejected up front rather than blowing up mid-run."""
    n, r = tsys.n, tsys.r
    X = grid.meshgrid()
    r2 = sum(x**2 for x in X)
    bump = float(eps) * np.exp(-0.5 * r2 / float(width) ** 2)
    if family in ("gaussian", "dilated"):
        prof = bump
    elif family == "packet":
        kk = (4.0 / width) if k0 is None else float(k0)
        prof = bump * np.cos(kk * X[0])
    else:
        raise ValueError("unknown initial-data family %r" % (family,))
    field = np.zeros((n,) + (grid.N,) * grid.d)
    field[group_slice(group, r, n)] = prof

    amax = float(np.max(np.sqrt(np.sum(field**2, axis=0))))
    if amax >= tsys.radius:
        raise ValueError(
            "amplitude outside chart domain: max |state| = %.3g >= "
            "radius %.3g; reduce eps" % (amax, tsys.radius))

    info = {
        "max_amplitude": amax,
        "H_ell_surrogate": float(np.hypot(grid.lambda_s_norm(field, 0.0),
                                          grid.lambda_s_norm(field, ell))),
        "C_L1": grid.lq_norm(np.sqrt(np.sum(field[1:r] ** 2, axis=0)), 1.0)
        if r > 1 else 0.0,
        "D_L2": grid.l2_norm(field[r:]),
        "u1_L1": grid.lq_norm(np.abs(field[0]), 1.0),
    }
    return field, info


def _matvec(M, field):
    return np.einsum("ij,j...->i...", M, field)


class Stepper:
    """One-step integrator for the balance law on a Grid.

    mode "u": state in preprocessed variables, source linearization at
    the origin integrated exactly.  mode "chart": state in chart
    variables, same treatment for the transformed linearization.
    """

    def __init__(self, tsys, grid, mode="u", dealias=True, extra_source=None):
        self.tsys = tsys
        self.grid = grid
        self.mode = mode
        self.dealias = dealias
        # optional field -> field term added to the evolved variables'
        # right-hand side (used to probe degeneracy-violating sources)
        self.extra_source = extra_source
        self.base = tsys.parent
        z = np.zeros(tsys.n)
        self.K = (self.base.grad_Q(z) if mode == "u" else tsys.theta)
        self._exp_cache = {}
        self._kv = grid.k_vectors()

    def _grad_field(self, field):
        spec = self.grid.fft(field)
        return np.stack([self.grid.ifft(1j * self._kv[k] * spec)
                         for k in range(self.grid.d)])

    def _dealias(self, field):
        if not self.dealias:
            return field
        return self.grid.ifft(self.grid.fft(field) * self.grid.dealias_mask)

    def nonlinear(self, field):
        """Full right-hand side minus the exact linear source part."""
        DU = self._grad_field(field)
        if self.mode == "chart":
            rhs = self.tsys.rhs_batch(field, DU)
        else:
            src_plug = self.base.plugins.get("source_batch")
            if src_plug is not None:
                src = np.asarray(src_plug(field), dtype=float)
            else:
                flat = field.reshape(field.shape[0], -1)
                src = np.apply_along_axis(self.base.Q, 0, flat).reshape(
                    field.shape)
            adv_plug = self.base.plugins.get("advection_batch")
            if adv_plug is not None:
                adv = np.asarray(adv_plug(field, DU), dtype=float)
            else:
                adv = np.zeros_like(field)
                flat = field.reshape(field.shape[0], -1)
                dflat = DU.reshape(self.grid.d, field.shape[0], -1)
                for m in range(flat.shape[1]):
                    acc = np.zeros(field.shape[0])
                    for k in range(self.grid.d):
                        acc += self.base.A(flat[:, m], k) @ dflat[k, :, m]
                    adv.reshape(field.shape[0], -1)[:, m] = acc
            rhs = src - adv
        if self.extra_source is not None:
            rhs = rhs + np.asarray(self.extra_source(field), dtype=float)
        return self._dealias(rhs - _matvec(self.K, field))

    def _exps(self, dt):
        key = float(dt)
        if key not in self._exp_cache:
            self._exp_cache[key] = (sla.expm(dt * self.K),
                                    sla.expm(0.5 * dt * self.K))
        return self._exp_cache[key]

    def step_ifrk4(self, field, dt):
        E, E2 = self._exps(dt)
        k1 = self.nonlinear(field)
        mid = _matvec(E2, field)
        k2 = self.nonlinear(mid + 0.5 * dt * _matvec(E2, k1))
        k3 = self.nonlinear(mid + 0.5 * dt * k2)
        k4 = self.nonlinear(_matvec(E, field) + dt * _matvec(E2, k3))
        return (_matvec(E, field)
                + dt / 6.0 * (_matvec(E, k1) + 2.0 * _matvec(E2, k2 + k3)
                              + k4))

    def step_rk4(self, field, dt):
        def rhs(f):
            return _matvec(self.K, f) + self.nonlinear(f)

        k1 = rhs(field)
        k2 = rhs(field + 0.5 * dt * k1)
        k3 = rhs(field + 0.5 * dt * k2)
        k4 = rhs(field + dt * k3)
        return field + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    def step(self, field, dt, integrator="ifrk4"):
        if integrator == "ifrk4":
            return self.step_ifrk4(field, dt)
        return self.step_rk4(field, dt)

    def max_speed(self, field):
        """Largest characteristic speed over the field (for the CFL)."""
        if self.mode == "chart":
            sub = (slice(None),) + (slice(None, None, 4),) * self.grid.d
            states = self.tsys.u_of_batch(np.ascontiguousarray(field[sub]))
        else:
            states = field
        plug = self.base.plugins.get("lambda_max_batch")
        if plug is not None:
            return float(np.max(np.asarray(plug(states))))
        flat = states.reshape(states.shape[0], -1)
        sub = flat[:, :: max(1, flat.shape[1] // 64)]
        worst = 0.0
        for m in range(sub.shape[1]):
            for k in range(self.grid.d):
                ev = np.linalg.eigvals(self.base.A(sub[:, m], k))
                worst = max(worst, float(np.max(np.abs(ev))))
        return worst


def _mass_radius(field, dist_sorted, order, frac=0.99):
    """Radius of the ball (around the box center) holding the given mass
    fraction of the field's energy."""
    energy = np.sum(np.asarray(field) ** 2, axis=0).ravel()[order]
    total = energy.sum()
    if total <= 0.0:
        return 0.0
    cum = np.cumsum(energy)
    idx = int(np.searchsorted(cum, frac * total))
    return float(dist_sorted[min(idx, len(dist_sorted) - 1)])


def run(sim, tsys, grid, initial_field=None, extra_source=None):
    """Advance the system and record the decay trace.

    The state evolves in sim.mode variables; every snapshot is converted
    to chart coordinates for group norms and the transported-mode
    diagnostic.  Blow-up truncates the trace and sets a flag; box
    saturation (bump support reaching a quarter of the side) marks the
    time after which fits stop trusting the data.
    """
    if initial_field is None:
        initial_field, init_info = make_initial_data(
            grid, tsys, sim.family, sim.eps, sim.width, sim.group, sim.k0)
    else:
        init_info = {"max_amplitude": float(np.max(np.sqrt(
            np.sum(np.asarray(initial_field) ** 2, axis=0))))}

    chart = tsys.chart
    stepper = Stepper(tsys, grid, mode=sim.mode, extra_source=extra_source)
    if sim.mode == "u":
        state = chart.forward_batch(np.asarray(initial_field, dtype=float))
    else:
        state = np.asarray(initial_field, dtype=float)

    X = grid.meshgrid()
    dist = np.sqrt(sum(x**2 for x in X)).ravel()
    order = np.argsort(dist)
    dist_sorted = dist[order]

    speed = stepper.max_speed(state)
    dt = sim.dt if sim.dt is not None else sim.cfl * grid.dx / max(speed, 1e-12)

    times = [0.0]
    entropy = []
    norm_series = {key: [] for key in sim.norms}
    v1_series = {float(q): [] for q in sim.v1_q}
    snapshots = []
    flags = {"blowup_at": None, "saturated_at": None, "completed": False}

    sample_times = np.arange(0.0, sim.t_end + 1e-9, sim.snapshot_dt)
    n_steps_total = 0

    def record(t, state):
        # everything that can raise (chart escape) runs before any append
        # so a failed sample never desynchronizes the series
        if sim.mode == "u":
            ut = chart.inverse_batch(state)
        else:
            ut = state
        _, qnorms = v1_diagnostic(ut, tsys, grid, qs=tuple(v1_series))
        sysobj = stepper.base if sim.mode == "u" else tsys
        entropy.append(entropy_functional(state, sysobj, grid))
        for (s, group) in sim.norms:
            norm_series[(s, group)].append(
                measure_lambda_s(ut, s, group, tsys.r, grid))
        for q, val in qnorms.items():
            v1_series[q].append(val)
        if sim.store_fields:
            snapshots.append((t, ut.copy()))
        if flags["saturated_at"] is None:
            r99 = _mass_radius(ut, dist_sorted, order)
            if r99 >= grid.side / 4.0:
                flags["saturated_at"] = t
        return ut

    record(0.0, state)
    blow_threshold = tsys.radius if sim.mode == "chart" else 1e6

    for target in sample_times[1:]:
        t_now = times[-1]
        span = target - t_now
        n_sub = max(1, int(np.ceil(span / dt - 1e-12)))
        dt_eff = span / n_sub
        dead = False
        for _ in range(n_sub):
            state = stepper.step(state, dt_eff, sim.integrator)
            n_steps_total += 1
            amp = np.sqrt(np.sum(state**2, axis=0))
            mx = float(np.max(amp)) if np.all(np.isfinite(amp)) else np.inf
            if not np.isfinite(mx) or mx > blow_threshold:
                flags["blowup_at"] = t_now + dt_eff
                dead = True
                break
            t_now += dt_eff
        if dead:
            break
        times.append(target)
        try:
            record(target, state)
        except ChartDomainError:
            flags["blowup_at"] = target
            times.pop()
            break
    else:
        flags["completed"] = True

    t_arr = np.asarray(times)
    trace = DecayTrace(
        t=t_arr,
        entropy=np.asarray(entropy),
        norms={(g, s): np.asarray(norm_series[(s, g)])
               for (s, g) in sim.norms},
        v1={q: np.asarray(v) for q, v in v1_series.items()},
        flags=flags,
        meta={"dt": dt, "mode": sim.mode, "integrator": sim.integrator,
              "n_steps": n_steps_total, "initial": init_info,
              "config": dataclasses.asdict(sim)},
    )

    hi = sim.fit_window[1]
    if flags["saturated_at"] is not None:
        hi = min(hi, flags["saturated_at"])
    if flags["blowup_at"] is not None:
        hi = min(hi, flags["blowup_at"])
    for (group, s), series in trace.norms.items():
        fit = fit_loglog(t_arr, series, t_min=sim.fit_window[0], t_max=hi)
        trace.fits["n_%s_s%g" % (group, s)] = dataclasses.asdict(fit)
    for q, series in trace.v1.items():
        fit = fit_loglog(t_arr, series, t_min=sim.fit_window[0], t_max=hi)
        trace.fits["v1_L%g" % q] = dataclasses.asdict(fit)

    if sim.store_fields:
        trace.meta["snapshots"] = snapshots
    return trace
