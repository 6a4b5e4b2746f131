import numpy as np
import pytest

from partdiss import builtin_damped_euler, normalize_equilibrium
from partdiss.coords import build_chart, preprocess_linear, transform_system
from partdiss.grids import Grid
from partdiss.lindecay import duhamel_residual
from partdiss.solver import (
    SimConfig,
    Stepper,
    make_initial_data,
    measure_lambda_s,
    run,
)


@pytest.fixture(scope="module")
def tsys():
    sys1 = preprocess_linear(normalize_equilibrium(builtin_damped_euler(d=1)))
    return transform_system(sys1, build_chart(sys1))


@pytest.fixture(scope="module")
def grid():
    return Grid(d=1, N=64, L=5.0)


def test_config_validation():
    with pytest.raises(ValueError, match="integrator"):
        SimConfig(integrator="euler")
    with pytest.raises(ValueError, match="mode"):
        SimConfig(mode="spectral")


def test_initial_data_zero_amplitude(tsys, grid):
    field, info = make_initial_data(grid, tsys, eps=0.0)
    assert not field.any()
    assert info["C_L1"] == 0.0
    assert info["D_L2"] == 0.0
    assert info["u1_L1"] == 0.0


def test_initial_data_group_disjoint(tsys, grid):
    field, info = make_initial_data(grid, tsys, eps=1e-2, group="D")
    assert not field[:2].any()
    assert field[2:].any()
    assert info["C_L1"] == 0.0
    assert info["u1_L1"] == 0.0
    assert info["D_L2"] > 0.0


def test_initial_data_dilation_scaling(tsys):
    # doubling the width at fixed amplitude scales L1 by 2^d, L2 by 2^(d/2)
    grid = Grid(d=1, N=256, L=10.0)
    f1, i1 = make_initial_data(grid, tsys, "dilated", 1e-2, 0.5, "C")
    f2, i2 = make_initial_data(grid, tsys, "dilated", 1e-2, 1.0, "C")
    assert i2["C_L1"] / i1["C_L1"] == pytest.approx(2.0, rel=1e-8)
    l2_1 = grid.l2_norm(f1[1])
    l2_2 = grid.l2_norm(f2[1])
    assert l2_2 / l2_1 == pytest.approx(np.sqrt(2.0), rel=1e-8)


def test_initial_data_packet_oscillates(tsys, grid):
    field, _ = make_initial_data(grid, tsys, "packet", 1e-3, 1.0, "D")
    prof = field[2]
    assert prof.min() < 0.0 < prof.max()
    assert abs(grid.integrate(prof)) < 0.01 * grid.lq_norm(prof, 1.0)


def test_initial_data_rejects_large_amplitude(tsys, grid):
    with pytest.raises(ValueError, match="amplitude outside chart domain"):
        make_initial_data(grid, tsys, eps=2.0 * tsys.radius)


def test_initial_data_unknown_family(tsys, grid):
    with pytest.raises(ValueError, match="unknown initial-data family"):
        make_initial_data(grid, tsys, family="sawtooth")


def test_lambda_s_zero_is_l2(tsys, grid):
    field, _ = make_initial_data(grid, tsys, eps=1e-2, group="all")
    got = measure_lambda_s(field, 0.0, "all", tsys.r, grid)
    assert got == pytest.approx(grid.l2_norm(field), rel=1e-14)


def test_lambda_s_single_mode(tsys, grid):
    # one lattice cosine: norm is |k|^s * amp * sqrt(vol / 2)
    amp, m, s = 3e-3, 3, 1.5
    k = m / grid.L
    x = grid.meshgrid()[0]
    field = np.zeros((tsys.n, grid.N))
    field[2] = amp * np.cos(k * x)
    expect = k**s * amp * np.sqrt(grid.side / 2.0)
    got = measure_lambda_s(field, s, "D", tsys.r, grid)
    assert got == pytest.approx(expect, rel=1e-12)


def test_lambda_one_matches_gradient(tsys):
    grid = Grid(d=2, N=32, L=2.0)
    rng = np.random.default_rng(5)
    spec = grid.fft(rng.normal(size=(3, grid.N, grid.N)))
    field = grid.ifft(spec * grid.dealias_mask)
    lam = grid.lambda_s_norm(field, 1.0)
    grad_sq = sum(grid.l2_norm(grid.deriv(field, ax)) ** 2
                  for ax in range(grid.d))
    assert lam == pytest.approx(np.sqrt(grad_sq), rel=1e-10)


def test_zero_field_is_stationary(tsys):
    grid = Grid(d=1, N=32, L=2.0)
    stepper = Stepper(tsys, grid, mode="u")
    field = np.zeros((tsys.n, grid.N))
    for _ in range(1000):
        field = stepper.step(field, 0.05)
    assert float(np.max(np.abs(field))) < 1e-12


def test_constant_equilibrium_is_stationary(tsys, grid):
    # spatially constant state with vanishing source: fixed point
    stepper = Stepper(tsys, grid, mode="chart")
    field = np.zeros((tsys.n, grid.N))
    field[0] = 0.05
    field[1] = 0.03
    start = field.copy()
    for _ in range(50):
        field = stepper.step(field, 0.1)
    assert float(np.max(np.abs(field - start))) < 1e-13


def test_constant_velocity_pure_damping(tsys, grid):
    # constant damped component solves the scalar ODE v' = -v exactly
    v0 = 0.1
    field = np.zeros((tsys.n, grid.N))
    field[2] = v0

    exact = v0 * np.exp(-1.0)
    f_if = field.copy()
    stepper = Stepper(tsys, grid, mode="chart")
    for _ in range(20):
        f_if = stepper.step(f_if, 0.05, "ifrk4")
    assert abs(f_if[2, 0] - exact) < 1e-14

    f_rk = field.copy()
    for _ in range(20):
        f_rk = stepper.step(f_rk, 0.05, "rk4")
    err = abs(f_rk[2, 0] - exact)
    assert 1e-12 < err < 1e-6  # genuine fourth-order truncation error


def test_convergence_order_under_dt_halving(tsys, grid):
    f0, _ = make_initial_data(grid, tsys, "gaussian", 5e-3, 1.0, "all")
    stepper = Stepper(tsys, grid, mode="chart")
    T = 0.5

    def advance(steps):
        f = f0.copy()
        dt = T / steps
        for _ in range(steps):
            f = stepper.step(f, dt, "ifrk4")
        return f

    ref = advance(512)
    errs = [np.sqrt(np.mean((advance(m) - ref) ** 2)) for m in (4, 8, 16)]
    assert errs[0] / errs[1] >= 15.0
    assert errs[1] / errs[2] >= 15.0


def test_short_run_trace_integrity(tsys, tmp_path):
    grid = Grid(d=1, N=128, L=10.0)
    sim = SimConfig(t_end=5.0, snapshot_dt=0.5, eps=1e-3, width=2.0,
                    group="all", fit_window=(1.0, 5.0))
    trace = run(sim, tsys, grid)
    assert trace.flags["completed"]
    assert trace.flags["blowup_at"] is None
    assert len(trace.t) == 11
    ent = trace.entropy
    assert np.all(ent >= 0.0)
    assert np.all(np.diff(ent) <= 1e-6 * np.maximum(ent[:-1], 1e-300))
    for key in ("n_u1_s0", "n_C_s0", "n_D_s0", "v1_L1"):
        assert key in trace.fits
        assert trace.fits[key]["n_points"] > 2
    assert trace.meta["n_steps"] > 0

    csv_path = tmp_path / "trace.csv"
    json_path = tmp_path / "trace.json"
    trace.save(csv_path, json_path)
    assert csv_path.read_text().splitlines()[0].startswith("t,E_entropy,")


def test_mode_agreement(tsys):
    # same dynamics whether stepped in state or chart variables
    grid = Grid(d=1, N=64, L=5.0)
    kw = dict(t_end=2.0, snapshot_dt=0.5, eps=1e-3, width=1.0,
              group="all", dt=0.05, fit_window=(0.5, 2.0))
    tr_u = run(SimConfig(mode="u", **kw), tsys, grid)
    tr_c = run(SimConfig(mode="chart", **kw), tsys, grid)
    for key in tr_u.norms:
        a, b = tr_u.norms[key], tr_c.norms[key]
        assert np.allclose(a, b, rtol=1e-8, atol=1e-13)
    assert np.allclose(tr_u.entropy, tr_c.entropy, rtol=1e-8, atol=1e-16)


def test_saturation_flag_on_small_box(tsys):
    # bump support immediately covers a quarter of a tiny box
    grid = Grid(d=1, N=32, L=0.5)
    sim = SimConfig(t_end=1.0, snapshot_dt=0.5, eps=1e-3, width=2.0,
                    group="all", fit_window=(0.0, 1.0))
    trace = run(sim, tsys, grid)
    assert trace.flags["saturated_at"] == 0.0


def test_blowup_flag_truncates_trace(tsys):
    grid = Grid(d=1, N=64, L=5.0)

    def feedback(field):
        out = np.zeros_like(field)
        out[1] = 40.0 * field[1] ** 2
        return out

    sim = SimConfig(t_end=5.0, snapshot_dt=0.25, mode="chart", eps=0.05,
                    width=1.0, group="C", fit_window=(0.5, 5.0))
    trace = run(sim, tsys, grid, extra_source=feedback)
    assert trace.flags["blowup_at"] is not None
    assert not trace.flags["completed"]
    full = int(round(sim.t_end / sim.snapshot_dt)) + 1
    assert len(trace.t) < full
    for series in trace.norms.values():
        assert len(series) == len(trace.t)


def test_degenerate_source_violation_grows(tsys):
    # quadratic forcing of an undamped component from the transported one:
    # the undamped norm must grow, unlike the clean run
    grid = Grid(d=1, N=128, L=10.0)

    def bad_source(field):
        out = np.zeros_like(field)
        out[1] = field[0] ** 2
        return out

    sim = SimConfig(t_end=10.0, snapshot_dt=1.0, mode="chart", eps=0.05,
                    width=2.0, group="u1",
                    norms=((0.0, "u1"), (0.0, "C")), fit_window=(1.0, 10.0))
    bad = run(sim, tsys, grid, extra_source=bad_source)
    clean = run(sim, tsys, grid)
    assert bad.norms[("C", 0.0)][-1] > 1e-3 or bad.flags["blowup_at"] is not None
    assert clean.norms[("C", 0.0)][-1] < 1e-12
    u1 = bad.norms[("u1", 0.0)]
    assert 0.5 * u1[0] <= u1[-1] <= 2.0 * u1[0]


def test_duhamel_residual_shrinks_with_snapshot_spacing(tsys):
    grid = Grid(d=1, N=128, L=10.0)
    res = []
    for m in (32, 64, 128):
        sim = SimConfig(t_end=1.0, snapshot_dt=1.0 / m, dt=1.0 / 256,
                        mode="u", eps=1e-3, width=1.0, group="all",
                        fit_window=(0.25, 1.0), store_fields=True)
        trace = run(sim, tsys, grid)
        res.append(duhamel_residual(tsys, grid, trace.meta["snapshots"]))
    assert res[0] / res[1] >= 3.5
    assert res[1] / res[2] >= 3.5
