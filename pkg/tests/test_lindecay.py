import numpy as np
import pytest

from partdiss import builtin_damped_euler, normalize_equilibrium
from partdiss.coords import build_chart, preprocess_linear, transform_system
from partdiss.grids import Grid
from partdiss.lindecay import (
    BoxPropagator,
    DecayPrediction,
    SymbolGrid,
    duhamel_residual,
    linear_lp_decay_experiment,
    predicted_exponents,
    propagate_linear,
    run_linear_flat,
    verify_pointwise_bounds,
)


def make_tsys(d=2):
    sys = preprocess_linear(normalize_equilibrium(builtin_damped_euler(d=d)))
    return transform_system(sys, build_chart(sys))


@pytest.fixture(scope="module")
def tsys():
    return make_tsys(2)


@pytest.fixture(scope="module")
def tsys1d():
    return make_tsys(1)


@pytest.fixture(scope="module")
def sgrid(tsys):
    return SymbolGrid.polar(tsys, n_shells=96, n_angles=16)


def test_symbol_at_zero_is_minus_theta(sgrid, tsys):
    assert np.allclose(sgrid.symbol_at(np.zeros(2)), -tsys.theta_flat)


def test_zero_frequency_splits_bands(sgrid):
    S0 = -sgrid.theta_flat
    from scipy.linalg import expm

    v = expm(-1.0 * S0.astype(complex)) @ np.ones(3)
    assert v[0] == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(v[1:].real, np.exp(-1.0), atol=1e-12)


def test_propagate_identity_at_t0(sgrid):
    u0 = np.tile(np.array([1.0, -0.5, 0.25]), (len(sgrid.points), 1)) + 0j
    out = propagate_linear(sgrid, u0, 0.0)
    assert np.allclose(out, u0)


def test_propagate_semigroup_property(sgrid):
    rng = np.random.default_rng(0)
    u0 = rng.normal(size=(len(sgrid.points), 3)) + 0j
    one = propagate_linear(sgrid, u0, 3.0)
    two = propagate_linear(sgrid, propagate_linear(sgrid, u0, 1.25), 1.75)
    assert np.max(np.abs(one - two)) < 1e-10


def test_propagate_rejects_negative_time(sgrid):
    with pytest.raises(ValueError, match="t >= 0"):
        propagate_linear(sgrid, np.zeros((len(sgrid.points), 3)) + 0j, -1.0)


def test_pointwise_bounds_euler(sgrid):
    rep = verify_pointwise_bounds(sgrid)
    assert rep["passed"]
    assert rep["worst_c_low"] > 0
    assert rep["worst_c_high"] > 0
    assert 0.1 < rep["xi_c"] < 10.0
    assert rep["n_low"] + rep["n_high"] == len(sgrid.points)


def test_pointwise_bounds_fail_without_source(sgrid):
    dead = SymbolGrid(sgrid.points, sgrid.weights, sgrid.A_flats,
                      np.zeros_like(sgrid.theta_flat), sgrid.c_size,
                      shell_radii=sgrid.shell_radii,
                      shell_index=sgrid.shell_index)
    rep = verify_pointwise_bounds(dead)
    assert not rep["passed"]
    assert "note" in rep


def test_cutoff_stability_under_refinement(tsys):
    c1 = verify_pointwise_bounds(
        SymbolGrid.polar(tsys, n_shells=64, n_angles=16))["worst_c_low"]
    c2 = verify_pointwise_bounds(
        SymbolGrid.polar(tsys, n_shells=128, n_angles=16))["worst_c_low"]
    assert c2 == pytest.approx(c1, rel=0.02)


def test_lp_experiment_p1_slopes(sgrid):
    res = linear_lp_decay_experiment(sgrid, p=1)
    assert res.fit_C.slope == pytest.approx(-0.5, rel=0.10)
    assert res.fit_D.slope == pytest.approx(-1.0, rel=0.10)
    assert res.predicted_C == -0.5
    assert res.predicted_D == -1.0


def test_lp_experiment_p2_flat(sgrid):
    res = linear_lp_decay_experiment(sgrid, p=2)
    assert abs(res.fit_C.slope) < 0.05
    assert res.predicted_C == 0.0
    assert res.width == 100.0


def test_lp_experiment_rejects_short_window(sgrid):
    with pytest.raises(ValueError, match="decade"):
        linear_lp_decay_experiment(sgrid, p=1, times=np.linspace(10, 20, 16))
    with pytest.raises(ValueError, match="8 samples"):
        linear_lp_decay_experiment(sgrid, p=1, times=np.geomspace(1, 100, 5))


def test_lp_experiment_csv(sgrid, tmp_path):
    res = linear_lp_decay_experiment(sgrid, p=1)
    path = tmp_path / "trace.csv"
    res.to_csv(path)
    rows = path.read_text().strip().splitlines()
    assert rows[0] == "t,norm_C,norm_D,fit_slope_C,fit_slope_D"
    assert len(rows) == 1 + len(res.t)
    back = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.allclose(back[:, 0], res.t)
    assert np.allclose(back[:, 1], res.norm_C)
    assert np.allclose(back[:, 3], res.fit_C.slope)


def test_plancherel_consistency(tsys1d):
    grid = Grid(d=1, N=64, L=1.0)
    rng = np.random.default_rng(1)
    field = rng.normal(size=(2, 64)) * 1e-2
    phys = grid.l2_norm(field)
    spec = grid.spectral_l2_norm(grid.fft(field))
    assert spec == pytest.approx(phys, rel=1e-12)


def test_run_linear_flat_semigroup(tsys1d):
    grid = Grid(d=1, N=64, L=1.0)
    x = grid.axes()[0]
    field = np.zeros((2, 64))
    field[0] = 1e-3 * np.sin(x)
    field[1] = 1e-3 * np.cos(2 * x)
    (a,) = run_linear_flat(tsys1d, grid, field, [2.0])
    prop = BoxPropagator(tsys1d, grid)
    b = prop.apply(prop.apply(field, 0.75), 1.25)
    assert np.max(np.abs(a - b)) < 1e-10


def test_duhamel_linear_run(tsys1d):
    grid = Grid(d=1, N=64, L=1.0)
    x = grid.axes()[0]
    flat0 = np.zeros((2, 64))
    flat0[0] = 1e-3 * np.sin(x)
    flat0[1] = 1e-3 * np.cos(x)
    taus = np.linspace(0.0, 1.0, 17)
    flats = run_linear_flat(tsys1d, grid, flat0, taus)
    snaps = []
    for tau, f in zip(taus, flats):
        full = np.zeros((3, 64))
        full[1:] = f
        snaps.append((float(tau), full))
    res = duhamel_residual(tsys1d, grid, snaps, force_zero_nonlinearity=True)
    assert res < 1e-8


def test_duhamel_zero_time(tsys1d):
    grid = Grid(d=1, N=64, L=1.0)
    full = np.zeros((3, 64))
    full[1] = 1e-3
    res = duhamel_residual(tsys1d, grid, [(0.0, full), (0.0, full)],
                           force_zero_nonlinearity=True)
    assert res == pytest.approx(0.0, abs=1e-14)


def test_duhamel_warns_on_coarse_spacing(tsys1d):
    grid = Grid(d=1, N=64, L=1.0)
    full = np.zeros((3, 64))
    full[1] = 1e-3
    with pytest.warns(UserWarning, match="spacing"):
        duhamel_residual(tsys1d, grid, [(0.0, full), (10.0, full)])


def test_duhamel_rejects_nonuniform(tsys1d):
    grid = Grid(d=1, N=64, L=1.0)
    full = np.zeros((3, 64))
    with pytest.raises(ValueError, match="uniform"):
        duhamel_residual(tsys1d, grid,
                         [(0.0, full), (0.1, full), (0.5, full)])


def test_prediction_thm3_d_component():
    pred = predicted_exponents(d=2, p=1, q=1, s=0.0, component="D",
                               regime="Thm3")
    assert pred.exponent == pytest.approx(-1.0)
    assert pred.admissible
    assert pred.p_star == 2.0


def test_prediction_thm1_p2_flags():
    pred = predicted_exponents(d=3, p=2, s=0.0, component="C", regime="Thm1")
    assert pred.exponent == pytest.approx(0.0)
    assert not pred.admissible
    assert any("d/2" in v for v in pred.violated)
    assert any("d >= 5" in note for note in pred.notes)
    ok = predicted_exponents(d=5, p=2, s=0.0, component="C", regime="Thm1")
    assert ok.admissible


def test_prediction_thm2_needs_ell():
    with pytest.raises(ValueError, match="ell"):
        predicted_exponents(d=3, p=1, regime="Thm2")
    pred = predicted_exponents(d=3, p=1.2, s=0.5, regime="Thm2", ell=3)
    assert pred.s_caps["s2"] == pytest.approx(min(3 * (1 - 1 / 1.2) + 1, 2.0))
    assert pred.admissible


def test_prediction_caps_and_violations():
    pred = predicted_exponents(d=3, p=1, s=10.0, component="C", regime="Thm1")
    assert not pred.admissible
    assert pred.s_caps["s1"] == pytest.approx(1.0)
    bad_q = predicted_exponents(d=2, p=1, q=2, s=0.0, regime="Thm3")
    assert not bad_q.admissible
    assert any("q < d" in v for v in bad_q.violated)
    with pytest.raises(ValueError, match="component"):
        predicted_exponents(d=2, p=1, component="E")
    with pytest.raises(ValueError, match="regime"):
        predicted_exponents(d=2, p=1, regime="Thm9")
    with pytest.raises(ValueError, match="q"):
        predicted_exponents(d=2, p=1, regime="Thm3")


def test_prediction_is_frozen():
    pred = predicted_exponents(d=2, p=1, q=1, regime="Thm3")
    assert isinstance(pred, DecayPrediction)
    with pytest.raises(Exception):
        pred.sigma = 0.0
