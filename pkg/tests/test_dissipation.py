import json
import types

import numpy as np
import pytest

from partdiss import builtin_damped_euler, normalize_equilibrium
from partdiss.coords import build_chart, preprocess_linear, transform_system
from partdiss.dissipation import (
    CompensatorK,
    build_compensator,
    dissipation_matrix,
    entropy_functional,
    symmetrizer,
    symmetrizer_checks,
)
from partdiss.grids import Grid


@pytest.fixture(scope="module")
def tsys():
    sys = preprocess_linear(normalize_equilibrium(builtin_damped_euler()))
    return transform_system(sys, build_chart(sys))


def toy(A_flat):
    """Minimal stand-in with a 2x2 flat block and one damped component."""
    M = np.asarray(A_flat, dtype=float)
    return types.SimpleNamespace(
        n=3, r=2, d=1, A_flat=lambda z, om: M)


def test_symmetrizer_at_origin_is_entropy_hessian_block(tsys):
    S0 = symmetrizer(tsys, np.zeros(4))
    assert np.allclose(S0, np.diag([2.0, 1.0, 1.0]), atol=1e-6)
    assert np.allclose(S0, S0.T)
    assert np.min(np.linalg.eigvalsh(S0)) > 0


def test_symmetrizer_requires_conserved_variables(tsys):
    import dataclasses

    bare = dataclasses.replace(tsys.parent, eval_G=None)
    fake = types.SimpleNamespace(parent=bare)
    with pytest.raises(ValueError, match="conserved"):
        symmetrizer(fake, np.zeros(4))


def test_symmetrizer_commutation_and_posdef(tsys):
    out = symmetrizer_checks(tsys, n_samples=64, radius=0.05, seed=1)
    assert out["pass_commutation"], out["max_commutation"]
    assert out["max_commutation"] < 1e-6
    assert out["pass_posdef"]
    assert out["pass"]


def test_dissipation_matrix_euler(tsys):
    res = dissipation_matrix(tsys)
    assert np.allclose(res.M_D, 2.0 * np.eye(2), atol=1e-6)
    assert res.c_m == pytest.approx(2.0, abs=1e-6)
    assert res.symmetry_residual < 1e-9
    assert res.cross_check_residual < 1e-7
    assert res.identity_residual < 1e-7
    assert res.passed


def test_toy_compensator_recovers_half():
    sl = build_compensator(toy([[0.0, 1.0], [1.0, 0.0]]), np.array([1.0]),
                           restarts=5, seed=0)
    assert sl.margin == pytest.approx(0.5, abs=1e-6)
    K = sl.K
    ref = np.array([[0.0, 0.5], [-0.5, 0.0]])
    assert (np.max(np.abs(K - ref)) < 1e-6 or np.max(np.abs(K + ref)) < 1e-6)
    assert np.allclose(K, -K.T)
    assert sl.passed


def test_compensator_fails_without_coupling():
    sl = build_compensator(toy(np.diag([1.0, 2.0])), np.array([1.0]),
                           restarts=3, seed=0)
    assert sl.margin <= 1e-12
    assert not sl.passed


def test_compensator_table_euler(tsys):
    table = CompensatorK.build(tsys, n_directions=8, restarts=4, seed=0)
    assert table.passed
    assert table.c_k >= 1e-4
    assert table.skew_residual() == 0.0
    assert table.oddness_residual() < 1e-12
    assert table.lmi_residual(tsys) >= -1e-9
    assert table.failures == []


def test_compensator_table_json_round_trip(tsys, tmp_path):
    table = CompensatorK.build(tsys, n_directions=4, restarts=2, seed=0)
    path = tmp_path / "compensator.json"
    table.save(path)
    loaded = CompensatorK.load(path)
    assert loaded.c_k == table.c_k
    assert np.allclose(loaded.tables, table.tables)
    assert np.allclose(loaded.omegas, table.omegas)
    data = json.loads(table.to_json())
    assert set(data["entries"]) == {str(i) for i in range(4)}


def test_compensator_printed_variant_switch(tsys):
    sl_d = build_compensator(tsys, np.array([1.0, 0.0]), restarts=3, seed=0,
                             variant="damped")
    sl_p = build_compensator(tsys, np.array([1.0, 0.0]), restarts=3, seed=0,
                             variant="printed")
    assert sl_d.margin != pytest.approx(sl_p.margin, abs=1e-9)
    with pytest.raises(ValueError, match="variant"):
        build_compensator(tsys, np.array([1.0, 0.0]), variant="bogus")


def test_entropy_functional_zero_and_positive():
    sys = normalize_equilibrium(builtin_damped_euler())
    grid = Grid(d=2, N=32, L=1.0)
    zero = np.zeros((4, grid.N, grid.N))
    assert entropy_functional(zero, sys, grid) == 0.0
    X, _ = grid.meshgrid()
    bump = np.zeros((4, grid.N, grid.N))
    bump[2] = 1e-2 * np.sin(X)
    assert entropy_functional(bump, sys, grid) > 0.0


def test_entropy_functional_chart_field(tsys):
    grid = Grid(d=2, N=32, L=1.0)
    X, _ = grid.meshgrid()
    Ut = np.zeros((4, grid.N, grid.N))
    Ut[0] = 1e-3 * np.sin(X)
    Ut[3] = 1e-3 * np.cos(X)
    assert entropy_functional(Ut, tsys, grid) > 0.0
    assert entropy_functional(np.zeros_like(Ut), tsys, grid) == pytest.approx(
        0.0, abs=1e-12)
