"""Eigen-structure packets: provider path, numeric fallback, labeling."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from partdiss.eigen import (
    DegenerateEigenvectorsError,
    EigenPacket,
    eigen_decompose,
    first_left,
    first_right,
    lambda1_fn,
    verify_packet,
)
from partdiss.systems import (
    SystemSpec,
    assemble_direction_matrix,
    builtin_damped_euler,
    normalize_equilibrium,
)


@pytest.fixture(scope="module")
def euler0():
    return normalize_equilibrium(builtin_damped_euler())


def rand_direction(rng, d):
    if d == 1:
        return np.array([1.0 if rng.random() < 0.5 else -1.0])
    om = rng.normal(size=d)
    return om / np.linalg.norm(om)


def test_provider_packet_invariants(euler0):
    rng = np.random.default_rng(1)
    for _ in range(20):
        u = 0.1 * rng.normal(size=euler0.n)
        om = rand_direction(rng, euler0.d)
        pkt = eigen_decompose(euler0, u, om)
        A = assemble_direction_matrix(euler0, u, om)
        res = verify_packet(pkt, A)
        assert res["lr_identity"] < 1e-9
        assert res["left_spectral"] < 1e-8
        assert res["right_spectral"] < 1e-8


def test_spectrum_at_origin(euler0):
    pkt = eigen_decompose(euler0, np.zeros(4), np.array([1.0, 0.0]))
    np.testing.assert_allclose(
        sorted(pkt.lambdas), [-np.sqrt(2.0), 0.0, 0.0, np.sqrt(2.0)], atol=1e-14)
    np.testing.assert_allclose(pkt.right[:, 0], [1.0, -0.5, 0.0, 0.0], atol=1e-14)
    np.testing.assert_allclose(pkt.left[0], [1.0, 0.0, 0.0, 0.0], atol=1e-14)


def test_numeric_fallback_matches_provider_spectrum(euler0):
    rng = np.random.default_rng(2)
    u = 0.08 * rng.normal(size=euler0.n)
    om = rand_direction(rng, euler0.d)
    pkt_p = eigen_decompose(euler0, u, om)
    pkt_n = eigen_decompose(euler0, u, om, force_numeric=True)
    np.testing.assert_allclose(
        sorted(pkt_n.lambdas), sorted(pkt_p.lambdas), atol=1e-10)
    A = assemble_direction_matrix(euler0, u, om)
    assert verify_packet(pkt_n, A)["max"] < 1e-8


def test_numeric_fallback_labels_family_one_by_kernel_test():
    # in one dimension all three eigenvalues are simple, so the numeric
    # path must put the undamped transport family in slot 0 on its own
    sys1 = normalize_equilibrium(builtin_damped_euler(d=1))
    u = np.array([0.02, -0.01, 0.04])
    om = np.array([1.0])
    pkt = eigen_decompose(sys1, u, om, force_numeric=True)
    lam_fn = lambda1_fn(sys1)
    assert pkt.lambdas[0] == pytest.approx(lam_fn(u, om), abs=1e-12)
    r0 = pkt.right[:, 0] / pkt.right[0, 0]
    np.testing.assert_allclose(r0, first_right(sys1, u) / first_right(sys1, u)[0],
                               atol=1e-10)


def test_degenerate_eigenvectors_raise():
    jordan = SystemSpec(
        name="jordan", d=1, n=2, r=1,
        eval_A=lambda u, k: np.array([[0.0, 1.0], [0.0, 0.0]]),
        eval_Q=lambda u: np.array([0.0, -u[1]]),
        equilibrium=np.zeros(2),
    )
    with pytest.raises(DegenerateEigenvectorsError) as exc:
        eigen_decompose(jordan, np.zeros(2), np.array([1.0]))
    assert exc.value.cluster  # the clustered eigenvalue list is populated


def test_complex_eigenvalues_rejected():
    rot = SystemSpec(
        name="rotation", d=1, n=2, r=1,
        eval_A=lambda u, k: np.array([[0.0, -1.0], [1.0, 0.0]]),
        eval_Q=lambda u: np.array([0.0, -u[1]]),
        equilibrium=np.zeros(2),
    )
    with pytest.raises(Exception, match="[Hh]yperbolic|real"):
        eigen_decompose(rot, np.zeros(2), np.array([1.0]))


def test_first_family_accessors(euler0):
    u = np.array([0.03, -0.02, 0.01, 0.02])
    r1 = first_right(euler0, u)
    l1 = first_left(euler0, u)
    assert float(l1 @ r1) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(r1, [1.0, -(1.0 + u[1]) / 2.0, 0.0, 0.0], atol=1e-14)


@given(st.integers(0, 2**32 - 1))
@settings(deadline=None, max_examples=30)
def test_biorthonormality_property(seed):
    sys0 = normalize_equilibrium(builtin_damped_euler())
    rng = np.random.default_rng(seed)
    u = 0.1 * rng.normal(size=sys0.n)
    om = rand_direction(rng, sys0.d)
    pkt = eigen_decompose(sys0, u, om)
    np.testing.assert_allclose(pkt.left @ pkt.right, np.eye(sys0.n), atol=1e-9)


def test_packet_n_property():
    pkt = EigenPacket(lambdas=np.zeros(3), left=np.eye(3), right=np.eye(3),
                      at=(np.zeros(3), np.array([1.0])))
    assert pkt.n == 3
