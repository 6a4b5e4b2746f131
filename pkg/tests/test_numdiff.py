import numpy as np
import pytest

from partdiss import numdiff


def test_grad_polynomial():
    f = lambda u: u[0] ** 2 + 3.0 * u[0] * u[1] - u[1] ** 3
    u = np.array([0.7, -0.4])
    g = numdiff.grad(f, u)
    exact = np.array([2 * 0.7 + 3 * (-0.4), 3 * 0.7 - 3 * 0.4**2])
    np.testing.assert_allclose(g, exact, atol=1e-8)


def test_jacobian_linear_map_is_exact():
    M = np.array([[1.0, 2.0, 0.0], [0.5, -1.0, 3.0]])
    J = numdiff.jacobian(lambda u: M @ u, np.array([0.3, -0.2, 1.1]))
    np.testing.assert_allclose(J, M, atol=1e-9)


def test_hessian_transcendental():
    """Richardson-extrapolated Hessian should be well under 1e-7 off."""
    f = lambda u: np.exp(u[0]) * np.sin(u[1]) + u[0] * u[1] ** 2
    u = np.array([0.2, 0.5])
    H = numdiff.hessian(f, u)
    exact = np.array([
        [np.exp(0.2) * np.sin(0.5), np.exp(0.2) * np.cos(0.5) + 2 * 0.5],
        [np.exp(0.2) * np.cos(0.5) + 2 * 0.5, -np.exp(0.2) * np.sin(0.5) + 2 * 0.2],
    ])
    assert np.max(np.abs(H - exact)) < 1e-7


def test_hessian_is_symmetric():
    f = lambda u: np.cos(u[0] * u[1]) + u[2] ** 4
    H = numdiff.hessian(f, np.array([0.3, 0.7, -0.2]))
    np.testing.assert_allclose(H, H.T, atol=0.0)


def test_scaled_step_grows_with_magnitude():
    assert numdiff.scaled_step(np.array([0.0]), 1e-6) == pytest.approx(1e-6)
    assert numdiff.scaled_step(np.array([100.0]), 1e-6) > 1e-5
