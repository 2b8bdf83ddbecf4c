import numpy as np
import pytest


def fd_gradient(f, theta, h_scale=1e-5):
    """Central finite differences of a scalar function of theta."""
    theta = np.asarray(theta, dtype=float)
    g = np.zeros(theta.size)
    for j in range(theta.size):
        h = h_scale * max(1.0, abs(theta[j]))
        tp, tm = theta.copy(), theta.copy()
        tp[j] += h
        tm[j] -= h
        g[j] = (f(tp) - f(tm)) / (2.0 * h)
    return g


def fd_jacobian(f, theta, h_scale=1e-5):
    """Central finite differences of a vector function of theta (rows = outputs)."""
    theta = np.asarray(theta, dtype=float)
    f0 = np.asarray(f(theta), dtype=float)
    jac = np.zeros(f0.shape + (theta.size,))
    for j in range(theta.size):
        h = h_scale * max(1.0, abs(theta[j]))
        tp, tm = theta.copy(), theta.copy()
        tp[j] += h
        tm[j] -= h
        jac[..., j] = (np.asarray(f(tp)) - np.asarray(f(tm))) / (2.0 * h)
    return jac


def assert_rel_close(actual, expected, tol, msg=""):
    """Mixed absolute/relative comparison: |a-e| <= tol * max(1, |e|)."""
    actual = np.asarray(actual, dtype=float)
    expected = np.asarray(expected, dtype=float)
    err = np.abs(actual - expected)
    bound = tol * np.maximum(1.0, np.abs(expected))
    worst = np.max(err - bound)
    assert np.all(err <= bound), (
        f"{msg} max violation {worst:.3e}; actual={actual}, expected={expected}"
    )


@pytest.fixture(scope="session")
def ar1_star_data():
    """One simulated series at the reference AR(1) parameters."""
    from pfscore import Ar1Params, ar1_model, simulate

    theta = np.array([0.8, 0.5, 1.0])
    model = ar1_model(Ar1Params(*theta))
    rng = np.random.default_rng(20240601)
    x, y = simulate(model, theta, 500, rng)
    return model, theta, x, y
