import numpy as np
import pytest

from ssgmcmc.data import Dataset, make_linear_regression, make_two_class
from ssgmcmc.model import MLP, GaussianTarget, LinearRegression, LogisticRegression


def central_fd(f, theta, h=1e-5):
    """Central finite-difference gradient of scalar ``f`` at ``theta``."""
    theta = np.asarray(theta, dtype=np.float64)
    out = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        out[i] = (f(theta + e) - f(theta - e)) / (2 * h)
    return out


def grad_mismatch(g, fd, rel=1e-5, abs_=1e-8):
    """Indices where ``g`` and ``fd`` disagree beyond rel/abs tolerance."""
    tol = np.maximum(rel * np.abs(fd), abs_)
    return np.flatnonzero(np.abs(g - fd) > tol)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_precision(dim, rng, scale=1.0, coupling=0.6):
    """Random SPD matrix with substantial off-diagonal mass."""
    A = rng.standard_normal((dim, dim))
    lam = A @ A.T / dim + np.eye(dim) * (1 - coupling)
    d = np.sqrt(np.diag(lam))
    return scale * lam / np.outer(d, d)


def small_models(rng):
    """One small instance of every model kind with matching data."""
    lin_data = make_linear_regression(n=12, seed=3)
    cls_data = Dataset(rng.standard_normal((15, 3)), rng.integers(0, 3, 15))
    reg_data = Dataset(rng.standard_normal((10, 2)), rng.standard_normal(10))
    return [
        (GaussianTarget(random_precision(4, rng), rng.standard_normal(4)), None),
        (LinearRegression(3, noise_var=0.7, prior_scale=1.3), lin_data),
        (LogisticRegression(3, n_classes=3), cls_data),
        (MLP((3, 5, 4, 3)), cls_data),
        (MLP((2, 6, 1), task="regression", noise_var=0.5), reg_data),
    ]


@pytest.fixture
def two_class():
    return make_two_class(200, seed=1)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
