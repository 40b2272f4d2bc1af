import json
import warnings

import numpy as np
import pytest

from conftest import random_precision
from ssgmcmc.chainstore import ChainStore
from ssgmcmc.data import Dataset, make_linear_regression
from ssgmcmc.diagnostics import (ConstantSeriesError, GaussianPosterior, autocorrelation,
                                 autocorrelation_direct, blocked_meanfield, conjugate_posterior,
                                 ensemble_eval, ess, ess_lag1, ess_lag1_formula, gaussian_kl, iac,
                                 iac_details, iac_histogram, mixing_report, target_posterior)
from ssgmcmc.model import GaussianTarget, LinearRegression, LogisticRegression
from ssgmcmc.partition import partition_full, partition_modulo, PartitionSpec


def ar1(phi, n, rng):
    x = np.empty(n)
    x[0] = rng.standard_normal() / np.sqrt(1 - phi ** 2)
    e = rng.standard_normal(n)
    for k in range(1, n):
        x[k] = phi * x[k - 1] + e[k]
    return x


def test_lag_zero_is_one(rng):
    assert autocorrelation(rng.standard_normal(50))[0] == 1.0


def test_alternating_series():
    x = np.tile([1.0, -1.0], 32)
    rho = autocorrelation(x)
    assert rho[1] == pytest.approx(-1.0, abs=1e-12)
    np.testing.assert_allclose(rho, autocorrelation_direct(x), atol=1e-12)


def test_fft_matches_direct(rng):
    for _ in range(10):
        x = rng.standard_normal(100).cumsum()
        np.testing.assert_allclose(autocorrelation(x), autocorrelation_direct(x), rtol=0, atol=1e-10)


def test_rejects_short_and_constant():
    with pytest.raises(ValueError):
        autocorrelation(np.arange(7.0))
    with pytest.raises(ConstantSeriesError):
        iac(np.ones(100))


@pytest.mark.parametrize("phi,tol", [(0.5, 0.10), (0.9, 0.15)])
def test_ar1_iac(phi, tol, rng):
    assert iac(ar1(phi, 100_000, rng)) == pytest.approx((1 + phi) / (1 - phi), rel=tol)


def test_iid_iac_and_ess(rng):
    x = rng.standard_normal(100_000)
    assert iac(x) == pytest.approx(1.0, abs=0.1)
    assert ess(x) == pytest.approx(x.size, rel=0.1)
    assert ess(x) <= x.size


def test_ess_lag1_on_short_iid_series(rng):
    # (n - 1) * rho(1) has spread ~sqrt(n), so the lag-1 formula is only stable for small n
    x = rng.standard_normal(100)
    rho1 = autocorrelation(x)[1]
    assert ess_lag1(x) == pytest.approx(100 / (1 + 99 * rho1), rel=1e-12)


def test_unconverged_window_warns(rng, monkeypatch):
    # estimated autocorrelations sum to about zero over all lags, so real
    # series almost always find a window; force a slowly decaying one
    from ssgmcmc import diagnostics
    monkeypatch.setattr(diagnostics, "autocorrelation", lambda x: np.exp(-np.arange(20) / 50.0))
    tau, window, ok = iac_details(rng.standard_normal(20))
    assert not ok and window == 19
    assert tau == pytest.approx(1 + 2 * np.exp(-np.arange(1, 20) / 50.0).sum())
    with pytest.warns(RuntimeWarning):
        iac(rng.standard_normal(20))


def test_ess_lag1_formula_limits():
    assert ess_lag1_formula(100, 0.0) == 100
    assert ess_lag1_formula(100, 1.0) == 1.0
    assert ess_lag1_formula(10**6, 1 - 1e-12) == pytest.approx(1.0, rel=1e-5)


def test_mixing_report_excludes_constant(rng):
    x = np.column_stack([rng.standard_normal(500), np.full(500, 2.0), ar1(0.5, 500, rng)])
    rep = mixing_report(x)
    assert rep.excluded == [1]
    assert rep.coordinates.tolist() == [0, 2]
    assert np.all(rep.ess <= rep.n)
    d = json.loads(rep.to_json())
    assert d["warnings"] >= 1 and d["excluded_constant"] == [1]
    assert rep.iac[0] == pytest.approx(iac(x[:, 0]), rel=1e-12)
    edges, counts = iac_histogram(rep.iac, bins=4)
    assert counts.sum() == 2 and edges.size == 5


# -- ensemble ----------------------------------------------------------------

def test_ensemble_single_perfect_classifier(rng):
    model = LogisticRegression(1, n_classes=2)
    # logits: class 1 gets +10 x, class 0 gets -10 x
    theta = np.array([-10.0, 10.0, 0.0, 0.0])
    data = Dataset([[-1.0], [2.0], [-0.5], [3.0]], [0, 1, 0, 1])
    assert ensemble_eval(ChainStore(theta), model, data, rng=rng) == 1.0


def test_ensemble_regression_mse_by_hand(rng):
    model = LinearRegression(1)
    data = Dataset([[0.0], [1.0], [2.0]], [1.0, 2.0, 4.0])
    # constant prediction 2: errors (-1, 0, 2)
    assert ensemble_eval(ChainStore([0.0, 2.0]), model, data, rng=rng) == pytest.approx(5 / 3)


def test_ensemble_invariant_to_duplication(rng):
    model = LinearRegression(1)
    data = Dataset([[0.0], [1.0], [2.0]], [1.0, 2.0, 4.0])
    rows = rng.standard_normal((3, 2))
    once, twice = ChainStore(rows[0], capacity=None), ChainStore(rows[0], capacity=None)
    twice.append(rows[0])
    for r in rows[1:]:
        once.append(r)
        twice.append(r)
        twice.append(r)
    a = ensemble_eval(once, model, data, n_models=20_000, rng=np.random.default_rng(0))
    b = ensemble_eval(twice, model, data, n_models=20_000, rng=np.random.default_rng(1))
    assert a == pytest.approx(b, rel=0.05)


# -- Gaussian oracles --------------------------------------------------------

def test_conjugate_single_point():
    post = conjugate_posterior(LinearRegression(1, bias=False), Dataset([[1.0]], [1.0]))
    assert post.mean[0] == pytest.approx(0.5) and post.cov[0, 0] == pytest.approx(0.5)
    np.testing.assert_allclose(post.precision @ post.cov, np.eye(1), atol=1e-10)


def test_conjugate_no_data_is_prior():
    post = conjugate_posterior(LinearRegression(3))
    np.testing.assert_array_equal(post.mean, 0.0)
    np.testing.assert_array_equal(post.cov, np.eye(4))


def test_conjugate_consistent_with_generator():
    data = make_linear_regression(seed=11)
    post = conjugate_posterior(LinearRegression(3), data)
    truth = np.array([1.5, -0.8, 1.3, 0.5])
    assert np.all(np.abs(post.mean - truth) < 3 * np.sqrt(np.diag(post.cov)))
    np.testing.assert_allclose(post.precision @ post.cov, np.eye(4), atol=1e-10)


def test_conjugate_mean_is_energy_minimizer():
    model, data = LinearRegression(3, noise_var=0.5), make_linear_regression(n=30, seed=1)
    np.testing.assert_allclose(model.grad_energy(conjugate_posterior(model, data).mean, None, data),
                               0.0, atol=1e-10)


def test_oracle_rejects_other_models():
    with pytest.raises(ValueError):
        conjugate_posterior(LogisticRegression(2))
    with pytest.raises(ValueError):
        target_posterior(LinearRegression(2))


def test_meanfield_2x2_shrinks_variance():
    target = GaussianPosterior.from_precision([[2.0, 1.0], [1.0, 2.0]])
    res = blocked_meanfield(target, partition_full(2), init=[1.0, -1.0])
    np.testing.assert_allclose(res.variances, [0.5, 0.5], rtol=1e-14)
    np.testing.assert_allclose(np.diag(target.cov), [2 / 3, 2 / 3], rtol=1e-14)
    np.testing.assert_allclose(res.means, 0.0, atol=1e-11)
    assert res.converged


def test_meanfield_block_diagonal_is_exact(rng):
    lam = np.zeros((5, 5))
    lam[:3, :3] = random_precision(3, rng)
    lam[3:, 3:] = random_precision(2, rng)
    target = GaussianPosterior.from_precision(lam, rng.standard_normal(5))
    spec = PartitionSpec.from_labels([0, 0, 0, 1, 1])
    res = blocked_meanfield(target, spec)
    np.testing.assert_allclose(res.variances, np.diag(target.cov), rtol=1e-12)
    np.testing.assert_allclose(res.means, target.mean, atol=1e-11)
    np.testing.assert_allclose(res.block_covs[0], target.cov[:3, :3], rtol=1e-12)


def test_meanfield_kl_monotone_and_means_converge(rng):
    target = GaussianPosterior.from_precision(random_precision(6, rng, coupling=0.9), rng.standard_normal(6))
    res = blocked_meanfield(target, partition_modulo(6, 3), init=5 * rng.standard_normal(6))
    assert np.all(np.diff(res.kl_history) <= 1e-12)
    np.testing.assert_allclose(res.means, target.mean, atol=1e-10)
    # shrinkage: inverse diagonal precision never exceeds the marginal variance
    assert np.all(1 / np.diag(target.precision) <= np.diag(target.cov) + 1e-15)


def test_gaussian_kl_zero_at_target(rng):
    target = GaussianPosterior.from_precision(random_precision(3, rng), rng.standard_normal(3))
    assert gaussian_kl(target.mean, target.cov, target) == pytest.approx(0.0, abs=1e-12)


def test_target_posterior_round_trip(rng):
    lam = random_precision(3, rng)
    post = target_posterior(GaussianTarget(lam, [1.0, 2.0, 3.0]))
    np.testing.assert_allclose(post.precision @ post.cov, np.eye(3), atol=1e-10)
    back = json.loads(json.dumps(post.to_dict()))
    np.testing.assert_array_equal(back["cov"], post.cov)


def test_nonpd_covariance_rejected():
    with pytest.raises(np.linalg.LinAlgError):
        GaussianPosterior([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]], np.eye(2))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        GaussianPosterior.from_precision(np.eye(2))
