import numpy as np
import pytest

from svperturb import HypothesisError
from svperturb.ensembles import (
    EnsembleSpec,
    abs_bound_experiment,
    asymptotic_constants,
    edelman_check,
    edge_stats,
    kappa_over_n_cdf_at,
    kappa_over_n_density,
    relu_bound_experiment,
    relu_nu,
    residual_improves,
    sample_scaled,
)
from svperturb.linalg import condition_number, singular_values
from svperturb.reportio import ks_two_sample

from scipy.integrate import quad


def test_sigma_formula():
    spec = EnsembleSpec(n=2, dist="gaussian", r=2.0, trials=1, master_seed=0)
    assert spec.sigma_n == pytest.approx(0.125, abs=1e-15)


def test_spec_validation():
    with pytest.raises(HypothesisError):
        EnsembleSpec(n=5, dist="gaussian", r=1.0, trials=10, master_seed=0)
    with pytest.raises(ValueError):
        EnsembleSpec(n=5, dist="cauchy", r=2.0, trials=10, master_seed=0)


def test_sample_determinism():
    spec = EnsembleSpec(n=6, dist="uniform", r=3.0, trials=4, master_seed=11)
    a = sample_scaled(spec, 2)
    b = sample_scaled(spec, 2)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, sample_scaled(spec, 3))


def test_sample_mean_clt():
    spec = EnsembleSpec(n=100, dist="gaussian", r=2.0, trials=200, master_seed=5)
    total = sum(float(np.sum(sample_scaled(spec, t))) for t in range(spec.trials))
    count = spec.n * spec.n * spec.trials
    mean = total / count
    assert abs(mean) <= 4.0 * spec.sigma_n / np.sqrt(count)


def test_uniform_variance_normalization():
    spec = EnsembleSpec(n=80, dist="uniform", r=2.0, trials=50, master_seed=6)
    entries = np.concatenate([sample_scaled(spec, t).ravel() / spec.sigma_n for t in range(50)])
    assert np.std(entries) == pytest.approx(1.0, abs=0.01)
    assert np.max(np.abs(entries)) <= np.sqrt(3.0)


def test_edge_stats_smoke():
    spec = EnsembleSpec(n=5, dist="gaussian", r=2.0, trials=300, master_seed=21)
    stats = edge_stats(spec)
    assert stats.z_samples.shape == (300,)
    assert stats.y_samples is not None
    assert np.all(stats.z_samples < 8.0)
    # symmetry of the two edges
    assert ks_two_sample(stats.z_samples, stats.z_tilde_samples) < 0.15
    uni = edge_stats(EnsembleSpec(n=5, dist="uniform", r=2.0, trials=50, master_seed=21))
    assert uni.y_samples is None
    with pytest.raises(ValueError):
        edge_stats(EnsembleSpec(n=1, dist="gaussian", r=2.0, trials=5, master_seed=0))


def test_edge_stats_thread_determinism():
    spec = EnsembleSpec(n=5, dist="gaussian", r=2.0, trials=64, master_seed=33)
    a = edge_stats(spec, threads=1)
    b = edge_stats(spec, threads=4)
    np.testing.assert_array_equal(a.z_samples, b.z_samples)
    np.testing.assert_array_equal(a.tau_ratio_samples, b.tau_ratio_samples)


def test_abs_experiment_records():
    spec = EnsembleSpec(n=10, dist="gaussian", r=2.0, trials=300, master_seed=41)
    records = abs_bound_experiment(spec, m=5)
    assert len(records) == 300
    for rec in records:
        if rec.exception_flags:
            continue
        assert rec.kappa_measured <= rec.bound_tight + 1e-9
        assert rec.bound_tight <= rec.bound_simple + 1e-12
        assert rec.ratio_smallest >= 1.0 - 1e-12
        assert rec.ratio_largest >= 1.0 - 1e-12
        assert rec.ratio_kappa >= 1.0 - 1e-12


def test_abs_experiment_thread_determinism():
    spec = EnsembleSpec(n=8, dist="gaussian", r=2.0, trials=40, master_seed=42)
    a = abs_bound_experiment(spec, m=4, threads=1)
    b = abs_bound_experiment(spec, m=4, threads=3)
    assert [r.kappa_measured for r in a] == [r.kappa_measured for r in b]


def test_relu_nu_values():
    assert relu_nu(0, 1, 10) == pytest.approx(1.0)
    assert relu_nu(10, 10, 10) == pytest.approx(10.0)
    assert relu_nu(2, 2, 16) == pytest.approx(3.75)


def test_relu_experiment_hypothesis_checks():
    def spec_with(r):
        return EnsembleSpec(n=16, dist="gaussian", r=r, trials=5, master_seed=0)

    with pytest.raises(HypothesisError, match="theta"):
        relu_bound_experiment(spec_with(25.0), 2, 2, theta=3.0, r_prime=2.0)
    with pytest.raises(HypothesisError, match="r >"):
        relu_bound_experiment(spec_with(5.0), 2, 2, theta=4.5, r_prime=2.0)
    with pytest.raises(HypothesisError, match="m"):
        relu_bound_experiment(spec_with(25.0), 0, 0, theta=4.5, r_prime=2.0)
    with pytest.raises(HypothesisError, match="Gaussian"):
        relu_bound_experiment(
            EnsembleSpec(n=16, dist="uniform", r=25.0, trials=5, master_seed=0),
            2, 2, theta=4.5, r_prime=2.0,
        )


def test_relu_experiment_violation_rate():
    spec = EnsembleSpec(n=16, dist="gaussian", r=25.0, trials=500, master_seed=51)
    result = relu_bound_experiment(spec, 2, 2, theta=4.5, r_prime=2.0)
    assert result.nu == pytest.approx(3.75)
    exceptional = sum(1 for rec in result.records if rec.exception_flags)
    allowance = result.allowed_failure_probability * spec.trials + exceptional
    se = 3.0 * np.sqrt(spec.trials * result.allowed_failure_probability)
    assert result.violations_fixed <= allowance + se
    assert result.violations_via_s1 <= allowance + se


def test_asymptotic_constants():
    via_tau, via_s1 = asymptotic_constants(2.0)
    assert via_tau == pytest.approx(1.8028, abs=5e-5)
    assert via_s1 == pytest.approx(1.9719, abs=5e-5)
    via_tau3, _ = asymptotic_constants(3.0)
    assert via_tau3 == pytest.approx(np.sqrt(12.5 / 6.0), rel=1e-12)
    big_tau, big_s1 = asymptotic_constants(1e6)
    assert big_tau == pytest.approx(1.0, abs=1e-5)
    assert big_s1 == pytest.approx(1.0, abs=1e-5)
    with pytest.raises(HypothesisError):
        asymptotic_constants(1.0)


def test_kappa_density_normalizes():
    total = quad(kappa_over_n_density, 0.0, np.inf, epsrel=1e-10, limit=400)[0]
    assert total == pytest.approx(1.0, abs=1e-6)
    cdf = kappa_over_n_cdf_at(np.array([1.0, 2.0, 5.0, 50.0]))
    assert np.all(np.diff(cdf) > 0)
    assert cdf[-1] < 1.0


def test_kappa_scale_invariance():
    rng = np.random.default_rng(61)
    for _ in range(100):
        w = rng.standard_normal((6, 6))
        assert condition_number(0.01 * w) == pytest.approx(condition_number(w), rel=1e-10)


def test_edelman_smoke():
    result = edelman_check(n=40, trials=300, seed=71)
    assert result.density_integral == pytest.approx(1.0, abs=1e-6)
    assert result.kappa_over_n_samples.shape == (300,)
    assert result.ks_distance < 0.2  # loose at this tiny scale


def test_residual_improvement_smoke():
    spec = EnsembleSpec(n=30, dist="gaussian", r=2.0, trials=300, master_seed=81)
    out = residual_improves(spec, m=10)
    assert out.fraction_improved >= 0.99
    assert out.counterexamples_given_condition == 0


def test_residual_zero_base_edge():
    # with M0 = 0 the residual side is exactly the identity times a sign mask
    d = np.diag([1.0, -1.0, 1.0])
    assert condition_number(np.eye(3) @ d) == pytest.approx(1.0, abs=1e-12)


def test_almost_sure_simplicity():
    rng = np.random.default_rng(91)
    min_gap = np.inf
    for _ in range(10000):
        s = singular_values(rng.standard_normal((10, 10)))
        min_gap = min(min_gap, float(np.min(-np.diff(s))))
    assert min_gap > 0.0
