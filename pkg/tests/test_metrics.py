import numpy as np
import pytest

from scoreflow.fv1d import total_variation_grid
from scoreflow.metrics import (
    KDEConfig,
    density_on_grid,
    fit_loglog,
    fit_slope,
    kde_1d,
    moment_errors,
    silverman_bandwidth,
    tv_marginal,
)
from scoreflow.mixture import GaussianMixture, make_random_mixture

BENCH_1D = dict(weights=[0.1, 0.4, 0.5], means=[-6.0, 4.0, 6.0], covariances=[0.25, 0.25, 0.25])


class TestSilvermanBandwidth:
    def test_reference_value(self):
        # (4 / 120000) ** 0.2 with no taper
        assert silverman_bandwidth(40000, 1, 0.0, 8.0) == pytest.approx(0.12722596365, abs=1e-10)

    def test_final_time_halves(self):
        full = silverman_bandwidth(40000, 1, 0.0, 8.0)
        assert silverman_bandwidth(40000, 1, 8.0, 8.0) == pytest.approx(full / 2, abs=0)

    def test_monotone_in_n_and_t(self):
        bs = [silverman_bandwidth(n, 1, 0.0, 8.0) for n in (100, 1000, 10**6, 10**9)]
        assert all(a > b for a, b in zip(bs, bs[1:]))
        ts = [silverman_bandwidth(1000, 1, t, 8.0) for t in (0.0, 2.0, 5.0, 8.0)]
        assert all(a > b for a, b in zip(ts, ts[1:]))

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            silverman_bandwidth(1, 1, 0.0, 8.0)
        with pytest.raises(ValueError):
            silverman_bandwidth(100, 1, 9.0, 8.0)
        with pytest.raises(ValueError):
            silverman_bandwidth(100, 0, 0.0, 8.0)


class TestKde:
    def test_point_mass_gives_single_kernel(self):
        b = 0.5
        cfg = KDEConfig(lo=-5, hi=5, points=1000, bandwidth=b)
        f = kde_1d(np.zeros(100), cfg)
        expected = np.exp(-0.5 * (f.centers / b) ** 2) / (b * np.sqrt(2 * np.pi))
        assert np.abs(f.rho - expected / (expected.sum() * f.dx)).max() < 1e-12

    def test_standard_normal_tv(self):
        rng = np.random.default_rng(42)
        samples = rng.standard_normal(40000)
        cfg = KDEConfig(t=8.0, horizon=8.0)
        std = GaussianMixture(weights=[1.0], means=[0.0], covariances=[1.0])
        f = kde_1d(samples, cfg)
        assert total_variation_grid(f, density_on_grid(std, cfg)) <= 0.02

    def test_mass_normalized(self):
        f = kde_1d(np.random.default_rng(0).normal(size=500), KDEConfig())
        assert f.rho.sum() * f.dx == pytest.approx(1.0, abs=1e-9)

    def test_duplicating_samples_is_noop(self):
        x = np.random.default_rng(1).normal(size=400)
        cfg = KDEConfig(bandwidth=0.3)
        a = kde_1d(x, cfg)
        b = kde_1d(np.concatenate([x, x]), cfg)
        assert np.abs(a.rho - b.rho).max() <= 1e-9

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            kde_1d(np.array([1.0]), KDEConfig())


class TestTvMarginal:
    def test_self_consistency(self):
        gm = GaussianMixture(**BENCH_1D)
        samples = gm.sample_prior(40000, 7)
        cfg = KDEConfig(t=8.0, horizon=8.0)
        assert tv_marginal(samples, gm, 0, cfg) <= 0.02

    def test_disjoint_supports(self):
        gm = GaussianMixture(weights=[1.0], means=[5.0], covariances=[0.01])
        samples = np.random.default_rng(2).normal(scale=0.1, size=(5000, 1))
        assert tv_marginal(samples, gm, 0, KDEConfig(bandwidth=0.1)) >= 0.95

    def test_high_dimensional_first_coordinate(self):
        gm = make_random_mixture(8, 3, 4)
        samples = gm.sample_prior(40000, 9)
        cfg = KDEConfig(t=8.0, horizon=8.0)
        assert tv_marginal(samples, gm, 0, cfg) <= 0.02

    def test_bad_dim_index(self):
        gm = make_random_mixture(3, 2, 0)
        with pytest.raises(ValueError, match="dim_index"):
            tv_marginal(np.zeros((10, 3)), gm, 5, KDEConfig())


class TestMomentErrors:
    def test_exact_moments_give_zero(self):
        # two symmetric samples realize mean m and population variance c exactly
        m, c = 3.0, 0.25
        gm = GaussianMixture(weights=[1.0], means=[m], covariances=[c])
        samples = np.array([[m - np.sqrt(c)], [m + np.sqrt(c)]])
        err = moment_errors(samples, gm)
        assert err.rel_mean_err == 0.0
        assert err.rel_cov_err == 0.0
        assert not err.mean_err_is_absolute

    def test_mean_shift(self):
        m = np.array([3.0, 4.0])
        gm = GaussianMixture(weights=[1.0], means=[m], covariances=[np.eye(2)])
        eps = 0.01
        base = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        samples = m + base + np.array([eps, 0.0])
        err = moment_errors(samples, gm)
        assert err.rel_mean_err == pytest.approx(eps / 5.0, rel=1e-12)

    def test_bench_reference_mean(self):
        gm = GaussianMixture(**BENCH_1D)
        assert gm.mean()[0] == pytest.approx(4.0, abs=1e-12)

    def test_centered_reference_reports_absolute(self):
        gm = GaussianMixture(weights=[1.0], means=[0.0], covariances=[1.0])
        samples = np.array([[0.3], [0.5]])
        err = moment_errors(samples, gm)
        assert err.mean_err_is_absolute
        assert err.rel_mean_err == pytest.approx(0.4, abs=1e-12)

    def test_permutation_invariant(self):
        gm = make_random_mixture(2, 2, 3)
        x = gm.sample_prior(500, 1)
        a = moment_errors(x, gm)
        b = moment_errors(x[::-1], gm)
        assert a.rel_mean_err == pytest.approx(b.rel_mean_err, rel=1e-12)
        assert a.rel_cov_err == pytest.approx(b.rel_cov_err, rel=1e-12)


class TestSlopeFits:
    def test_linear(self):
        x = np.array([1.0, 2.0, 4.0, 8.0])
        assert fit_slope(zip(x, 3 * x)) == pytest.approx(1.0, abs=1e-12)

    def test_quadratic(self):
        x = np.array([0.5, 1.0, 2.0])
        assert fit_slope(zip(x, x**2)) == pytest.approx(2.0, abs=1e-12)

    def test_r2_of_exact_power_law(self):
        fit = fit_loglog([1, 2, 4], [2, 4, 8])
        assert fit.r2 == pytest.approx(1.0, abs=1e-12)
        assert fit.intercept == pytest.approx(np.log(2.0), abs=1e-12)

    def test_nonpositive_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            fit_slope([(1.0, 1.0), (2.0, -1.0)])
        with pytest.raises(ValueError, match="positive"):
            fit_slope([(0.0, 1.0), (2.0, 1.0)])

    def test_needs_two_distinct_x(self):
        with pytest.raises(ValueError, match="distinct"):
            fit_slope([(1.0, 1.0), (1.0, 2.0)])
