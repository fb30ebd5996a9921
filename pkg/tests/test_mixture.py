import numpy as np
import pytest

from scoreflow.mixture import (
    DiffusedMixture,
    GaussianMixture,
    make_random_mixture,
    marginalize,
)

BENCH_1D = dict(weights=[0.1, 0.4, 0.5], means=[-6.0, 4.0, 6.0], covariances=[0.25, 0.25, 0.25])


@pytest.fixture
def bench():
    return GaussianMixture(**BENCH_1D)


@pytest.fixture
def standard_normal_2d():
    return GaussianMixture(weights=[1.0], means=[[0.0, 0.0]], covariances=[np.eye(2)])


def finite_difference_score(dm, points, eps=1e-5):
    d = points.shape[1]
    out = np.zeros_like(points)
    for j in range(d):
        e = np.zeros(d)
        e[j] = eps
        hi = np.array([dm.log_density(p + e) for p in points])
        lo = np.array([dm.log_density(p - e) for p in points])
        out[:, j] = (hi - lo) / (2 * eps)
    return out


class TestValidation:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError, match="sum to 1"):
            GaussianMixture(weights=[0.6, 0.6], means=[0.0, 1.0], covariances=[1.0, 1.0])

    def test_weights_must_be_positive(self):
        with pytest.raises(ValueError, match="positive"):
            GaussianMixture(weights=[1.2, -0.2], means=[0.0, 1.0], covariances=[1.0, 1.0])

    def test_asymmetric_covariance_rejected(self):
        cov = np.array([[1.0, 0.3], [0.1, 1.0]])
        with pytest.raises(ValueError, match="symmetric"):
            GaussianMixture(weights=[1.0], means=[[0.0, 0.0]], covariances=[cov])

    def test_indefinite_covariance_rejected(self):
        cov = np.array([[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(ValueError, match="positive definite"):
            GaussianMixture(weights=[1.0], means=[[0.0, 0.0]], covariances=[cov])

    def test_dimension_mismatch_on_evaluation(self, bench):
        with pytest.raises(ValueError, match="dimension"):
            bench.log_density(np.zeros(3))
        with pytest.raises(ValueError, match="dimension"):
            bench.score(np.zeros((4, 2)))


class TestLogDensity:
    def test_standard_normal_is_stationary(self, standard_normal_2d):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(50, 2))
        expected = -np.log(2 * np.pi) - 0.5 * (x**2).sum(axis=1)
        for t in (0.0, 0.5, 3.0, 8.0):
            got = standard_normal_2d.diffuse(t).log_density(x)
            assert np.abs(got - expected).max() < 1e-12

    def test_bench_mixture_integrates_to_one(self, bench):
        # trapezoid oracle on the metric domain
        x = np.linspace(-10, 10, 10_000)
        q = np.exp(bench.log_density(x[:, None]))
        assert np.trapezoid(q, x) == pytest.approx(1.0, abs=1e-6)

    def test_late_time_limit_is_standard_normal(self, bench):
        x = np.linspace(-3, 3, 11)
        got = bench.diffuse(40.0).log_density(x[:, None])
        expected = -0.5 * np.log(2 * np.pi) - 0.5 * x**2
        assert np.abs(got - expected).max() < 1e-10

    def test_diffuse_zero_reproduces_base(self, bench):
        x = np.linspace(-8, 8, 101)[:, None]
        base = bench.log_density(x)
        at0 = bench.diffuse(0.0).log_density(x)
        assert np.abs(base - at0).max() <= 1e-13


class TestScore:
    def test_standard_normal_score_is_minus_x(self, standard_normal_2d):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(20, 2), scale=2.0)
        for t in np.linspace(0.0, 8.0, 9):
            s = standard_normal_2d.diffuse(t).score(x)
            assert np.abs(s + x).max() <= 1e-12

    def test_near_delta_mode_matches_closed_form(self):
        # a tiny covariance stands in for a point mass: score -> -(x - lam*m)/sigma**2
        m = 1.5
        gm = GaussianMixture(weights=[1.0], means=[m], covariances=[1e-10])
        for t in (0.5, 2.0, 8.0):
            dm = gm.diffuse(t)
            lam = np.exp(-t)
            sig2 = -np.expm1(-2 * t)
            x = np.linspace(-2, 2, 7)[:, None]
            expected = -(x - lam * m) / sig2
            assert np.abs((dm.score(x) - expected) / expected).max() < 1e-6

    @pytest.mark.parametrize("seed", [0, 1])
    def test_matches_finite_differences_1d(self, bench, seed):
        rng = np.random.default_rng(seed)
        for t in rng.uniform(0.0, 8.0, size=5):
            dm = bench.diffuse(t)
            pts = bench.forward_sample(t, 20, seed + 10)
            fd = finite_difference_score(dm, pts)
            sc = dm.score(pts)
            rel = np.linalg.norm(fd - sc, axis=1) / np.maximum(np.linalg.norm(sc, axis=1), 1e-12)
            assert rel.max() < 1e-6

    def test_matches_finite_differences_multid(self):
        gm = make_random_mixture(4, 3, 7)
        for t in (0.05, 1.0, 6.0):
            dm = gm.diffuse(t)
            pts = gm.forward_sample(t, 25, 3)
            fd = finite_difference_score(dm, pts)
            sc = dm.score(pts)
            rel = np.linalg.norm(fd - sc, axis=1) / np.linalg.norm(sc, axis=1)
            assert rel.max() < 1e-6

    def test_responsibilities_normalized(self, bench):
        dm = bench.diffuse(0.3)
        x = np.linspace(-12, 12, 401)[:, None]
        r = dm.responsibilities(x)
        assert r.min() >= 0.0 and r.max() <= 1.0
        assert np.abs(r.sum(axis=1) - 1.0).max() <= 1e-12


class TestSampling:
    def test_prior_moments_single_mode(self):
        gm = GaussianMixture(weights=[1.0], means=[[0.0, 0.0, 0.0]], covariances=[np.eye(3)])
        n = 10**5
        x = gm.sample_prior(n, 4)
        assert np.abs(x.mean(axis=0)).max() < 4 / np.sqrt(n)

    def test_same_seed_is_deterministic(self, bench):
        a = bench.sample_prior(1000, 123)
        b = bench.sample_prior(1000, 123)
        assert np.array_equal(a, b)

    def test_mode_proportions(self, bench):
        n = 10**5
        x = bench.sample_prior(n, 5).ravel()
        # modes have std 0.5: windows around each mean identify the component
        counts = np.array(
            [
                (x < -3.0).sum(),
                ((x > 0.0) & (x < 5.0)).sum(),
                (x >= 5.0).sum(),
            ]
        )
        for c, w in zip(counts, bench.weights):
            assert abs(c / n - w) <= 3 * np.sqrt(w / n)

    def test_forward_sample_at_zero_equals_prior(self, bench):
        assert np.array_equal(bench.forward_sample(0.0, 500, 9), bench.sample_prior(500, 9))

    def test_forward_sample_moments(self):
        gm = GaussianMixture(weights=[1.0], means=[[2.0]], covariances=[[[0.5]]])
        t, n = 1.2, 10**5
        lam = np.exp(-t)
        x = gm.forward_sample(t, n, 11)
        assert abs(x.mean() - lam * 2.0) < 4 / np.sqrt(n)

    def test_negative_time_rejected(self, bench):
        with pytest.raises(ValueError):
            bench.forward_sample(-1.0, 10, 0)


class TestMarginalize:
    def test_all_dims_identity(self):
        gm = make_random_mixture(5, 3, 2)
        sub = marginalize(gm, range(5))
        assert np.array_equal(sub.means, gm.means)
        assert np.array_equal(sub.covariances, gm.covariances)

    def test_marginal_density_matches_quadrature(self):
        gm = make_random_mixture(2, 3, 8)
        sub = marginalize(gm, [0])
        ys = np.linspace(-30, 30, 2001)
        xs = np.array([-1.0, 0.5, 2.0])
        for x0 in xs:
            pts = np.column_stack([np.full_like(ys, x0), ys])
            joint = np.exp(gm.log_density(pts))
            integral = np.trapezoid(joint, ys)
            assert integral == pytest.approx(np.exp(sub.log_density(np.array([x0]))), rel=1e-6)

    def test_diagonal_variance_selection(self):
        cov = np.diag([1.0, 2.0, 3.0])
        gm = GaussianMixture(weights=[1.0], means=[[0.0, 0.0, 0.0]], covariances=[cov])
        sub = marginalize(gm, [2, 0])
        assert np.array_equal(sub.covariances[0], np.diag([3.0, 1.0]))

    def test_commutes_with_diffusion(self):
        gm = make_random_mixture(3, 4, 5)
        t = 0.8
        dims = [0, 2]
        a = marginalize(gm.diffuse(t), dims)
        b = marginalize(gm, dims).diffuse(t)
        x = np.random.default_rng(0).normal(size=(200, 2), scale=3.0)
        assert np.abs(a.log_density(x) - b.log_density(x)).max() <= 1e-10

    def test_invalid_dims(self):
        gm = make_random_mixture(3, 2, 1)
        with pytest.raises(ValueError):
            marginalize(gm, [])
        with pytest.raises(ValueError):
            marginalize(gm, [0, 0])
        with pytest.raises(ValueError):
            marginalize(gm, [3])


class TestMakeRandomMixture:
    def test_covariance_eigenvalues_bounded_below(self):
        gm = make_random_mixture(16, 5, 3)
        for c in gm.covariances:
            assert np.linalg.eigvalsh(c).min() >= 0.125 - 1e-9

    def test_weights_sum_to_one(self):
        gm = make_random_mixture(4, 7, 0)
        assert gm.weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_reference_dimensions(self):
        gm = make_random_mixture(128, 5, 2)
        assert gm.d == 128
        assert gm.n_modes == 5

    def test_moments_closed_form(self):
        gm = make_random_mixture(3, 4, 9)
        n = 2 * 10**5
        x = gm.sample_prior(n, 1)
        assert np.abs(x.mean(axis=0) - gm.mean()).max() < 0.05
        emp_cov = np.cov(x.T, ddof=0)
        assert np.abs(emp_cov - gm.covariance()).max() < 0.2
