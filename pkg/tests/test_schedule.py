import numpy as np
import pytest

from scoreflow.schedule import NoiseSchedule, make_grid


@pytest.fixture
def schedule():
    return NoiseSchedule()


class TestEvaluate:
    def test_time_zero_is_exact(self, schedule):
        assert schedule.evaluate(0.0) == (1.0, 0.0)

    def test_time_eight(self, schedule):
        lam, sigma = schedule.evaluate(8.0)
        assert lam == np.exp(-8.0)
        assert sigma == np.sqrt(1.0 - np.exp(-16.0))
        assert lam == pytest.approx(3.3546e-4, rel=1e-4)

    def test_identity_holds_everywhere(self, schedule):
        rng = np.random.default_rng(0)
        t = rng.uniform(0.0, 20.0, size=10**6)
        lam, sigma = schedule.evaluate(t)
        assert np.abs(lam**2 + sigma**2 - 1.0).max() <= 1e-14

    def test_monotone(self, schedule):
        # past t ~ 18 sigma saturates to 1.0 in doubles; strictness is
        # checked where it is numerically resolvable
        t = np.sort(np.random.default_rng(1).uniform(0, 10, size=1000))
        lam, sigma = schedule.evaluate(t)
        assert np.all(np.diff(lam) < 0)
        assert np.all(np.diff(sigma) > 0)

    def test_small_time_no_cancellation(self, schedule):
        # sigma**2 = 2t + O(t**2) near zero; the naive form would lose digits
        _, sigma = schedule.evaluate(1e-12)
        assert sigma == pytest.approx(np.sqrt(2e-12), rel=1e-9)

    def test_negative_time_rejected(self, schedule):
        with pytest.raises(ValueError):
            schedule.evaluate(-0.1)
        with pytest.raises(ValueError):
            schedule.noise_variance(-1.0)


class TestMakeGrid:
    def test_sixteen_steps(self):
        grid = make_grid(0.0, 8.0, 16)
        assert grid.h == 0.5
        assert len(grid) == 17

    def test_single_step(self):
        grid = make_grid(0.0, 1.0, 1)
        assert grid.nodes.tolist() == [0.0, 1.0]

    def test_ninety_six_steps(self):
        grid = make_grid(0.0, 8.0, 96)
        assert grid.h == pytest.approx(1.0 / 12.0, abs=0)

    @pytest.mark.parametrize("t_start,t_end,n", [(0.0, 8.0, 96), (0.1, 0.3, 7), (2.0, 9.5, 113)])
    def test_last_node_pinned_and_monotone(self, t_start, t_end, n):
        grid = make_grid(t_start, t_end, n)
        assert grid.nodes[-1] == t_end
        assert grid.nodes[0] == t_start
        assert np.all(np.diff(grid.nodes) > 0)

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            make_grid(0.0, 1.0, 0)
        with pytest.raises(ValueError):
            make_grid(1.0, 0.0, 4)

    def test_nodes_are_read_only(self):
        grid = make_grid(0.0, 1.0, 4)
        with pytest.raises(ValueError):
            grid.nodes[0] = 5.0
