import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stoch_consensus.analysis import (AnalysisError, average_consensus_check, consensus_error, disagreement,
                                      disagreement_pairs, fit_rate, limit_statistics, ms_curve,
                                      strong_consensus_check, sum_conservation_check)
from stoch_consensus.dynamics import SimulationParams, TrajectoryEnsemble, simulate_ensemble, simulate_path
from stoch_consensus.graph import Digraph, NoiseProfile, laplacian

PI51 = np.array([0.5, 0.25, 0.25, 0.0])
X51 = np.array([1.0, 20, 50, -5])
finite = st.floats(-1e3, 1e3, allow_nan=False)


def params(x0, dt=0.01, t_end=1.0, n_paths=4, seed=42, gain=1.0, record_every=1):
    return SimulationParams(dt, t_end, n_paths, seed, gain, np.asarray(x0, dtype=float), record_every)


def ensemble(states, x0=None, topology=None):
    states = np.asarray(states, dtype=float)
    r, t, n = states.shape
    x0 = states[0, 0] if x0 is None else np.asarray(x0, dtype=float)
    p = params(x0, t_end=float(t - 1), n_paths=r, dt=1.0)
    topology = topology or Digraph.undirected(n, [(i, i + 1) for i in range(1, n)])
    return TrajectoryEnsemble(np.arange(t, dtype=float), states, p, topology, np.arange(r))


class TestDisagreement:
    def test_two_nodes(self):
        assert disagreement([0.0, 1.0]) == 1.0
        assert disagreement_pairs([0.0, 1.0]) == 1.0

    def test_consensus_is_zero(self):
        assert disagreement(np.full(5, -3.5)) == 0.0

    @given(arrays(float, st.integers(1, 8), elements=finite))
    def test_identity_matches_double_sum(self, x):
        assert disagreement(x) == pytest.approx(disagreement_pairs(x), rel=1e-9, abs=1e-6)

    @given(arrays(float, st.integers(1, 8), elements=finite))
    def test_quadratic_form(self, x):
        n = x.size
        s = n * np.eye(n) - np.ones((n, n))
        assert disagreement(x) == pytest.approx(x @ s @ x, rel=1e-9, abs=1e-6)


class TestConsensusError:
    def test_example_5_1_initial(self):
        # pi @ x0 = 18; residuals (-17, 2, 32, -23)
        assert consensus_error(X51, PI51) == pytest.approx(1846.0, rel=1e-14)

    def test_uniform_weights(self):
        assert consensus_error([0.0, 1.0], [0.5, 0.5]) == 0.5

    @given(arrays(float, 4, elements=finite), finite)
    def test_translation_invariant(self, x, c):
        assert consensus_error(x + c, PI51) == pytest.approx(consensus_error(x, PI51), rel=1e-6, abs=1e-6)


class TestFitRate:
    def test_exponential(self):
        t = np.linspace(0, 10, 101)
        assert fit_rate(t, 7.0 * np.exp(-2.0 * t), (1.0, 6.0)) == pytest.approx(2.0, abs=1e-6)

    def test_constant(self):
        t = np.linspace(0, 10, 101)
        assert fit_rate(t, np.full_like(t, 3.0), (1.0, 6.0)) == pytest.approx(0.0, abs=1e-12)

    def test_floored_curve(self):
        t = np.linspace(0, 10, 101)
        with pytest.raises(AnalysisError, match="floored"):
            fit_rate(t, np.exp(-50.0 * t), (1.0, 6.0))

    def test_floor_points_dropped(self):
        t = np.linspace(0, 10, 101)
        curve = np.exp(-3.0 * t)
        curve[t > 5] = 0.0
        assert fit_rate(t, curve, (0.0, 10.0)) == pytest.approx(3.0, abs=1e-9)


class TestMsCurve:
    def test_noise_free_matches_matrix_exponential(self, ex51):
        p = params(X51, dt=1e-3, t_end=2.0, n_paths=2, gain=0.5, record_every=100)
        ens = simulate_ensemble(ex51, NoiseProfile({}), p)
        curve = ms_curve(ens, PI51)
        lap = laplacian(ex51)
        exact = [consensus_error(sla.expm(-0.5 * lap * t) @ X51, PI51) for t in ens.times]
        np.testing.assert_allclose(curve, exact, rtol=5e-3)

    def test_single_path(self, ex51):
        p = params(X51, n_paths=1, gain=0.05)
        noise = NoiseProfile.uniform([ex51], 1.0)
        ens = simulate_ensemble(ex51, noise, p)
        path = simulate_path(ex51, noise, p, 0)
        np.testing.assert_allclose(ms_curve(ens), [disagreement(x) for x in path], rtol=1e-12)
        np.testing.assert_allclose(ms_curve(ens, PI51), [consensus_error(x, PI51) for x in path], rtol=1e-12)

    def test_mean_over_paths(self):
        states = np.array([[[0.0, 1.0], [0.0, 0.0]], [[0.0, 3.0], [1.0, 1.0]]])
        np.testing.assert_allclose(ms_curve(ensemble(states, x0=[0.0, 1.0])), [5.0, 0.0])


class TestLimitStatistics:
    def test_noise_free_has_zero_variance(self, ex51):
        p = params(X51, dt=0.01, t_end=60.0, n_paths=5, gain=1.0, record_every=100)
        stats = limit_statistics(simulate_ensemble(ex51, NoiseProfile({}), p), PI51)
        assert stats.limit_mean == pytest.approx(18.0, abs=1e-6)
        assert stats.limit_variance == pytest.approx(0.0, abs=1e-20)
        assert stats.ci_halfwidth == pytest.approx(0.0, abs=1e-10)
        assert stats.converged

    def test_not_converged_flag(self):
        states = np.array([[[0.0, 1.0], [0.0, 1.0]]] * 3)
        assert not limit_statistics(ensemble(states)).converged

    def test_ci_shrinks_with_paths(self, ex51):
        noise = NoiseProfile.uniform([ex51], 1.0)
        small = limit_statistics(simulate_ensemble(ex51, noise, params(X51, 0.01, 20.0, 100, 7, 0.05, 100)), PI51)
        large = limit_statistics(simulate_ensemble(ex51, noise, params(X51, 0.01, 20.0, 400, 7, 0.05, 100)), PI51)
        assert small.ci_halfwidth / large.ci_halfwidth == pytest.approx(2.0, rel=0.3)

    def test_average_check(self):
        states = np.array([[[0.0, 2.0], [0.9, 0.9]], [[0.0, 2.0], [1.1, 1.1]]])
        stats = limit_statistics(ensemble(states))
        assert average_consensus_check(stats, [0.0, 2.0])
        assert not average_consensus_check(stats, [0.0, 4.0])


class TestStrongConsensus:
    def test_settled_paths_pass(self):
        states = np.array([[[0.0, 2.0], [1.0, 1.0], [1.0, 1.0]]] * 2)
        res = strong_consensus_check(ensemble(states), tail_fraction=0.5)
        assert res.passed and res.worst_ratio == 0.0

    def test_worst_path_reported(self):
        states = np.array([[[0.0, 2.0], [1.0, 1.0], [1.0, 1.0]],
                           [[0.0, 2.0], [1.0, 1.0], [0.0, 1.0]]])
        res = strong_consensus_check(ensemble(states), tail_fraction=0.5)
        assert not res.passed
        assert res.worst_path == 1
        assert res.worst_ratio == pytest.approx(0.25)

    def test_consensus_start(self):
        states = np.ones((2, 3, 3))
        assert strong_consensus_check(ensemble(states)).passed


class TestSumConservation:
    def test_rejects_unbalanced(self, ex51):
        ens = simulate_ensemble(ex51, NoiseProfile({}), params(X51, n_paths=2))
        with pytest.raises(AnalysisError, match="balanced"):
            sum_conservation_check(ens)

    def test_balanced_noise_free_is_exact(self, fig4a):
        g = Digraph.undirected(4, [(1, 2), (2, 3), (3, 4)])
        ens = simulate_ensemble(g, NoiseProfile({}), params([1, 2, 5, -10], n_paths=3))
        res = sum_conservation_check(ens)
        assert abs(res.deviation) < 1e-12 and res.within_3se

    def test_balanced_noisy_within_3se(self):
        g = Digraph.undirected(4, [(1, 2), (2, 3), (3, 4)])
        ens = simulate_ensemble(g, NoiseProfile.uniform([g], 1.0), params([1, 2, 5, -10], t_end=5.0, n_paths=200, gain=0.2))
        assert sum_conservation_check(ens).within_3se
