import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from stoch_consensus.graph import Digraph, GraphError, NoiseProfile, has_spanning_tree, laplacian, disagreement_form
from stoch_consensus.spectral import (UNBOUNDED, SpectralError, average_subspace, complement_basis, decompose,
                                      fixed_gain_bound, rate_gamma1, select_gain, solve_lyapunov,
                                      stationary_distribution, switching_gain_bound, union_constants)

from conftest import digraphs, random_digraph

EX51_A_BAR = 288 / 805  # exact rational value of 1 / c1 for Example 5.1 with unit noise


def c1_vectorized(d, g, noise):
    """Loop-free recomputation of c1 over the edge list."""
    W = np.diag(d.psi2.T @ d.q @ d.psi2)
    e = np.array(g.sorted_edges()) - 1
    sig = np.array([noise(u + 1, v + 1) for u, v in e])
    gaps = np.linalg.norm(d.phi2[e[:, 0]] - d.phi2[e[:, 1]], axis=1)
    return float(np.sum(W[e[:, 1]] * (sig * gaps) ** 2))


def complete(n):
    return Digraph.from_edges(n, [(u, v) for u in range(1, n + 1) for v in range(1, n + 1) if u != v])


def cycle(n):
    return Digraph.from_edges(n, [(k, k % n + 1) for k in range(1, n + 1)])


class TestStationaryDistribution:
    def test_example_5_1(self, ex51):
        np.testing.assert_allclose(stationary_distribution(laplacian(ex51)), [0.5, 0.25, 0.25, 0], atol=1e-10)

    def test_complete(self):
        np.testing.assert_allclose(stationary_distribution(laplacian(complete(3))), [1 / 3] * 3, atol=1e-12)

    def test_cycle(self):
        np.testing.assert_allclose(stationary_distribution(laplacian(cycle(4))), [0.25] * 4, atol=1e-12)

    def test_not_unique(self):
        g = Digraph.from_edges(4, [(1, 2), (2, 1), (3, 4), (4, 3)])
        with pytest.raises(SpectralError, match="not unique"):
            stationary_distribution(laplacian(g))

    def test_matches_scipy_null_space(self, ex51):
        ns = sla.null_space(laplacian(ex51).T)
        assert ns.shape[1] == 1
        ref = ns[:, 0] / ns[:, 0].sum()
        np.testing.assert_allclose(stationary_distribution(laplacian(ex51)), ref, atol=1e-12)


def check_invariants(L, d):
    n = L.shape[0]
    assert np.max(np.abs(d.pi @ L)) <= 1e-10
    assert d.pi.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(d.pi @ d.phi2)) <= 1e-10
    assert np.max(np.abs(d.psi2 @ np.ones(n))) <= 1e-10
    assert np.max(np.abs(d.psi2 @ d.phi2 - np.eye(n - 1))) <= 1e-10
    blk = np.linalg.inv(d.phi) @ (-L) @ d.phi
    assert np.max(np.abs(blk[0])) <= 1e-9 and np.max(np.abs(blk[:, 0])) <= 1e-9
    np.testing.assert_allclose(blk[1:, 1:], d.l_tilde, atol=1e-9)
    assert np.linalg.eigvals(d.l_tilde).real.max() < -1e-9
    resid = d.q @ d.l_tilde + d.l_tilde.T @ d.q + np.eye(n - 1)
    assert np.max(np.abs(resid)) <= 1e-8
    np.testing.assert_array_equal(d.q, d.q.T)
    assert np.linalg.eigvalsh(d.q).min() > 0


class TestDecompose:
    def test_two_node_by_hand(self):
        L = laplacian(Digraph.undirected(2, [(1, 2)]))
        d = decompose(L)
        np.testing.assert_allclose(d.pi, [0.5, 0.5], atol=1e-12)
        np.testing.assert_allclose(d.l_tilde, [[-2.0]], atol=1e-12)
        np.testing.assert_allclose(d.q, [[0.25]], atol=1e-12)
        check_invariants(L, d)

    def test_example_5_1(self, ex51):
        L = laplacian(ex51)
        d = decompose(L)
        np.testing.assert_allclose(d.pi, [0.5, 0.25, 0.25, 0], atol=1e-10)
        check_invariants(L, d)

    def test_deterministic(self, ex51):
        a, b = decompose(laplacian(ex51)), decompose(laplacian(ex51))
        np.testing.assert_array_equal(a.phi2, b.phi2)
        np.testing.assert_array_equal(a.q, b.q)

    @pytest.mark.parametrize("g", [cycle(5), complete(4), Digraph.undirected(5, [(1, 2), (2, 3), (3, 4), (4, 5)])])
    def test_balanced_strongly_connected_is_uniform(self, g):
        d = decompose(laplacian(g))
        np.testing.assert_allclose(d.pi, np.full(g.n_nodes, 1 / g.n_nodes), atol=1e-10)

    def test_no_spanning_tree(self):
        with pytest.raises(SpectralError):
            decompose(laplacian(Digraph.from_edges(3, [(1, 2)])))

    def test_lyapunov_matches_scipy(self, ex51):
        d = decompose(laplacian(ex51))
        ref = sla.solve_continuous_lyapunov(d.l_tilde.T, -np.eye(3))
        np.testing.assert_allclose(d.q, ref, atol=1e-12)

    def test_solve_lyapunov_random_stable(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            A = rng.normal(size=(4, 4))
            A -= (np.linalg.eigvals(A).real.max() + 0.5) * np.eye(4)
            Q = solve_lyapunov(A)
            np.testing.assert_allclose(Q, sla.solve_continuous_lyapunov(A.T, -np.eye(4)), atol=1e-10)

    def test_complement_basis_orthonormal(self):
        pi = np.array([0.5, 0.25, 0.25, 0.0])
        B = complement_basis(pi)
        np.testing.assert_allclose(B.T @ B, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(pi @ B, 0, atol=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(digraphs(min_nodes=2, max_nodes=6))
    def test_hurwitz_iff_spanning_tree(self, g):
        L = laplacian(g)
        if has_spanning_tree(g):
            check_invariants(L, decompose(L))
        else:
            with pytest.raises(SpectralError):
                decompose(L)


class TestFixedGainBound:
    def test_noise_free(self, ex51):
        d = decompose(laplacian(ex51))
        c1, a_bar = fixed_gain_bound(d, ex51, NoiseProfile({}))
        assert c1 == 0.0 and a_bar is UNBOUNDED

    def test_example_5_1_value(self, ex51):
        d = decompose(laplacian(ex51))
        noise = NoiseProfile.uniform([ex51], 1.0)
        c1, a_bar = fixed_gain_bound(d, ex51, noise)
        assert c1 == pytest.approx(c1_vectorized(d, ex51, noise), rel=1e-12)
        assert a_bar == pytest.approx(EX51_A_BAR, rel=1e-9)
        assert a_bar > 0.05

    def test_sigma_enters_squared(self, ex51):
        d = decompose(laplacian(ex51))
        noise = NoiseProfile.uniform([ex51], 0.7)
        c1, a_bar = fixed_gain_bound(d, ex51, noise)
        c1_2, a_bar_2 = fixed_gain_bound(d, ex51, noise.scaled(2.0))
        assert c1_2 == pytest.approx(4 * c1, rel=1e-12)
        assert a_bar_2 == pytest.approx(a_bar / 4, rel=1e-12)

    def test_invariant_under_basis_rotation(self, ex51):
        from stoch_consensus.spectral import SpectralDecomposition
        L = laplacian(ex51)
        d = decompose(L)
        noise = NoiseProfile.uniform([ex51], 1.0)
        R, _ = np.linalg.qr(np.random.default_rng(1).normal(size=(3, 3)))
        phi2 = d.phi2 @ R
        psi2 = np.linalg.inv(np.column_stack([np.ones(4), phi2]))[1:]
        lt = psi2 @ (-L) @ phi2
        q = sla.solve_continuous_lyapunov(lt.T, -np.eye(3))
        rot = SpectralDecomposition(d.pi, phi2, psi2, lt, q, float(np.linalg.eigvalsh(q)[-1]))
        assert fixed_gain_bound(rot, ex51, noise)[0] == pytest.approx(fixed_gain_bound(d, ex51, noise)[0], rel=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_relabeling_invariance(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 7))
        g = random_digraph(rng, n, 0.5)
        if not has_spanning_tree(g):
            return
        noise = NoiseProfile({e: float(rng.uniform(0.1, 2)) for e in g.edges})
        perm = rng.permutation(n) + 1
        relabel = {k + 1: int(perm[k]) for k in range(n)}
        g2 = Digraph(n, frozenset((relabel[u], relabel[v]) for u, v in g.edges))
        noise2 = NoiseProfile({(relabel[u], relabel[v]): s for (u, v), s in noise.sigma.items()})
        a1 = fixed_gain_bound(decompose(laplacian(g)), g, noise)[1]
        a2 = fixed_gain_bound(decompose(laplacian(g2)), g2, noise2)[1]
        assert a2 == pytest.approx(a1, rel=1e-9)


class TestRateGamma1:
    def test_half_bound(self):
        assert rate_gamma1(0.5, 1.0, 2.0) == pytest.approx(1.0 / (4 * 2.0))

    def test_vanishes_at_zero(self):
        assert rate_gamma1(1e-12, 1.0, 1.0) == pytest.approx(0.0, abs=1e-11)

    def test_example_5_1(self, ex51):
        d = decompose(laplacian(ex51))
        _, a_bar = fixed_gain_bound(d, ex51, NoiseProfile.uniform([ex51], 1.0))
        g1 = rate_gamma1(0.05, a_bar, d.q_lambda_max)
        assert g1 > 0
        assert g1 == pytest.approx((0.05 * a_bar - 0.05**2) / (a_bar * d.q_lambda_max))

    @pytest.mark.parametrize("a", [0.0, 1.0, 2.0, -1.0])
    def test_inadmissible(self, a):
        with pytest.raises(ValueError, match="inadmissible"):
            rate_gamma1(a, 1.0, 1.0)

    def test_unbounded_limit(self):
        assert rate_gamma1(0.3, UNBOUNDED, 2.0) == pytest.approx(0.15)

    @given(st.floats(0.01, 0.99))
    def test_positive_inside(self, frac):
        assert rate_gamma1(frac * 3.0, 3.0, 0.7) > 0


class TestSwitchingBound:
    def test_four_nodes(self, fig4a):
        c4, abb = switching_gain_bound(4, NoiseProfile.uniform([fig4a], 1.0))
        assert c4 == 6.0
        assert abb == pytest.approx(4 / 3)

    def test_two_nodes(self):
        assert switching_gain_bound(2, NoiseProfile({(1, 2): 1.0}))[1] == pytest.approx(2.0)

    def test_noise_free(self):
        assert switching_gain_bound(4, NoiseProfile({}))[1] is UNBOUNDED


class TestUnionConstants:
    def test_complete_undirected(self):
        uc = union_constants([complete(5)])
        assert uc.c_star == pytest.approx(1.0) and uc.c_star_star == pytest.approx(1.0) and uc.e == 1

    def test_figure_4_pair(self, fig4a, fig4b):
        uc = union_constants([fig4a, fig4b])
        assert uc.c_star > 0 and uc.e == 1
        assert uc.c_star <= uc.c_star_star

    def test_two_copies_double(self, ex51):
        one = union_constants([ex51])
        two = union_constants([ex51, ex51])
        assert two.e == 2
        assert two.c_star == pytest.approx(2 * one.c_star)
        assert two.c_star_star == pytest.approx(2 * one.c_star_star)

    def test_requires_spanning_tree(self):
        with pytest.raises(GraphError):
            union_constants([Digraph.from_edges(3, [(1, 2)])])

    def test_sandwich(self, fig4a, fig4b):
        gs = [fig4a, fig4b]
        uc = union_constants(gs)
        H = sum(disagreement_form(g) for g in gs)
        rng = np.random.default_rng(7)
        for _ in range(100):
            x = rng.normal(size=4)
            U = 4 * x @ x - x.sum() ** 2
            assert uc.c_star * U <= x @ H @ x + 1e-9
            assert x @ H @ x <= uc.e * uc.c_star_star * U + 1e-9


class TestAverageSubspace:
    def test_example_5_1(self):
        sub = average_subspace(np.array([0.5, 0.25, 0.25, 0]), 4)
        assert sub.kappa == 2
        assert sub([-5, 20, 50, -5])
        assert sub([3, 1, 2, 3])
        assert not sub([1, 20, 50, -5])

    def test_example_5_1_local_value(self):
        pi = np.array([0.5, 0.25, 0.25, 0])
        x0 = np.array([-5, 20, 50, -5])
        assert pi @ x0 == pytest.approx(15.0) == np.mean(x0)

    def test_uniform(self):
        sub = average_subspace(np.full(5, 0.2), 5)
        assert sub.kappa == 0
        assert sub(np.arange(5.0))

    def test_subspace_dimension(self):
        sub = average_subspace(np.array([0.5, 0.25, 0.25, 0]), 4)
        assert 4 - np.linalg.matrix_rank(sub.weights.reshape(1, -1)) == 3


class TestSelectGain:
    def test_auto_is_half(self):
        assert select_gain("auto", 0.8) == pytest.approx(0.4)

    def test_auto_needs_bound(self):
        with pytest.raises(ValueError):
            select_gain("auto", UNBOUNDED)

    def test_too_large(self):
        with pytest.raises(ValueError, match="inadmissible"):
            select_gain(10.0, EX51_A_BAR)
