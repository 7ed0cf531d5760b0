import math

import numpy as np
import pytest

from conftest import edge_cascade, random_cascades, random_factors
from infrec._engine import FactorEngine, ThetaEngine, tree_sum
from infrec.exceptions import NumericalError
from infrec.likelihood import (cascade_loglik, dataset_negloglik, grad_wrt_A, grad_wrt_factors,
                               grad_wrt_theta, grad_wrt_topics, node_terms, theta_negloglik)
from infrec.model import CascadeRecord, FactorPair, diffusion_matrix, stack_topics
from oracles import brute_loglik, central_diff, max_rel_error

A12 = np.array([[0.0, 2.0], [0.0, 0.0]])


def test_loglik_infected_pair():
    assert cascade_loglik(edge_cascade(0.5), A12, "exp") == pytest.approx(-1 + math.log(2), abs=1e-12)


def test_loglik_uninfected_pair():
    c = CascadeRecord("u", (1.0,), ((0, 0.0),), 1.0)
    assert cascade_loglik(c, A12, "exp") == pytest.approx(-2.0)


def test_loglik_empty_cascade_zero_matrix():
    c = CascadeRecord("u", (1.0,), ((1, 0.0),), 1.0)
    assert cascade_loglik(c, np.zeros((3, 3)), "exp") == 0.0


def test_loglik_impossible_infection():
    assert cascade_loglik(edge_cascade(0.5), np.zeros((2, 2)), "exp") == -math.inf


def test_simultaneous_infections_excluded():
    c = CascadeRecord("t", (1.0,), ((0, 0.0), (1, 0.5), (2, 0.5)), 1.0)
    A = np.ones((3, 3)) - np.eye(3)
    # node 1 and node 2 each see only the source as a potential infector
    expected = 2 * (-0.5 + math.log(1.0))
    assert cascade_loglik(c, A, "exp") == pytest.approx(expected)


@pytest.mark.parametrize("kernel", ["exp", "rayleigh"])
def test_loglik_matches_brute_force(kernel):
    rng = np.random.default_rng(0)
    p = 6
    for c in random_cascades(rng, p, 1, 30):
        A = rng.uniform(0, 2, (p, p))
        np.fill_diagonal(A, 0)
        assert cascade_loglik(c, A, kernel) == pytest.approx(brute_loglik(c, A, kernel), rel=1e-12, abs=1e-12)


def test_node_terms_decompose():
    rng = np.random.default_rng(1)
    p = 5
    c = random_cascades(rng, p, 1, 1)[0]
    A = rng.uniform(0.1, 2, (p, p))
    terms = node_terms(c, A, "exp")
    assert terms.shape == (p,)
    assert terms[c.source] == 0.0
    assert terms.sum() == pytest.approx(cascade_loglik(c, A, "exp"), rel=1e-13)


def test_dataset_negloglik_examples():
    f = FactorPair(np.array([[1.0], [0.0]]), np.array([[0.0], [2.0]]))
    one = [edge_cascade(0.5)]
    assert dataset_negloglik(one, f, "exp") == pytest.approx(1 - math.log(2), abs=1e-12)
    assert dataset_negloglik(one * 2, f, "exp") == pytest.approx(dataset_negloglik(one, f, "exp"), abs=1e-15)


def test_dataset_negloglik_is_mean():
    # logliks -1 (window 0.5) and -3 (window 1.5) on an uninfected pair with rate 2
    f = FactorPair(np.array([[1.0], [0.0]]), np.array([[0.0], [2.0]]))
    cs = [CascadeRecord("a", (1.0,), ((0, 0.0),), 0.5), CascadeRecord("b", (1.0,), ((0, 0.0),), 1.5)]
    assert dataset_negloglik(cs, f, "exp") == pytest.approx(2.0)


def test_grad_wrt_A_examples():
    G = grad_wrt_A(edge_cascade(0.5), A12, "exp")
    assert G[0, 1] == pytest.approx(0.0, abs=1e-12)
    c = CascadeRecord("u", (1.0,), ((0, 0.0),), 1.0)
    assert grad_wrt_A(c, A12, "exp")[0, 1] == pytest.approx(-1.0)
    # node 2 is infected first, so its column-free rows only hold survival terms
    c3 = CascadeRecord("w", (1.0,), ((2, 0.0), (0, 0.3)), 1.0)
    G3 = grad_wrt_A(c3, np.ones((3, 3)) - np.eye(3), "exp")
    assert np.all(G3[:, 2] == 0)


def test_grad_wrt_A_zero_hazard_raises():
    with pytest.raises(NumericalError):
        grad_wrt_A(edge_cascade(0.5), np.zeros((2, 2)), "exp")


@pytest.mark.parametrize("kernel", ["exp", "rayleigh"])
def test_grad_wrt_A_finite_differences(kernel):
    rng = np.random.default_rng(2)
    p = 5
    for c in random_cascades(rng, p, 1, 5):
        A = rng.uniform(0.2, 2, (p, p))
        np.fill_diagonal(A, 0)
        num = central_diff(lambda X: cascade_loglik(c, X, kernel), A)
        assert max_rel_error(grad_wrt_A(c, A, kernel), num) < 1e-5


@pytest.mark.parametrize("kernel", ["exp", "rayleigh"])
def test_grad_wrt_factors_finite_differences(kernel):
    rng = np.random.default_rng(3)
    p, K = 5, 2
    cs = random_cascades(rng, p, K, 8)
    f = random_factors(rng, p, K)
    g1, g2 = grad_wrt_factors(cs, f, kernel)
    n1 = central_diff(lambda X: dataset_negloglik(cs, FactorPair(X, f.B2), kernel), f.B1)
    n2 = central_diff(lambda X: dataset_negloglik(cs, FactorPair(f.B1, X), kernel), f.B2)
    assert max_rel_error(g1, n1) < 1e-5 and max_rel_error(g2, n2) < 1e-5


def test_grad_wrt_factors_with_mask():
    rng = np.random.default_rng(4)
    p, K = 5, 2
    cs = random_cascades(rng, p, K, 8)
    f = random_factors(rng, p, K)
    F = rng.uniform(0.5, 1.5, (p, p))
    g1, g2 = grad_wrt_factors(cs, f, "exp", mask=F)
    n1 = central_diff(lambda X: dataset_negloglik(cs, FactorPair(X, f.B2), "exp", F), f.B1)
    n2 = central_diff(lambda X: dataset_negloglik(cs, FactorPair(f.B1, X), "exp", F), f.B2)
    assert max_rel_error(g1, n1) < 1e-5 and max_rel_error(g2, n2) < 1e-5


def test_grad_at_single_edge_mle_is_zero():
    f = FactorPair(np.array([[1.0], [0.0]]), np.array([[0.0], [2.0]]))
    g1, g2 = grad_wrt_factors([edge_cascade(0.5)], f, "exp")
    assert g1[0, 0] == pytest.approx(0.0, abs=1e-12)
    assert g2[1, 0] == pytest.approx(0.0, abs=1e-12)


def test_grad_wrt_factors_zero_topics():
    rng = np.random.default_rng(5)
    p = 4
    c = CascadeRecord("z", (0.0, 1.0), ((0, 0.0), (1, 0.4)), 1.0)
    f = random_factors(rng, p, 2)
    g1, g2 = grad_wrt_factors([c], f, "exp")
    assert np.all(g1[:, 0] == 0) and np.all(g2[:, 0] == 0)


@pytest.mark.parametrize("kernel", ["exp", "rayleigh"])
def test_grad_wrt_theta_finite_differences(kernel):
    rng = np.random.default_rng(6)
    p, K = 4, 2
    cs = random_cascades(rng, p, K, 8)
    th = rng.uniform(0.2, 1.5, (K, p, p))
    for k in range(K):
        np.fill_diagonal(th[k], 0)
    num = central_diff(lambda X: theta_negloglik(cs, X, kernel), th)
    G = grad_wrt_theta(cs, th, kernel)
    idx = np.arange(p)
    num[:, idx, idx] = 0
    assert max_rel_error(G, num) < 1e-5


def test_grad_wrt_theta_single_topic_is_sum_of_A_gradients():
    rng = np.random.default_rng(7)
    p = 4
    cs = random_cascades(rng, p, 1, 6)
    th = rng.uniform(0.2, 1.5, (1, p, p))
    np.fill_diagonal(th[0], 0)
    expected = -sum(grad_wrt_A(c, th[0], "exp") for c in cs) / len(cs)
    np.fill_diagonal(expected, 0)
    np.testing.assert_allclose(grad_wrt_theta(cs, th, "exp")[0], expected, rtol=1e-12, atol=1e-14)


def test_grad_wrt_theta_unused_topic_zero():
    rng = np.random.default_rng(8)
    cs = [c.with_topics((1.0, 0.0)) for c in random_cascades(rng, 4, 2, 5)]
    th = rng.uniform(0.2, 1.5, (2, 4, 4))
    assert np.all(grad_wrt_theta(cs, th, "exp")[1] == 0)


@pytest.mark.parametrize("kernel", ["exp", "rayleigh"])
def test_grad_wrt_topics_finite_differences(kernel):
    rng = np.random.default_rng(9)
    p, K = 5, 3
    f = random_factors(rng, p, K)
    for c in random_cascades(rng, p, K, 5):
        m = np.asarray(c.topics)
        g = grad_wrt_topics(c, f, kernel)
        num = central_diff(lambda w: -cascade_loglik(c, diffusion_matrix(f, w), kernel), m)
        assert max_rel_error(g, num) < 1e-5


def test_grad_wrt_topics_single_topic():
    rng = np.random.default_rng(10)
    f = random_factors(rng, 4, 1)
    c = random_cascades(rng, 4, 1, 1)[0]
    G = -grad_wrt_A(c, diffusion_matrix(f, [1.0]), "exp")
    th = f.thetas()[0].copy()
    np.fill_diagonal(th, 0)
    assert grad_wrt_topics(c, f, "exp")[0] == pytest.approx(float((G * th).sum()), rel=1e-12)


def test_grad_wrt_topics_zero_at_stationary_point():
    # one edge at its MLE rate 2 with all weight on topic 0; topic 1 carries the same edge
    f = FactorPair(np.array([[1.0, 1.0], [0.0, 0.0]]), np.array([[0.0, 0.0], [2.0, 2.0]]))
    c = edge_cascade(0.5, topics=(0.5, 0.5))
    np.testing.assert_allclose(grad_wrt_topics(c, f, "exp"), 0.0, atol=1e-12)


def test_objective_convex_in_theta():
    rng = np.random.default_rng(11)
    p, K = 4, 2
    cs = random_cascades(rng, p, K, 10)
    for _ in range(20):
        a = rng.uniform(0.1, 2, (K, p, p))
        b = rng.uniform(0.1, 2, (K, p, p))
        lam = rng.uniform(0.05, 0.95)
        lhs = theta_negloglik(cs, lam * a + (1 - lam) * b, "exp")
        rhs = lam * theta_negloglik(cs, a, "exp") + (1 - lam) * theta_negloglik(cs, b, "exp")
        assert lhs <= rhs + 1e-10


@pytest.mark.parametrize("kernel", ["exp", "rayleigh"])
def test_engines_agree_with_reference(kernel):
    rng = np.random.default_rng(12)
    p, K = 6, 2
    cs = random_cascades(rng, p, K, 20)
    f = random_factors(rng, p, K)
    ref = dataset_negloglik(cs, f, kernel)
    M = stack_topics(cs)
    assert FactorEngine(cs, p, kernel, M).value(f.B1, f.B2) == pytest.approx(ref, rel=1e-12)
    th = f.thetas()
    assert ThetaEngine(cs, p, kernel, M).value(th) == pytest.approx(ref, rel=1e-12)


def test_engine_thread_count_bit_identical():
    rng = np.random.default_rng(13)
    p, K = 6, 2
    cs = random_cascades(rng, p, K, 200)
    f = random_factors(rng, p, K)
    M = stack_topics(cs)
    base = FactorEngine(cs, p, "exp", M, 1).value_and_grad(f.B1, f.B2)
    for threads in (2, 3, 8):
        out = FactorEngine(cs, p, "exp", M, threads).value_and_grad(f.B1, f.B2)
        assert out[0] == base[0]
        assert np.array_equal(out[1], base[1]) and np.array_equal(out[2], base[2])
    tb = ThetaEngine(cs, p, "exp", M, 1).value_and_grad(f.thetas())
    for threads in (2, 5):
        to = ThetaEngine(cs, p, "exp", M, threads).value_and_grad(f.thetas())
        assert np.array_equal(to[0], tb[0]) and np.array_equal(to[1], tb[1])


def test_tree_sum_order_fixed():
    vals = [1e16, 1.0, -1e16, 1.0]
    assert tree_sum(vals) == tree_sum(list(vals))
    assert tree_sum([3.0]) == 3.0
