import numpy as np
import pytest
from scipy import stats

from infrec.exceptions import DataError
from infrec.io import dumps_cascades
from infrec.model import FactorPair, ModelDims
from infrec.simulate import (SyntheticConfig, disjoint_receptivity_factors, generate_cascades,
                             generate_dataset, generate_factors, sample_topic_weights, simulate_cascade)


def test_config_validation():
    SyntheticConfig()
    for kw in [dict(n=0), dict(T=0.0), dict(magnitude_low=2.0, magnitude_high=1.0), dict(boost_prob=1.5),
               dict(kernel="nope"), dict(p=1)]:
        with pytest.raises((ValueError, DataError)):
            SyntheticConfig(**kw)


def test_default_window_is_one():
    assert SyntheticConfig().T == 1.0


def test_generate_factors_degenerate_distribution():
    cfg = SyntheticConfig(p=6, K=3, boost_prob=0.0, magnitude_low=1.0, magnitude_high=1.0,
                          topics_per_node=(3, 3), seed=1)
    f = generate_factors(cfg)
    # every entry selected with magnitude 1, so balancing leaves them at 1
    np.testing.assert_allclose(f.B1, 1.0)
    np.testing.assert_allclose(f.B2, 1.0)


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_generate_factors_column_sums_equal(seed):
    f = generate_factors(SyntheticConfig(p=20, K=3, seed=seed))
    np.testing.assert_allclose(f.B1.sum(axis=0), f.B2.sum(axis=0), rtol=0, atol=1e-9)


def test_generate_factors_structure():
    f = generate_factors(SyntheticConfig(p=30, K=4, seed=5))
    nnz_rows = np.count_nonzero(f.B1, axis=1)
    assert np.all((nnz_rows >= 2) & (nnz_rows <= 3))
    sparse = generate_factors(SyntheticConfig(p=30, K=4, sparsity=5, seed=5))
    assert np.all(np.count_nonzero(sparse.B1, axis=0) == 5)


def test_generate_factors_deterministic():
    a = generate_factors(SyntheticConfig(seed=9))
    b = generate_factors(SyntheticConfig(seed=9))
    assert a.B1.tobytes() == b.B1.tobytes() and a.B2.tobytes() == b.B2.tobytes()


def test_topic_weights_single_support():
    f = FactorPair(np.array([[2.0, 0.0, 0.0], [1.0, 1.0, 1.0]]), np.ones((2, 3)))
    w = sample_topic_weights(f, 0, np.random.default_rng(0))
    np.testing.assert_array_equal(w, [1.0, 0.0, 0.0])


def test_topic_weights_dirichlet_mean():
    row = np.array([0.5, 1.5, 2.0])
    f = FactorPair(np.vstack([row, row]), np.ones((2, 3)))
    rng = np.random.default_rng(1)
    draws = np.array([sample_topic_weights(f, 0, rng) for _ in range(100_000)])
    np.testing.assert_allclose(draws.mean(axis=0), row / row.sum(), atol=0.01)
    assert np.all(draws >= 0)
    np.testing.assert_allclose(draws.sum(axis=1), 1.0, atol=1e-12)


def test_topic_weights_rejects_zero_row():
    f = FactorPair(np.array([[0.0, 0.0], [1.0, 1.0]]), np.ones((2, 2)))
    with pytest.raises(DataError):
        sample_topic_weights(f, 0, np.random.default_rng(0))


def test_simulate_zero_matrix():
    ev = simulate_cascade(np.zeros((4, 4)), "exp", 1.0, 2, np.random.default_rng(0))
    assert ev == [(2, 0.0)]


def test_simulate_tiny_window():
    A = np.full((3, 3), 5.0)
    ev = simulate_cascade(A, "exp", 1e-300, 0, np.random.default_rng(0))
    assert ev == [(0, 0.0)]


def test_simulate_infection_frequency():
    A = np.array([[0.0, 2.0], [0.0, 0.0]])
    rng = np.random.default_rng(2)
    hits = sum(len(simulate_cascade(A, "exp", 1.0, 0, rng)) == 2 for _ in range(10_000))
    assert abs(hits / 10_000 - (1 - np.exp(-2))) < 0.01


@pytest.mark.parametrize("kernel", ["exp", "rayleigh"])
def test_simulated_edge_delays_match_kernel(kernel):
    from infrec.kernels import get_kernel

    A = np.array([[0.0, 1.3], [0.0, 0.0]])
    rng = np.random.default_rng(3)
    d = np.array([simulate_cascade(A, kernel, 1e9, 0, rng)[1][1] for _ in range(20_000)])
    k = get_kernel(kernel)
    ks = stats.kstest(d, lambda x: 1 - k.survival(np.maximum(x, 0), 1.3)).statistic
    assert ks < 0.02


def test_first_infection_property():
    truth, cascades = generate_dataset(SyntheticConfig(p=15, K=3, n=200, seed=4))
    for c in cascades:
        nodes = [v for v, _ in c.events]
        assert len(set(nodes)) == len(nodes)
        t = c.times()
        assert t[0] == 0 and np.all(t[1:] > 0) and np.all(t <= c.window)
        assert np.all(np.diff(t) >= 0)
        assert truth.B1[c.source].sum() > 0


def test_dataset_deterministic_bytes():
    cfg = SyntheticConfig(p=10, K=2, n=50, seed=6)
    a, b = generate_dataset(cfg), generate_dataset(cfg)
    assert dumps_cascades(a[1]) == dumps_cascades(b[1])


def test_cascade_streams_independent_of_batch():
    truth = generate_factors(SyntheticConfig(p=10, K=2, seed=7))
    whole = generate_cascades(truth, 20, seed=7)
    tail = generate_cascades(truth, 10, seed=7, start=10)
    assert dumps_cascades(whole[10:]) == dumps_cascades(tail)


def test_generate_rejects_zero_n():
    truth = generate_factors(SyntheticConfig(p=10, K=2))
    with pytest.raises(ValueError):
        generate_cascades(truth, 0)


def test_size_grows_with_magnitude():
    sizes = []
    for hi in (1.0, 1.8, 3.0):
        _, cs = generate_dataset(SyntheticConfig(p=20, K=3, n=400, magnitude_low=0.5, magnitude_high=hi, seed=8))
        sizes.append(np.mean([c.size for c in cs]))
    assert sizes[0] < sizes[1] < sizes[2]


def test_fixed_topics_and_disjoint_fixture():
    f = disjoint_receptivity_factors(9, 3, seed=1)
    groups = np.array_split(np.arange(9), 3)
    for k, g in enumerate(groups):
        assert np.all(f.B2[g, k] > 0)
        assert np.count_nonzero(f.B2[g]) == g.size
    M = np.eye(3)[[0, 1, 2, 0]]
    cs = generate_cascades(f, 4, seed=2, topics=M)
    for c, m in zip(cs, M):
        assert c.topics == tuple(m)
        k = int(np.argmax(m))
        # every infected node other than the source is receptive to the cascade's topic
        assert all(v in groups[k] for v, _ in c.events[1:])
    with pytest.raises(ValueError):
        generate_cascades(f, 3, topics=M)
