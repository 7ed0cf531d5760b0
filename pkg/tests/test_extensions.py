import numpy as np
import pytest

from infrec.estimation import EstimationConfig, _run, initialize
from infrec.exceptions import DataError, InfrecError
from infrec.extensions import (estimate_numeric_friendship, estimate_unknown_topics, estimate_with_mask,
                               infer_topics, infer_topics_batch, match_topics, project_simplex_rows)
from infrec.likelihood import dataset_negloglik
from infrec.model import CascadeRecord, FactorPair, ModelDims, diffusion_matrix, project_simplex
from infrec.simulate import disjoint_receptivity_factors, generate_cascades

CFG = EstimationConfig(max_iters=60, init_iters=40, step_growth=1.5)


@pytest.fixture(scope="module")
def disjoint():
    truth = disjoint_receptivity_factors(12, 2, seed=3)
    M = np.eye(2)[np.random.default_rng(0).integers(0, 2, 60)]
    cs = generate_cascades(truth, 60, seed=4, topics=M)
    return truth, M, cs


def test_project_simplex_rows_matches_vector_version():
    rng = np.random.default_rng(0)
    V = rng.normal(size=(20, 4))
    P = project_simplex_rows(V)
    for v, w in zip(V, P):
        np.testing.assert_allclose(w, project_simplex(v), atol=1e-12)


def test_mask_all_ones_identical_to_plain(small_data):
    truth, cs = small_data
    p = truth.p
    init = initialize(cs, ModelDims(p, 2), "exp", config=CFG)
    a, ta = _run(cs, CFG, init, "exp")
    b, tb = estimate_with_mask(cs, np.ones((p, p)), CFG, 2, init=init)
    assert ta.objective == tb.objective
    assert np.array_equal(a.B1, b.B1) and np.array_equal(a.B2, b.B2)
    c, _ = estimate_with_mask(cs, np.ones((p, p)), CFG, 2)
    assert np.array_equal(a.B1, c.B1)


def test_mask_zeroes_entries(small_data):
    truth, cs = small_data
    p = truth.p
    F = np.ones((p, p))
    F[0, :] = 0
    F[0, 0] = 1
    # keep every observed infection possible: node 0 must not be the only infector of anyone
    cs = [c for c in cs if all(any(v != 0 for v, t in c.events if t < ti) for _, ti in c.events[1:])]
    f, tr = estimate_with_mask(cs, F, CFG, 2)
    A = diffusion_matrix(f, [0.5, 0.5], F)
    assert np.all(A[0] == 0)
    assert np.all(np.diff(tr.objective) <= 0)


def test_mask_removing_only_edge_leaves_product_at_init(single_edge):
    F = np.zeros((2, 2))
    F[1, 0] = 1.0
    init = FactorPair(np.array([[0.5], [0.3]]), np.array([[0.2], [0.9]]))
    # the edge 0 -> 1 is masked out, so the observed infection becomes impossible
    with pytest.raises(Exception):
        estimate_with_mask(single_edge, F, CFG, 1, init=init)
    # with an uninfected second node the masked pair carries no data and keeps its init value
    cs = [CascadeRecord("u", (1.0,), ((0, 0.0),), 1.0)]
    f, _ = estimate_with_mask(cs, F, EstimationConfig(max_iters=200), 1, init=init, p=2)
    assert f.B1[0, 0] * f.B2[1, 0] == pytest.approx(0.5 * 0.9)


def test_mask_rejects_empty(small_data):
    truth, cs = small_data
    with pytest.raises(DataError):
        estimate_with_mask(cs, np.zeros((truth.p, truth.p)), CFG, 2)


def test_infer_topics_single_topic(small_data):
    truth, cs = small_data
    f = FactorPair(truth.B1[:, :1], truth.B2[:, :1])
    c = CascadeRecord(cs[0].id, None, cs[0].events, cs[0].window)
    np.testing.assert_array_equal(infer_topics(c, f), [1.0])


def test_infer_topics_disjoint_recovers_vertices(disjoint):
    truth, M, cs = disjoint
    raw = [CascadeRecord(c.id, None, c.events, c.window) for c in cs]
    Mh = infer_topics_batch(raw, truth)
    informative = np.array([c.size > 1 for c in cs])
    assert np.abs(Mh - M).sum(axis=1)[informative].max() < 0.05
    np.testing.assert_allclose(Mh.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(Mh >= 0)


def test_infer_topics_restarts_agree(small_data):
    truth, cs = small_data
    for c in cs[:10]:
        a = infer_topics(c, truth, start=[0.9, 0.1], tol=1e-12, max_iters=5000)
        b = infer_topics(c, truth, start=[0.1, 0.9], tol=1e-12, max_iters=5000)
        assert np.abs(a - b).sum() < 1e-4


def test_infer_topics_flat_cascade_warns(caplog):
    f = FactorPair(np.ones((3, 2)), np.ones((3, 2)))
    c = CascadeRecord("s", None, ((0, 0.0),), 1.0)
    w = infer_topics(c, f)
    np.testing.assert_allclose(w, [0.5, 0.5])
    assert "no topic information" in caplog.text


def test_match_topics():
    rng = np.random.default_rng(1)
    B = rng.random((10, 3))
    perm = np.array([2, 0, 1])
    hat = np.empty_like(B)
    hat[:, perm] = B
    np.testing.assert_array_equal(match_topics(hat, B), perm)
    np.testing.assert_array_equal(match_topics(FactorPair(hat, hat), FactorPair(B, B)), perm)


def test_unknown_topics_single_topic(small_data):
    truth, cs = small_data
    raw = [CascadeRecord(c.id, None, c.events, c.window) for c in cs]
    B, M, tr = estimate_unknown_topics(raw, 1, CFG, outer_iters=5)
    assert tr.n_outer == 1 and np.all(M == 1)
    ref, _ = _run([c.with_topics((1.0,)) for c in raw], CFG,
                  initialize([c.with_topics((1.0,)) for c in raw], ModelDims(truth.p, 1), "exp", config=CFG), "exp")
    assert np.array_equal(B.B1, ref.B1)


def test_unknown_topics_monotone_and_recovers(disjoint):
    truth, M, cs = disjoint
    raw = [CascadeRecord(c.id, None, c.events, c.window) for c in cs]
    B, Mh, tr = estimate_unknown_topics(raw, 2, EstimationConfig(max_iters=100, init_iters=50, step_growth=1.5),
                                        outer_iters=5)
    assert np.all(np.diff(tr.objective) <= 1e-12)
    perm = match_topics(B, truth)
    informative = np.array([c.size > 1 for c in cs])
    assert np.abs(Mh[:, perm] - M).sum(axis=1)[informative].mean() < 0.15
    np.testing.assert_allclose(Mh.sum(axis=1), 1.0, atol=1e-12)


def test_numeric_friendship_reduces_to_mask(small_data):
    truth, cs = small_data
    p = truth.p
    S = np.ones((p, p))
    init = initialize(cs, ModelDims(p, 2), "exp", config=CFG)
    B, F, tr = estimate_numeric_friendship(cs, S, 2, CFG, outer_iters=1, f_step=False, init=init)
    ref, _ = estimate_with_mask(cs, S, CFG, 2, init=init)
    assert np.array_equal(B.B1, ref.B1) and np.array_equal(B.B2, ref.B2)
    assert np.all(F[~np.eye(p, dtype=bool)] == 1)


def test_numeric_friendship_support_and_monotone(small_data):
    truth, cs = small_data
    p = truth.p
    rng = np.random.default_rng(2)
    S = (rng.random((p, p)) < 0.8).astype(float)
    # keep every infection possible under the support
    keep = []
    for c in cs:
        ok = all(any(S[j, i] > 0 for j, tj in c.events if tj < ti) for i, ti in c.events[1:])
        if ok:
            keep.append(c)
    B, F, tr = estimate_numeric_friendship(keep, S, 2, CFG, outer_iters=3, f_iters=30, p=p)
    off = (S == 0) | np.eye(p, dtype=bool)
    assert np.all(F[off] == 0)
    assert np.all(np.diff(tr.objective) <= 1e-12)


def test_numeric_friendship_scale_ambiguity(small_data):
    truth, cs = small_data
    p = truth.p
    rng = np.random.default_rng(3)
    F = rng.uniform(0.5, 1.5, (p, p))
    np.fill_diagonal(F, 0)
    base = dataset_negloglik(cs, truth, "exp", F)
    # scaling every column of B1 by g and F by 1/g leaves every A^c unchanged
    g = 2.5
    scaled = dataset_negloglik(cs, FactorPair(truth.B1 * g, truth.B2), "exp", F / g)
    assert scaled == pytest.approx(base, rel=1e-12)
