"""Cascade log-likelihood and its analytic gradients.

The dense, per-cascade functions here (``cascade_loglik``, ``grad_wrt_A``,
``dataset_negloglik``) follow the likelihood term by term and serve as the
reference. The dataset-level gradients are computed by the vectorized
engines in :mod:`infrec._engine`.
"""
from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from ._engine import TINY_RATE, FactorEngine, ThetaEngine, tree_sum
from .exceptions import DataError, NumericalError, ShapeError
from .kernels import get_kernel
from .model import CascadeRecord, FactorPair, diffusion_matrix, stack_topics

__all__ = [
    "cascade_loglik",
    "node_terms",
    "dataset_negloglik",
    "grad_wrt_A",
    "grad_wrt_factors",
    "grad_wrt_theta",
    "grad_wrt_topics",
    "theta_negloglik",
]


def _log_sum(x: np.ndarray) -> float:
    """``log(sum(x))`` for nonnegative ``x``, factoring out the maximum."""
    m = x.max()
    if m < TINY_RATE or x.sum() < TINY_RATE:
        return -math.inf
    return math.log(m) + math.log(np.sum(x / m))


def _pieces(cascade: CascadeRecord, A: np.ndarray):
    A = np.asarray(A, dtype=float)
    p = A.shape[0]
    if A.shape != (p, p):
        raise ShapeError(f"diffusion matrix must be square, got {A.shape}")
    cascade.validate(p=p)
    v, t = cascade.nodes(), cascade.times()
    tau = t[None, :] - t[:, None]  # tau[b, a] = t_a - t_b
    prior = tau > 0
    unf = np.ones(p, dtype=bool)
    unf[v] = False
    return A, v, t, tau, prior, np.flatnonzero(unf)


def node_terms(cascade: CascadeRecord, A, kernel) -> np.ndarray:
    """Per-node log-likelihood contributions (length ``p``).

    Infected node ``i``: ``sum_{j: t_j < t_i} log S + log sum_j H``;
    uninfected node ``m``: ``sum_{i infected} log S(T | t_i; a_im)``.
    The source contributes 0.
    """
    kernel = get_kernel(kernel)
    A, v, t, tau, prior, unf = _pieces(cascade, A)
    out = np.zeros(A.shape[0])
    Asub = A[np.ix_(v, v)]
    tau0 = np.where(prior, tau, 0.0)
    logS = np.where(prior, kernel.log_survival(tau0, Asub), 0.0)
    haz = np.where(prior, kernel.hazard(tau0, Asub), 0.0)
    for a in range(1, v.size):
        out[v[a]] = logS[:, a].sum() + _log_sum(haz[:, a])
    if unf.size:
        tau_u = cascade.window - t
        out[unf] = kernel.log_survival(tau_u[:, None], A[np.ix_(v, unf)]).sum(axis=0)
    return out


def cascade_loglik(cascade: CascadeRecord, A, kernel) -> float:
    """Log-likelihood of one cascade under diffusion matrix ``A``.

    Returns ``-inf`` when an infected non-source node has a vanishing hazard
    sum (the observation is impossible under ``A``).
    """
    terms = node_terms(cascade, A, kernel)
    if np.any(np.isneginf(terms)):
        return -math.inf
    return float(terms.sum())


def dataset_negloglik(cascades: Sequence[CascadeRecord], factors: FactorPair, kernel,
                      mask=None) -> float:
    """Average negative log-likelihood ``-(1/n) sum_c log l(t^c; A^c)``."""
    if len(cascades) == 0:
        raise DataError("empty dataset")
    vals = [cascade_loglik(c, diffusion_matrix(factors, c.topics, mask), kernel) for c in cascades]
    total = tree_sum(vals)
    return math.inf if math.isinf(total) else -total / len(cascades)


def theta_negloglik(cascades: Sequence[CascadeRecord], thetas, kernel, mask=None) -> float:
    """Reference objective ``f(Theta)`` with ``A^c = sum_k m_k^c Theta_k``."""
    thetas = np.asarray(thetas, dtype=float)
    vals = []
    for c in cascades:
        A = np.tensordot(np.asarray(c.topics), thetas, axes=1)
        if mask is not None:
            A = A * mask
        np.fill_diagonal(A, 0.0)
        vals.append(cascade_loglik(c, A, kernel))
    total = tree_sum(vals)
    return math.inf if math.isinf(total) else -total / len(cascades)


def grad_wrt_A(cascade: CascadeRecord, A, kernel) -> np.ndarray:
    """Gradient of ``cascade_loglik`` with respect to ``A`` (``p x p``)."""
    kernel = get_kernel(kernel)
    A, v, t, tau, prior, unf = _pieces(cascade, A)
    G = np.zeros_like(A)
    tau0 = np.where(prior, tau, 0.0)
    hcoef = np.where(prior, kernel.h(tau0), 0.0)
    psi = np.where(prior, kernel.psi(tau0), 0.0)
    Asub = A[np.ix_(v, v)]
    for a in range(1, v.size):
        total = float(np.dot(Asub[:, a], hcoef[:, a]))
        if total < TINY_RATE:
            raise NumericalError(f"cascade {cascade.id!r}: hazard sum is zero for node {v[a]}")
        G[v, v[a]] = np.where(prior[:, a], hcoef[:, a] / total - psi[:, a], 0.0)
    if unf.size:
        G[np.ix_(v, unf)] = -kernel.psi(cascade.window - t)[:, None]
    return G


def grad_wrt_factors(cascades: Sequence[CascadeRecord], factors: FactorPair, kernel, mask=None):
    """Gradient of ``dataset_negloglik`` with respect to ``(B1, B2)``."""
    kernel = get_kernel(kernel)
    M = stack_topics(cascades, factors.K)
    if mask is None:
        eng = FactorEngine(cascades, factors.p, kernel, M)
        _, g1, g2 = eng.value_and_grad(factors.B1, factors.B2)
        return g1, g2
    eng = ThetaEngine(cascades, factors.p, kernel, M)
    _, G, _ = eng.value_and_grad(factors.thetas(), np.asarray(mask, dtype=float))
    g1 = np.einsum("kji,ik->jk", G, factors.B2)
    g2 = np.einsum("kji,jk->ik", G, factors.B1)
    return g1, g2


def grad_wrt_theta(cascades: Sequence[CascadeRecord], thetas, kernel, mask=None) -> np.ndarray:
    """Gradient of ``f(Theta)`` as a ``(K, p, p)`` array (zero diagonals)."""
    kernel = get_kernel(kernel)
    thetas = np.asarray(thetas, dtype=float)
    K, p, _ = thetas.shape
    eng = ThetaEngine(cascades, p, kernel, stack_topics(cascades, K))
    _, G, _ = eng.value_and_grad(thetas, None if mask is None else np.asarray(mask, dtype=float))
    idx = np.arange(p)
    G[:, idx, idx] = 0.0
    return G


def grad_wrt_topics(cascade: CascadeRecord, factors: FactorPair, kernel, topics=None) -> np.ndarray:
    """Gradient of ``-loglik`` of one cascade with respect to its topic weights."""
    kernel = get_kernel(kernel)
    m = np.asarray(cascade.topics if topics is None else topics, dtype=float)
    if m.shape != (factors.K,):
        raise ShapeError(f"expected {factors.K} topic weights")
    eng = FactorEngine([cascade], factors.p, kernel)
    lin, Q, _ = eng.topic_design(factors.B1, factors.B2)
    R = Q @ m
    if np.any(R < TINY_RATE):
        raise NumericalError(f"cascade {cascade.id!r}: hazard sum is zero")
    return lin[0] - (Q / R[:, None]).sum(axis=0)
