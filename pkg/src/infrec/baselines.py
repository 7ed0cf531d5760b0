"""Unstructured reference estimators.

``NetRate`` fits one diffusion matrix shared by all cascades with an ``l1``
penalty. ``TopicCascade`` fits one matrix per topic, mixes them with the
cascade's topic weights and penalizes each edge's vector of per-topic rates
with a group-lasso term. Both objectives split over destination columns and
are solved column by column with proximal gradient steps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator

from ._engine import ThetaEngine
from ._theta_solver import solve_theta
from ._validation import check_cascades, num_nodes
from .exceptions import InfrecError
from .kernels import get_kernel
from .likelihood import cascade_loglik
from .model import stack_topics

__all__ = ["NetRateModel", "TopicCascadeModel", "fit_netrate", "fit_topiccascade",
           "NetRate", "TopicCascade"]


@dataclass(frozen=True)
class NetRateModel:
    A: np.ndarray
    n_iter: int = 0
    converged: bool = True

    def diffusion_matrix(self, topics=None) -> np.ndarray:
        return self.A


@dataclass(frozen=True)
class TopicCascadeModel:
    A_stack: np.ndarray  # (K, p, p)
    n_iter: int = 0
    converged: bool = True

    def diffusion_matrix(self, topics) -> np.ndarray:
        return np.tensordot(np.asarray(topics, dtype=float), self.A_stack, axes=1)


def fit_netrate(cascades, kernel="exp", lam: float = 0.0, tol: float = 1e-6, max_iters: int = 2000,
                p: Optional[int] = None, threads: int = 1, columns=None) -> NetRateModel:
    """``l1``-penalized maximum likelihood for a single diffusion matrix."""
    cascades = check_cascades(cascades, p, None, need_topics=False)
    p = num_nodes(cascades, p)
    ones = np.ones((len(cascades), 1))
    eng = ThetaEngine(cascades, p, get_kernel(kernel), ones, threads)
    res = solve_theta(eng, lam=lam, penalty="l1", tol=tol, max_iters=max_iters, columns=columns)
    return NetRateModel(res.theta[0], res.n_iter, bool(res.converged.all()))


def fit_topiccascade(cascades, K: int, kernel="exp", lam: float = 0.0, tol: float = 1e-6,
                     max_iters: int = 2000, p: Optional[int] = None, threads: int = 1) -> TopicCascadeModel:
    """Group-lasso maximum likelihood for ``K`` per-topic diffusion matrices."""
    cascades = check_cascades(cascades, p, K, need_topics=True)
    p = num_nodes(cascades, p)
    eng = ThetaEngine(cascades, p, get_kernel(kernel), stack_topics(cascades, K), threads)
    res = solve_theta(eng, lam=lam, penalty="group", tol=tol, max_iters=max_iters)
    return TopicCascadeModel(res.theta, res.n_iter, bool(res.converged.all()))


class _Baseline(BaseEstimator):

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise InfrecError("estimator is not fitted yet; call fit first")

    def score_samples(self, X) -> np.ndarray:
        """Per-cascade log-likelihood."""
        self._check_fitted()
        cascades = check_cascades(X, self.n_nodes_, None, need_topics=self._needs_topics)
        return np.array([cascade_loglik(c, self.model_.diffusion_matrix(c.topics), self.kernel)
                         for c in cascades])

    def score(self, X, y=None) -> float:
        vals = self.score_samples(X)
        return float(np.mean(vals)) if np.all(np.isfinite(vals)) else -math.inf

    @property
    def n_nonzero_(self) -> int:
        self._check_fitted()
        return int(np.count_nonzero(self.topic_matrices()))


class NetRate(_Baseline):
    """Sparse single-matrix cascade model.

    Parameters
    ----------
    kernel : {'exp', 'rayleigh'}
    lam : float
        ``l1`` penalty weight.
    """

    _needs_topics = False

    def __init__(self, kernel="exp", lam=0.0, tol=1e-6, max_iters=2000, n_nodes=None, threads=1):
        self.kernel = kernel
        self.lam = lam
        self.tol = tol
        self.max_iters = max_iters
        self.n_nodes = n_nodes
        self.threads = threads

    def fit(self, X, y=None):
        cascades = check_cascades(X, self.n_nodes, None, need_topics=False)
        self.n_nodes_ = num_nodes(cascades, self.n_nodes)
        self.model_ = fit_netrate(cascades, self.kernel, self.lam, self.tol, self.max_iters,
                                  self.n_nodes_, self.threads)
        self.A_ = self.model_.A
        return self

    def topic_matrices(self, K: int = 1) -> np.ndarray:
        """The shared matrix repeated for each of ``K`` topics."""
        self._check_fitted()
        return np.repeat(self.A_[None], K, axis=0)


class TopicCascade(_Baseline):
    """Per-topic cascade model with a group-lasso penalty across topics.

    Parameters
    ----------
    n_topics : int
    kernel : {'exp', 'rayleigh'}
    lam : float
        Group penalty weight.
    """

    _needs_topics = True

    def __init__(self, n_topics=3, kernel="exp", lam=0.0, tol=1e-6, max_iters=2000, n_nodes=None,
                 threads=1):
        self.n_topics = n_topics
        self.kernel = kernel
        self.lam = lam
        self.tol = tol
        self.max_iters = max_iters
        self.n_nodes = n_nodes
        self.threads = threads

    def fit(self, X, y=None):
        cascades = check_cascades(X, self.n_nodes, self.n_topics, need_topics=True)
        self.n_nodes_ = num_nodes(cascades, self.n_nodes)
        self.model_ = fit_topiccascade(cascades, self.n_topics, self.kernel, self.lam, self.tol,
                                       self.max_iters, self.n_nodes_, self.threads)
        self.A_stack_ = self.model_.A_stack
        return self

    def topic_matrices(self) -> np.ndarray:
        self._check_fitted()
        return self.A_stack_
