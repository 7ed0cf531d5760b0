"""Estimation of the influence and receptivity factors.

Two first-order schemes are provided, both started from a spectral
initializer:

* ``prox``: proximal gradient on ``f + lam * sum(B1 + B2)``
  (soft-threshold then clamp).
* ``hard``: gradient step on ``f + lam * g2`` followed by clamping and
  hard thresholding each factor to ``s`` entries, where
  ``g2 = 1/4 sum_k (|b1_k|^2 - |b2_k|^2)^2``.

Both update ``B1`` and ``B2`` simultaneously from the same iterate. The step
starts at ``1 / (8 |B0|_2^2)`` and is halved whenever the recorded objective
would increase; ``step_growth > 1`` lets it grow again after accepted steps.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np
from sklearn.base import BaseEstimator, clone

from ._engine import FactorEngine, ThetaEngine
from ._theta_solver import solve_theta
from ._validation import check_cascades, check_factors_like, num_nodes
from .exceptions import DataError, InfrecError, NumericalError
from .kernels import get_kernel
from .model import (CascadeRecord, FactorPair, ModelDims, check_mask, diffusion_matrix,
                    hard_threshold, stack_topics, subspace_distance, topic_matrices)

__all__ = [
    "EstimationConfig",
    "EstimationTrace",
    "regularizer_g1",
    "regularizer_g2",
    "power_iteration",
    "initialize",
    "auto_step_size",
    "estimate_prox_g1",
    "estimate_hard_g2",
    "cross_validate",
    "InfluenceReceptivity",
]

log = logging.getLogger(__name__)

ALGORITHMS = ("prox", "hard")
MAX_HALVINGS = 30


@dataclass
class EstimationConfig:
    algorithm: str = "prox"
    lam: float = 0.0
    s: Optional[int] = None
    eta: Union[float, str] = "auto"
    tol: float = 1e-6
    max_iters: int = 1000
    init_iters: int = 300
    init_tol: float = 1e-6
    per_column: bool = False
    step_growth: float = 1.0
    threads: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not self.lam >= 0:
            raise ValueError("lam must be >= 0")
        if self.eta != "auto" and not (isinstance(self.eta, (int, float)) and self.eta > 0):
            raise ValueError("eta must be 'auto' or a positive number")
        if not (self.tol > 0 and self.init_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iters < 0 or self.init_iters < 0:
            raise ValueError("iteration caps must be >= 0")
        if self.s is not None and self.s < 1:
            raise ValueError("s must be >= 1")
        if not self.step_growth >= 1:
            raise ValueError("step_growth must be >= 1")
        if self.algorithm == "hard" and self.s is None:
            raise ValueError("the hard-thresholding algorithm needs s")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EstimationTrace:
    """One record per completed iteration (record 0 is the initial point)."""

    objective: List[float] = field(default_factory=list)
    step: List[float] = field(default_factory=list)
    d2: List[float] = field(default_factory=list)
    balance_gap: List[float] = field(default_factory=list)
    converged: bool = False
    n_iter: int = 0
    stop_reason: str = ""

    def append(self, objective, step, d2, gap):
        self.objective.append(float(objective))
        self.step.append(float(step))
        self.d2.append(float("nan") if d2 is None else float(d2))
        self.balance_gap.append(float(gap))

    def rows(self):
        return [(i, self.objective[i], self.step[i], self.d2[i], self.balance_gap[i])
                for i in range(len(self.objective))]

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("iter,objective,step,d2,balance_gap\n")
            for i, f, e, d, g in self.rows():
                fh.write(f"{i},{f:.17g},{e:.17g},{d:.17g},{g:.17g}\n")


# --------------------------------------------------------------------------
# regularizers
# --------------------------------------------------------------------------

def regularizer_g1(factors: FactorPair) -> float:
    """Entrywise sum ``|B1 + B2|_{1,1}`` of nonnegative factors."""
    return float(factors.B1.sum() + factors.B2.sum())


def regularizer_g2(factors: FactorPair):
    """Column-imbalance penalty and its gradient ``(value, dB1, dB2)``."""
    n1 = (factors.B1 ** 2).sum(axis=0)
    n2 = (factors.B2 ** 2).sum(axis=0)
    delta = n1 - n2
    return 0.25 * float((delta ** 2).sum()), factors.B1 * delta, -factors.B2 * delta


def balance_gap(factors: FactorPair, norm: str) -> float:
    """Largest relative gap between matching column norms of ``B1`` and ``B2``."""
    if norm == "l1":
        a, b = factors.B1.sum(axis=0), factors.B2.sum(axis=0)
    else:
        a, b = np.linalg.norm(factors.B1, axis=0), np.linalg.norm(factors.B2, axis=0)
    scale = np.maximum(a, b)
    live = scale > 0
    if not live.any():
        return 0.0
    return float(np.max(np.abs(a[live] - b[live]) / scale[live]))


# --------------------------------------------------------------------------
# initialization
# --------------------------------------------------------------------------

def power_iteration(M, tol: float = 1e-10, max_iter: int = 1000):
    """Leading singular triple ``(sigma, u, v)`` via power iteration on ``M^T M``."""
    M = np.asarray(M, dtype=float)
    G = M.T @ M
    v = np.ones(M.shape[1]) / math.sqrt(M.shape[1])
    for _ in range(max_iter):
        w = G @ v
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0, np.zeros(M.shape[0]), np.zeros(M.shape[1])
        w /= nw
        done = np.linalg.norm(w - v) < tol
        v = w
        if done:
            break
    Mv = M @ v
    sigma = float(np.linalg.norm(Mv))
    if sigma == 0:
        return 0.0, np.zeros(M.shape[0]), v
    return sigma, Mv / sigma, v


def rank_one_factors(thetas, s: Optional[int] = None, per_column: bool = False,
                     tol: float = 1e-10, max_iter: int = 1000) -> FactorPair:
    """Columns ``u_k sigma_k^(1/2)``, ``v_k sigma_k^(1/2)`` of each ``Theta_k``."""
    thetas = np.asarray(thetas, dtype=float)
    K, p, _ = thetas.shape
    B1, B2 = np.zeros((p, K)), np.zeros((p, K))
    for k in range(K):
        sigma, u, v = power_iteration(thetas[k], tol, max_iter)
        if sigma == 0:
            log.warning("topic %d: zero matrix at initialization, columns left at 0", k)
            continue
        if u.sum() < 0:
            u, v = -u, -v
        root = math.sqrt(sigma)
        B1[:, k] = np.maximum(u, 0.0) * root
        B2[:, k] = np.maximum(v, 0.0) * root
    if s is not None:
        B1, B2 = hard_threshold(B1, s, per_column), hard_threshold(B2, s, per_column)
    return FactorPair(B1, B2)


def fit_theta(cascades, p: int, K: int, kernel, iters: int = 300, tol: float = 1e-6,
              threads: int = 1, lam: float = 0.0, penalty: str = "none", mask=None):
    """Projected-gradient estimate of the rank-free ``Theta`` stack."""
    engine = ThetaEngine(cascades, p, get_kernel(kernel), stack_topics(cascades, K), threads)
    return solve_theta(engine, lam=lam, penalty=penalty, F=mask, tol=tol, max_iters=iters)


def initialize(cascades: Sequence[CascadeRecord], dims: ModelDims, kernel, s: Optional[int] = None,
               config: Optional[EstimationConfig] = None, mask=None) -> FactorPair:
    """Spectral initializer: rank-free fit of ``Theta`` then leading rank-one factors."""
    config = config or EstimationConfig()
    mask = check_mask(mask, dims.p, drop_identity=True)
    res = fit_theta(cascades, dims.p, dims.K, kernel, config.init_iters, config.init_tol,
                    config.threads, mask=mask)
    return rank_one_factors(res.theta, s, config.per_column)


def auto_step_size(factors_init: FactorPair) -> float:
    """``1 / (8 |[B1, B2]|_2^2)``."""
    norm = np.linalg.norm(factors_init.stacked, 2)
    if norm == 0:
        raise NumericalError("initial factors are zero; cannot choose a step size")
    return 1.0 / (8.0 * norm ** 2)


# --------------------------------------------------------------------------
# main loops
# --------------------------------------------------------------------------

class _Objective:
    """Data term ``f`` in ``(B1, B2)``, evaluated through either engine."""

    def __init__(self, cascades, p, K, kernel, mask=None, threads=1):
        M = stack_topics(cascades, K)
        self.mask = mask
        if mask is None:
            self.engine = FactorEngine(cascades, p, kernel, M, threads)
        else:
            self.engine = ThetaEngine(cascades, p, kernel, M, threads)

    def value(self, B1, B2) -> float:
        if self.mask is None:
            return self.engine.value(B1, B2)
        return self.engine.value(np.einsum("jk,ik->kji", B1, B2), self.mask)

    def value_and_grad(self, B1, B2):
        if self.mask is None:
            return self.engine.value_and_grad(B1, B2)
        colv, G, _ = self.engine.value_and_grad(np.einsum("jk,ik->kji", B1, B2), self.mask)
        return (float(colv.sum()), np.einsum("kji,ik->jk", G, B2), np.einsum("kji,jk->ik", G, B1))


def _run(cascades, config: EstimationConfig, init: FactorPair, kernel, truth=None, mask=None,
         objective: Optional[_Objective] = None):
    kernel = get_kernel(kernel)
    p, K = init.p, init.K
    if truth is not None and (truth.p, truth.K) != (p, K):
        raise DataError("truth factors do not match the initial factors' shape")
    mask = check_mask(mask, p, drop_identity=True)
    obj = objective or _Objective(cascades, p, K, kernel, mask, config.threads)
    lam, hard = config.lam, config.algorithm == "hard"
    norm = "l2" if hard else "l1"

    def full(F1, F2, f):
        if hard:
            return f + lam * regularizer_g2(FactorPair(F1, F2))[0]
        return f + lam * (F1.sum() + F2.sum())

    B1, B2 = np.array(init.B1), np.array(init.B2)
    if hard:
        B1 = hard_threshold(B1, config.s, config.per_column)
        B2 = hard_threshold(B2, config.s, config.per_column)
    eta = auto_step_size(FactorPair(B1, B2)) if config.eta == "auto" else float(config.eta)

    hint = f" (hard-thresholding to s={config.s} may be too aggressive)" if hard else ""
    try:
        f, g1, g2 = obj.value_and_grad(B1, B2)
    except NumericalError as exc:
        raise NumericalError(f"infeasible initial factors: {exc}{hint}") from None
    if not np.isfinite(f):
        raise NumericalError(f"objective is infinite at the initial factors{hint}")
    F = full(B1, B2, f)
    trace = EstimationTrace()
    d2 = lambda a, b: None if truth is None else subspace_distance(FactorPair(a, b), truth)
    trace.append(F, eta, d2(B1, B2), balance_gap(FactorPair(B1, B2), norm))

    def step_from(Y1, Y2, h1, h2, eta):
        if hard and lam:
            _, r1, r2 = regularizer_g2(FactorPair(Y1, Y2))
            h1, h2 = h1 + lam * r1, h2 + lam * r2
        if hard:
            N1 = hard_threshold(np.maximum(Y1 - eta * h1, 0.0), config.s, config.per_column)
            N2 = hard_threshold(np.maximum(Y2 - eta * h2, 0.0), config.s, config.per_column)
        else:
            N1 = np.maximum(Y1 - eta * h1 - lam * eta, 0.0)
            N2 = np.maximum(Y2 - eta * h2 - lam * eta, 0.0)
        try:
            fn, n1, n2 = obj.value_and_grad(N1, N2)
        except NumericalError:
            return N1, N2, math.inf, None, None, math.inf
        Fn = full(N1, N2, fn) if np.isfinite(fn) else math.inf
        return N1, N2, fn, n1, n2, Fn

    for it in range(1, config.max_iters + 1):
        for _ in range(MAX_HALVINGS + 1):
            result = step_from(B1, B2, g1, g2, eta)
            if result[5] <= F:
                break
            eta *= 0.5
        else:
            trace.stop_reason = "step size exhausted"
            break
        N1, N2, fn, n1, n2, Fn = result
        change = max(np.abs(N1 - B1).max(), np.abs(N2 - B2).max())
        B1, B2, f, g1, g2, F = N1, N2, fn, n1, n2, Fn
        trace.append(F, eta, d2(B1, B2), balance_gap(FactorPair(B1, B2), norm))
        trace.n_iter = it
        eta *= config.step_growth
        if change < config.tol:
            trace.converged = True
            trace.stop_reason = "tolerance"
            break
    else:
        trace.stop_reason = "max_iters"
    return FactorPair(B1, B2), trace


def estimate_prox_g1(cascades, config: EstimationConfig, init: FactorPair, kernel="exp",
                     truth: Optional[FactorPair] = None, mask=None):
    """Proximal gradient with the ``l1`` regularizer; returns ``(factors, trace)``."""
    if config.algorithm != "prox":
        config = _replace(config, algorithm="prox")
    return _run(cascades, config, init, kernel, truth, mask)


def estimate_hard_g2(cascades, config: EstimationConfig, init: FactorPair, kernel="exp",
                     truth: Optional[FactorPair] = None, mask=None):
    """Hard-thresholded gradient with the balance regularizer; returns ``(factors, trace)``."""
    if config.algorithm != "hard":
        config = _replace(config, algorithm="hard")
    return _run(cascades, config, init, kernel, truth, mask)


def _replace(config: EstimationConfig, **changes) -> EstimationConfig:
    d = config.to_dict()
    d.update(changes)
    return EstimationConfig(**d)


# --------------------------------------------------------------------------
# model selection
# --------------------------------------------------------------------------

def split_indices(n: int, holdout: Optional[float] = 0.2, folds: Optional[int] = None, seed: int = 0):
    """Train/validation index pairs, split by cascade."""
    if n < 2:
        raise DataError("cross-validation needs at least 2 cascades")
    order = np.random.default_rng(seed).permutation(n)
    if folds is not None:
        if not 2 <= folds <= n:
            raise ValueError("folds must be in [2, n]")
        parts = np.array_split(order, folds)
        return [(np.sort(np.concatenate(parts[:i] + parts[i + 1:])), np.sort(parts[i]))
                for i in range(folds)]
    if not 0 < holdout < 1:
        raise ValueError("holdout must lie in (0, 1)")
    n_val = min(n - 1, max(1, int(round(holdout * n))))
    return [(np.sort(order[n_val:]), np.sort(order[:n_val]))]


def cross_validate(estimator, cascades, param: str, grid, holdout: Optional[float] = 0.2,
                   folds: Optional[int] = None, seed: int = 0, fit_params=None):
    """Pick ``param`` from ``grid`` by validation negative log-likelihood.

    Returns ``(best_value, scores)`` where ``scores[i]`` is the mean
    validation NLL of ``grid[i]``. Ties go to the smaller grid value.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("empty grid")
    cascades = list(cascades)
    splits = split_indices(len(cascades), holdout, folds, seed)
    scores = []
    for value in grid:
        vals = []
        for tr, va in splits:
            est = clone(estimator).set_params(**{param: value})
            est.fit([cascades[i] for i in tr], **(fit_params or {}))
            vals.append(-est.score([cascades[i] for i in va]))
        scores.append(float(np.mean(vals)))
    order = sorted(range(len(grid)), key=lambda i: (scores[i], grid[i]))
    return grid[order[0]], scores


# --------------------------------------------------------------------------
# estimator
# --------------------------------------------------------------------------

class InfluenceReceptivity(BaseEstimator):
    """Low-rank topic cascade model ``A^c = B1 diag(m^c) B2^T``.

    Parameters
    ----------
    n_topics : int
        Number of topics ``K``.
    kernel : {'exp', 'rayleigh'}
    algorithm : {'prox', 'hard'}
    lam : float
        Regularization weight.
    s : int or None
        Entries kept per factor matrix by the hard-thresholding algorithm.
    eta : float or 'auto'
    step_growth : float
        Factor applied to the step after each accepted iteration; 1 keeps
        the plain halving rule.
    n_nodes : int or None
        Node count; inferred from the data when omitted.

    Attributes
    ----------
    B1_, B2_ : ndarray of shape (n_nodes, n_topics)
    init_ : FactorPair
    trace_ : EstimationTrace
    """

    def __init__(self, n_topics=3, kernel="exp", algorithm="prox", lam=0.0, s=None, eta="auto",
                 tol=1e-6, max_iters=1000, init_iters=300, init_tol=1e-6, per_column=False,
                 step_growth=1.0, mask=None, n_nodes=None, threads=1, random_state=0):
        self.n_topics = n_topics
        self.kernel = kernel
        self.algorithm = algorithm
        self.lam = lam
        self.s = s
        self.eta = eta
        self.tol = tol
        self.max_iters = max_iters
        self.init_iters = init_iters
        self.init_tol = init_tol
        self.per_column = per_column
        self.step_growth = step_growth
        self.mask = mask
        self.n_nodes = n_nodes
        self.threads = threads
        self.random_state = random_state

    def _config(self) -> EstimationConfig:
        return EstimationConfig(algorithm=self.algorithm, lam=self.lam, s=self.s, eta=self.eta,
                                tol=self.tol, max_iters=self.max_iters, init_iters=self.init_iters,
                                init_tol=self.init_tol, per_column=self.per_column,
                                step_growth=self.step_growth, threads=self.threads,
                                seed=self.random_state or 0)

    def fit(self, X, y=None, truth: Optional[FactorPair] = None, init: Optional[FactorPair] = None):
        cascades = check_cascades(X, self.n_nodes, self.n_topics, need_topics=True)
        p = num_nodes(cascades, self.n_nodes)
        dims = ModelDims(p, self.n_topics)
        config = self._config()
        kernel = get_kernel(self.kernel)
        mask = check_mask(self.mask, p, drop_identity=True)
        if init is None:
            init = initialize(cascades, dims, kernel, self.s, config, mask)
        else:
            init = check_factors_like(init, dims)
        factors, trace = _run(cascades, config, init, kernel, truth, mask)
        self.n_nodes_ = p
        self.init_ = init
        self.factors_ = factors
        self.B1_, self.B2_ = factors.B1, factors.B2
        self.trace_ = trace
        self.n_iter_ = trace.n_iter
        return self

    def _check_fitted(self):
        if not hasattr(self, "factors_"):
            raise InfrecError("estimator is not fitted yet; call fit first")

    def diffusion_matrix(self, topics) -> np.ndarray:
        self._check_fitted()
        return diffusion_matrix(self.factors_, topics, check_mask(self.mask, self.n_nodes_))

    def topic_matrices(self) -> np.ndarray:
        """Per-topic matrices ``A^k = b1_k b2_k^T`` (zero diagonals)."""
        self._check_fitted()
        A = topic_matrices(self.factors_)
        mask = check_mask(self.mask, self.n_nodes_)
        return A if mask is None else A * mask

    def score_samples(self, X) -> np.ndarray:
        """Per-cascade log-likelihood."""
        from .likelihood import cascade_loglik

        self._check_fitted()
        cascades = check_cascades(X, self.n_nodes_, self.n_topics, need_topics=True)
        return np.array([cascade_loglik(c, self.diffusion_matrix(c.topics), self.kernel) for c in cascades])

    def score(self, X, y=None) -> float:
        """Average log-likelihood (higher is better)."""
        vals = self.score_samples(X)
        return float(np.mean(vals)) if np.all(np.isfinite(vals)) else -math.inf

    def transform(self, X) -> np.ndarray:
        """Infer topic weights of each cascade with the fitted factors."""
        from .extensions import infer_topics_batch

        self._check_fitted()
        if self.mask is not None:
            raise InfrecError("topic inference is not supported with a friendship mask")
        cascades = check_cascades(X, self.n_nodes_, None, need_topics=False)
        return infer_topics_batch(cascades, self.factors_, self.kernel, tol=self.tol)

    @property
    def n_nonzero_(self) -> int:
        self._check_fitted()
        return int(np.count_nonzero(self.B1_) + np.count_nonzero(self.B2_))

    @property
    def embedding_(self) -> np.ndarray:
        """Node embeddings: rows of ``[B1, B2]``."""
        self._check_fitted()
        return self.factors_.stacked
