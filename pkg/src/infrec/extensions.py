"""Model variants built on the core estimators.

* friendship-masked estimation, where ``A^c`` is multiplied entrywise by a
  fixed matrix ``F``;
* topic inference for new cascades with fixed factors (a convex problem
  over the simplex);
* alternating estimation when topic weights are unknown;
* alternating estimation of factors and numeric friendship strengths.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from sklearn.decomposition import NMF

from ._engine import FactorEngine, ThetaEngine
from ._validation import check_cascades, num_nodes
from .baselines import fit_netrate
from .estimation import EstimationConfig, _Objective, _run, initialize, regularizer_g2
from .exceptions import DataError, NumericalError
from .kernels import get_kernel
from .model import CascadeRecord, FactorPair, ModelDims, check_mask, stack_topics

__all__ = [
    "estimate_with_mask",
    "infer_topics",
    "infer_topics_batch",
    "estimate_unknown_topics",
    "estimate_numeric_friendship",
    "project_simplex_rows",
    "match_topics",
    "AlternatingTrace",
]

log = logging.getLogger(__name__)


@dataclass
class AlternatingTrace:
    """Joint objective after every half step of an alternating scheme."""

    objective: List[float] = field(default_factory=list)
    n_outer: int = 0
    converged: bool = False


def _reg(factors: FactorPair, config: EstimationConfig) -> float:
    if not config.lam:
        return 0.0
    if config.algorithm == "hard":
        return config.lam * regularizer_g2(factors)[0]
    return config.lam * float(factors.B1.sum() + factors.B2.sum())


# --------------------------------------------------------------------------
# friendship mask
# --------------------------------------------------------------------------

def estimate_with_mask(cascades, mask, config: EstimationConfig, n_topics: int, kernel="exp",
                       init: Optional[FactorPair] = None, truth: Optional[FactorPair] = None,
                       p: Optional[int] = None):
    """Estimation with ``A^c = (B1 M^c B2^T) * F``; returns ``(factors, trace)``."""
    cascades = check_cascades(cascades, p, n_topics)
    p = num_nodes(cascades, p)
    F = check_mask(mask, p)
    if F is None or not F.any():
        raise DataError("mask has no nonzero off-diagonal entry")
    if init is None:
        s = config.s if config.algorithm == "hard" else None
        init = initialize(cascades, ModelDims(p, n_topics), kernel, s, config, F)
    return _run(cascades, config, init, kernel, truth, F)


# --------------------------------------------------------------------------
# topic inference
# --------------------------------------------------------------------------

def project_simplex_rows(V) -> np.ndarray:
    """Row-wise Euclidean projection onto the probability simplex."""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    n, K = V.shape
    U = -np.sort(-V, axis=1)
    css = np.cumsum(U, axis=1) - 1.0
    ind = np.arange(1, K + 1)
    rho = (U - css / ind > 0).sum(axis=1) - 1
    shift = css[np.arange(n), rho] / (rho + 1.0)
    W = np.maximum(V - shift[:, None], 0.0)
    return W / W.sum(axis=1, keepdims=True)


def _topic_objective(lin, Q, owner, M):
    """Per-cascade ``-loglik(m)`` and gradient for the rows of ``M``."""
    n = lin.shape[0]
    R = np.einsum("ek,ek->e", Q, M[owner])
    bad = np.zeros(n, dtype=bool)
    tiny = R < 1e-300
    if tiny.any():
        bad[owner[tiny]] = True
        R = np.where(tiny, 1.0, R)
    val = np.einsum("ck,ck->c", lin, M) - np.bincount(owner, np.log(R), minlength=n)
    val[bad] = np.inf
    G = lin - np.stack([np.bincount(owner, Q[:, k] / R, minlength=n) for k in range(Q.shape[1])], axis=1)
    return val, G


def _solve_topics(lin, Q, owner, M0, tol, max_iters, eta0=1.0, growth=1.5):
    M = M0.copy()
    n = M.shape[0]
    f, G = _topic_objective(lin, Q, owner, M)
    if not np.all(np.isfinite(f)):
        raise NumericalError("a cascade is impossible under the fitted factors")
    eta = np.full(n, float(eta0))
    active = np.ones(n, dtype=bool)
    for _ in range(max_iters):
        if not active.any():
            break
        cand = M.copy()
        fc = f.copy()
        pending = active.copy()
        for _ in range(60):
            trial = project_simplex_rows(M - eta[:, None] * G)
            cand[pending] = trial[pending]
            fn, _ = _topic_objective(lin, Q, owner, cand)
            d = cand - M
            quad = f + (G * d).sum(axis=1) + (d ** 2).sum(axis=1) / (2 * eta)
            ok = np.isfinite(fn) & (fn <= quad + 1e-12 * np.maximum(1.0, np.abs(quad)))
            fc[pending & ok] = fn[pending & ok]
            bad = pending & ~ok
            if not bad.any():
                break
            eta[bad] *= 0.5
            pending = bad
        else:
            cand[pending] = M[pending]
            fc[pending] = f[pending]
            active &= ~pending
        change = np.abs(cand - M).max(axis=1)
        M, f = cand, fc
        _, G = _topic_objective(lin, Q, owner, M)
        active &= change >= tol
        eta = np.where(active, eta * growth, eta)
    return M, f


def infer_topics_batch(cascades, factors: FactorPair, kernel="exp", tol: float = 1e-8,
                       max_iters: int = 2000, start=None) -> np.ndarray:
    """Maximum-likelihood topic weights for each cascade, given the factors.

    Projected gradient over the simplex with per-cascade backtracking,
    started from uniform weights unless ``start`` (``n x K``) is given.
    Returns an ``(n, K)`` array whose rows lie on the simplex.
    """
    cascades = check_cascades(cascades, factors.p, factors.K, need_topics=False)
    K = factors.K
    if K == 1:
        return np.ones((len(cascades), 1))
    eng = FactorEngine(cascades, factors.p, get_kernel(kernel))
    lin, Q, owner = eng.topic_design(factors.B1, factors.B2)
    flat = np.zeros(len(cascades), dtype=bool)
    counts = np.bincount(owner, minlength=len(cascades))
    spread = lin.max(axis=1) - lin.min(axis=1)
    flat = (counts == 0) & (spread <= 1e-12 * np.maximum(1.0, np.abs(lin).max(axis=1)))
    if flat.any():
        log.warning("%d cascade(s) carry no topic information; returning uniform weights", flat.sum())
    M0 = np.full((len(cascades), K), 1.0 / K) if start is None else project_simplex_rows(start)
    M, _ = _solve_topics(lin, Q, owner, M0, tol, max_iters)
    M[flat] = 1.0 / K
    return M


def infer_topics(cascade: CascadeRecord, factors: FactorPair, kernel="exp", tol: float = 1e-8,
                 max_iters: int = 2000, start=None) -> np.ndarray:
    """Topic weights of one cascade (see :func:`infer_topics_batch`)."""
    st = None if start is None else np.asarray(start, dtype=float)[None]
    return infer_topics_batch([cascade], factors, kernel, tol, max_iters, st)[0]


# --------------------------------------------------------------------------
# unknown topics
# --------------------------------------------------------------------------

def match_topics(B_hat, B_true) -> np.ndarray:
    """Permutation ``perm`` with ``B_hat[:, perm[k]]`` matched to ``B_true[:, k]``.

    Columns are matched by maximum total correlation (Hungarian assignment).
    Factor pairs are compared on ``B1`` stacked over ``B2``.
    """
    from scipy.optimize import linear_sum_assignment

    def as_matrix(B):
        if isinstance(B, FactorPair):
            return np.vstack([B.B1, B.B2])
        return np.asarray(B, dtype=float)

    B_hat, B_true = as_matrix(B_hat), as_matrix(B_true)

    def unit(X):
        Xc = X - X.mean(axis=0)
        nrm = np.linalg.norm(Xc, axis=0)
        return Xc / np.where(nrm > 0, nrm, 1.0)

    C = unit(B_true).T @ unit(B_hat)
    rows, cols = linear_sum_assignment(-C)
    perm = np.empty(B_true.shape[1], dtype=int)
    perm[rows] = cols
    return perm


def nmf_start(cascades, p: int, K: int, kernel, seed: int = 0, netrate_iters: int = 300) -> FactorPair:
    """Factors from a rank-``K`` nonnegative factorization of a NetRate fit.

    Scaled so that uniform topic weights reproduce the factorized matrix. A
    floor of 1% of the mean entry keeps every observed infection possible.
    """
    A = fit_netrate(cascades, kernel, 0.0, max_iters=netrate_iters, p=p).A
    model = NMF(n_components=K, init="nndsvda", random_state=seed, max_iter=1000, tol=1e-6)
    W = model.fit_transform(A)
    W, H = np.maximum(W, 0.0), np.maximum(model.components_.T, 0.0)
    W += 0.01 * max(W.mean(), 1e-12)
    H += 0.01 * max(H.mean(), 1e-12)
    return FactorPair(W, H * K)


def estimate_unknown_topics(cascades, n_topics: int, config: Optional[EstimationConfig] = None,
                            kernel="exp", outer_iters: int = 20, tol: float = 1e-4,
                            init: Optional[FactorPair] = None, p: Optional[int] = None):
    """Alternate factor estimation and per-cascade topic inference.

    Weights start uniform. Because uniform weights make every topic look the
    same, the factors start from a nonnegative factorization of a NetRate
    estimate unless ``init`` is given. Returns ``(factors, topics, trace)``.
    """
    config = config or EstimationConfig()
    kernel = get_kernel(kernel)
    cascades = check_cascades(cascades, p, None, need_topics=False)
    p = num_nodes(cascades, p)
    K = n_topics
    ModelDims(p, K)
    M = np.full((len(cascades), K), 1.0 / K)
    work = [c.with_topics(m) for c, m in zip(cascades, M)]
    if init is None:
        init = nmf_start(work, p, K, kernel, config.seed) if K > 1 else \
            initialize(work, ModelDims(p, K), kernel, config.s, config)
    B = init
    trace = AlternatingTrace()
    eng = FactorEngine(work, p, kernel, M, config.threads)
    trace.objective.append(eng.value(B.B1, B.B2) + _reg(B, config))
    for outer in range(1, outer_iters + 1):
        work = [c.with_topics(m) for c, m in zip(cascades, M)]
        B_new, tr = _run(work, config, B, kernel)
        trace.objective.append(tr.objective[-1])
        if K == 1:
            B, trace.n_outer, trace.converged = B_new, outer, True
            break
        M_new = infer_topics_batch(cascades, B_new, kernel, start=M)
        eng.set_topics(M_new)
        joint = eng.value(B_new.B1, B_new.B2) + _reg(B_new, config)
        if joint > trace.objective[-1]:
            # the per-cascade solves are monotone from the warm start, so this
            # only happens through rounding; keep the previous weights
            M_new = M
            joint = trace.objective[-1]
        trace.objective.append(joint)
        change = max(np.abs(B_new.B1 - B.B1).max(), np.abs(B_new.B2 - B.B2).max(),
                     np.abs(M_new - M).max())
        B, M = B_new, M_new
        trace.n_outer = outer
        if change < tol:
            trace.converged = True
            break
    return B, M, trace


# --------------------------------------------------------------------------
# numeric friendship
# --------------------------------------------------------------------------

def _f_step(engine: ThetaEngine, theta, F, support, iters: int, tol: float, eta0: float,
            growth: float = 1.5):
    """Projected gradient on ``F >= 0`` restricted to ``support``; nonincreasing."""
    f = engine.value(theta, F)
    eta = eta0
    for _ in range(iters):
        _, _, gF = engine.value_and_grad(theta, F, want_F=True)
        for _ in range(31):
            cand = np.where(support, np.maximum(F - eta * gF, 0.0), 0.0)
            fn = engine.value(theta, cand)
            if fn <= f:
                break
            eta *= 0.5
        else:
            break
        change = np.abs(cand - F).max()
        F, f = cand, fn
        eta *= growth
        if change < tol:
            break
    return F, f, eta


def estimate_numeric_friendship(cascades, support, n_topics: int,
                                config: Optional[EstimationConfig] = None, kernel="exp",
                                outer_iters: int = 10, f_iters: int = 100, f_step: bool = True,
                                tol: float = 1e-5, init: Optional[FactorPair] = None,
                                p: Optional[int] = None):
    """Alternate masked factor estimation and a friendship-strength step.

    ``F`` starts at the 0/1 ``support`` pattern and stays zero off it. Only
    the products ``A^c`` are identifiable: a column of ``B1`` can be scaled
    up while ``F`` is scaled down. Returns ``(factors, F, trace)``.
    """
    config = config or EstimationConfig()
    kernel = get_kernel(kernel)
    cascades = check_cascades(cascades, p, n_topics)
    p = num_nodes(cascades, p)
    S = check_mask(support, p)
    if S is None or not S.any():
        raise DataError("friendship support is empty")
    S = S > 0
    F = S.astype(float)
    s = config.s if config.algorithm == "hard" else None
    B = init if init is not None else initialize(cascades, ModelDims(p, n_topics), kernel, s, config, F)
    engine = ThetaEngine(cascades, p, kernel, stack_topics(cascades, n_topics), config.threads)
    trace = AlternatingTrace()
    trace.objective.append(engine.value(B.thetas(), F) + _reg(B, config))
    eta_F = 1.0
    for outer in range(1, outer_iters + 1):
        B_new, tr = _run(cascades, config, B, kernel, mask=F)
        trace.objective.append(tr.objective[-1])
        F_new = F
        if f_step:
            F_new, fval, eta_F = _f_step(engine, B_new.thetas(), F, S, f_iters, tol, eta_F)
            trace.objective.append(fval + _reg(B_new, config))
        change = max(np.abs(B_new.B1 - B.B1).max(), np.abs(B_new.B2 - B.B2).max(),
                     np.abs(F_new - F).max())
        B, F = B_new, F_new
        trace.n_outer = outer
        if not f_step or change < tol:
            trace.converged = change < tol
            break
    return B, F, trace
