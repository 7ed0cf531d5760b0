"""Computable counterparts of the convergence theory, and model evaluation.

The Hessian of ``f`` restricted to the incoming weights of node ``i``,
``Theta^[i] = (Theta_1[:, i], ..., Theta_K[:, i])``, is

    H_i = (1/n) sum_c v_c v_c^T,    v_c = m^c kron X^c,

where ``X^c_j = h(t_i - t_j) / sum_l alpha_li h(t_i - t_l)`` for the earlier
infectors ``j`` of ``i`` in cascade ``c``. Log-survival is linear in the
rates for both kernels, so it adds no curvature.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from ._engine import FactorEngine
from .exceptions import DataError, NumericalError
from .kernels import get_kernel
from .likelihood import cascade_loglik, grad_wrt_theta
from .model import FactorPair, diffusion_matrix, stack_topics, topic_matrices

__all__ = [
    "TheoryConstants",
    "EvalReport",
    "hessian_blocks",
    "hessian_column_block",
    "estimate_mu_L",
    "stat_error_proxy",
    "stat_error_topics",
    "theory_constants",
    "step_size_bound",
    "evaluate",
    "information_criteria",
    "emit_embeddings",
    "topic_error",
]


# --------------------------------------------------------------------------
# Hessian blocks
# --------------------------------------------------------------------------

def _block_rows(cascades, thetas, kernel):
    """Yield ``(i, v)`` for every infected non-source node of every cascade."""
    kernel = get_kernel(kernel)
    thetas = np.asarray(thetas, dtype=float)
    K, p, _ = thetas.shape
    for c in cascades:
        m = np.asarray(c.topics, dtype=float)
        A = np.tensordot(m, thetas, axes=1)
        v, t = c.nodes(), c.times()
        for a in range(1, v.size):
            prior = t < t[a]
            j = v[prior]
            hj = kernel.h(t[a] - t[prior])
            R = float(A[j, v[a]] @ hj)
            if R < 1e-300:
                raise NumericalError(f"cascade {c.id!r}: likelihood is zero at the given parameters")
            X = np.zeros(p)
            X[j] = hj / R
            yield v[a], np.kron(m, X)


def hessian_blocks(cascades, thetas, kernel="exp") -> np.ndarray:
    """All ``p`` column blocks as an array of shape ``(p, pK, pK)``."""
    thetas = np.asarray(thetas, dtype=float)
    K, p, _ = thetas.shape
    rows = [[] for _ in range(p)]
    for i, vec in _block_rows(cascades, thetas, kernel):
        rows[i].append(vec)
    out = np.zeros((p, p * K, p * K))
    for i in range(p):
        if rows[i]:
            V = np.asarray(rows[i])
            out[i] = V.T @ V
    return out / len(cascades)


def hessian_column_block(cascades, thetas, kernel, i: int) -> np.ndarray:
    """Hessian of ``f`` with respect to ``Theta^[i]`` (``pK x pK``, topic-major)."""
    thetas = np.asarray(thetas, dtype=float)
    K, p, _ = thetas.shape
    if not 0 <= i < p:
        raise DataError(f"node {i} out of range")
    H = np.zeros((p * K, p * K))
    for node, vec in _block_rows(cascades, thetas, kernel):
        if node == i:
            H += np.outer(vec, vec)
    return H / len(cascades)


def _offdiag_index(p: int, K: int, i: int) -> np.ndarray:
    j = np.tile(np.arange(p), K)
    return np.flatnonzero(j != i)


def estimate_mu_L(cascades, thetas, kernel="exp", exclude_self: bool = True):
    """Extreme eigenvalues ``(mu_hat, L_hat)`` over all column blocks.

    Self-loop coordinates never enter the likelihood and are dropped unless
    ``exclude_self`` is off (which makes ``mu_hat`` trivially 0).
    """
    thetas = np.asarray(thetas, dtype=float)
    K, p, _ = thetas.shape
    blocks = hessian_blocks(cascades, thetas, kernel)
    lo, hi = math.inf, -math.inf
    for i in range(p):
        H = blocks[i]
        if exclude_self:
            idx = _offdiag_index(p, K, i)
            H = H[np.ix_(idx, idx)]
        try:
            w = np.linalg.eigvalsh(H)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"eigendecomposition failed for node {i}: {exc}") from None
        lo, hi = min(lo, w[0]), max(hi, w[-1])
    return float(lo), float(hi)


# --------------------------------------------------------------------------
# statistical error
# --------------------------------------------------------------------------

def stat_error_proxy(cascades, truth: FactorPair, kernel="exp", s: Optional[int] = None) -> float:
    """Restricted gradient norm at the truth.

    For each topic the gradient of ``f`` at ``Theta*`` is restricted to the
    support of ``Theta*_k`` together with its ``2 s^2`` largest entries in
    absolute value, and the Frobenius norm of the result is returned. This
    is a computable surrogate for the supremum over sparse rank-two
    directions, not that supremum itself.
    """
    thetas = topic_matrices(truth)
    G = grad_wrt_theta(cascades, thetas, kernel)
    K, p, _ = G.shape
    off = ~np.eye(p, dtype=bool)
    total = 0.0
    for k in range(K):
        keep = (thetas[k] > 0) & off
        if s is not None:
            budget = min(2 * s * s, int(off.sum()))
            score = np.where(off, np.abs(G[k]), -1.0).ravel()
            top = np.argsort(-score, kind="stable")[:budget]
            extra = np.zeros(p * p, dtype=bool)
            extra[top] = True
            keep |= extra.reshape(p, p)
        total += float(np.sum(G[k][keep] ** 2))
    return math.sqrt(total)


def stat_error_topics(cascades, truth: FactorPair, kernel="exp") -> float:
    """Norm of the gradient of ``f`` in all topic weights at the truth."""
    eng = FactorEngine(cascades, truth.p, get_kernel(kernel))
    lin, Q, owner = eng.topic_design(truth.B1, truth.B2)
    M = stack_topics(cascades, truth.K)
    R = np.einsum("ek,ek->e", Q, M[owner])
    if np.any(R < 1e-300):
        raise NumericalError("likelihood is zero at the truth")
    G = lin - np.stack([np.bincount(owner, Q[:, k] / R, minlength=len(cascades))
                        for k in range(truth.K)], axis=1)
    return float(np.linalg.norm(G / len(cascades)))


# --------------------------------------------------------------------------
# theory constants
# --------------------------------------------------------------------------

@dataclass
class TheoryConstants:
    mu_hat: float
    L_hat: float
    sigma_star: float
    gamma: float
    xi2: float
    beta: float
    eta_bound: float
    eta_auto: float
    e_stat: float
    e_stat_M: Optional[float] = None

    def to_dict(self) -> dict:
        return {k: (None if v is None or (isinstance(v, float) and not math.isfinite(v)) else v)
                for k, v in asdict(self).items()}


def step_size_bound(B0: FactorPair, mu: float, L: float) -> float:
    """``1 / (8 |B0|_2^2) * min(K / (2 (mu + L)), 1)``."""
    norm = np.linalg.norm(B0.stacked, 2)
    if norm == 0:
        raise NumericalError("zero initial factors")
    return 1.0 / (8 * norm ** 2) * min(B0.K / (2 * (mu + L)), 1.0)


def theory_constants(cascades, truth: FactorPair, kernel="exp", s: Optional[int] = None,
                     s_star: Optional[int] = None, init: Optional[FactorPair] = None,
                     with_topics: bool = True) -> TheoryConstants:
    """Evaluate the constants of the convergence analysis at the truth.

    ``c = s / s_star`` enters through ``xi^2 = 1 + 2 / sqrt(c - 1)`` (infinite
    when ``c <= 1`` or either count is missing). ``beta`` uses the step-size
    bound computed from ``init`` (or the truth when no init is given).
    """
    thetas = topic_matrices(truth)
    mu, L = estimate_mu_L(cascades, thetas, kernel)
    sigma = min(float(np.linalg.norm(thetas[k], 2)) for k in range(truth.K))
    gamma = min(1.0, mu * L / (mu + L)) if mu + L > 0 else 0.0
    if s is not None and s_star and s / s_star > 1:
        xi2 = 1.0 + 2.0 / math.sqrt(s / s_star - 1.0)
    else:
        xi2 = math.inf
    B0 = init if init is not None else truth
    eta_bound = step_size_bound(B0, mu, L)
    eta_auto = 1.0 / (8 * np.linalg.norm(B0.stacked, 2) ** 2)
    beta = xi2 * (1.0 - 0.25 * gamma * sigma * eta_bound)
    e_stat = stat_error_proxy(cascades, truth, kernel, s)
    e_M = stat_error_topics(cascades, truth, kernel) if with_topics else None
    return TheoryConstants(mu, L, sigma, gamma, xi2, beta, eta_bound, eta_auto, e_stat, e_M)


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------

@dataclass
class EvalReport:
    train_nll: float
    test_nll: float
    topic_error: Optional[float]
    nnz: int
    aic: float
    bic: float
    n_test: int

    def to_dict(self) -> dict:
        """Plain dict; non-finite numbers (such as a missing train NLL) become ``None``."""
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                for k, v in asdict(self).items()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table(self) -> str:
        rows = [("train_nll", self.train_nll), ("test_nll", self.test_nll),
                ("topic_error", self.topic_error), ("nnz", self.nnz), ("aic", self.aic),
                ("bic", self.bic), ("n_test", self.n_test)]
        width = max(len(k) for k, _ in rows)
        out = []
        for k, v in rows:
            if v is None or (isinstance(v, float) and math.isnan(v)):
                txt = "-"
            elif isinstance(v, int):
                txt = str(v)
            else:
                txt = f"{v:.6g}"
            out.append(f"{k.ljust(width)}  {txt}")
        return "\n".join(out)


class _Provider:
    """Uniform view of fitted models: per-cascade matrices, per-topic matrices, parameters."""

    def __init__(self, model, K: Optional[int] = None):
        self.model = model
        self.K = K
        self.mask = None
        if isinstance(model, FactorPair):
            self.kind = "factors"
            self.factors = model
        elif hasattr(model, "factors_"):
            self.kind = "factors"
            self.factors = model.factors_
            from .model import check_mask
            self.mask = check_mask(getattr(model, "mask", None), self.factors.p)
        elif hasattr(model, "A_stack") or hasattr(model, "A_stack_"):
            self.kind = "stack"
            self.stack = getattr(model, "A_stack_", None)
            if self.stack is None:
                self.stack = model.A_stack
        elif hasattr(model, "A") or hasattr(model, "A_"):
            self.kind = "single"
            self.A = getattr(model, "A_", None)
            if self.A is None:
                self.A = model.A
        else:
            raise TypeError(f"cannot evaluate object of type {type(model).__name__}")

    def matrix(self, topics) -> np.ndarray:
        if self.kind == "factors":
            return diffusion_matrix(self.factors, topics, self.mask)
        if self.kind == "stack":
            A = np.tensordot(np.asarray(topics, dtype=float), self.stack, axes=1)
            np.fill_diagonal(A, 0.0)
            return A
        return self.A

    def topic_matrices(self, K: int) -> np.ndarray:
        if self.kind == "factors":
            out = topic_matrices(self.factors)
            return out if self.mask is None else out * self.mask
        if self.kind == "stack":
            return self.stack
        return np.repeat(np.asarray(self.A)[None], K, axis=0)

    def parameters(self) -> np.ndarray:
        if self.kind == "factors":
            return self.factors.stacked.ravel()
        if self.kind == "stack":
            return np.asarray(self.stack).ravel()
        return np.asarray(self.A).ravel()


def topic_error(estimated, truth) -> float:
    """Mean relative Frobenius error ``(1/K) sum_k |A^k_hat - A^k| / |A^k|`` (diagonals dropped)."""
    est = np.array(estimated, dtype=float)
    tru = np.array(truth, dtype=float)
    if est.shape != tru.shape:
        raise DataError(f"shape mismatch {est.shape} vs {tru.shape}")
    idx = np.arange(tru.shape[1])
    est[:, idx, idx] = 0.0
    tru[:, idx, idx] = 0.0
    errs = []
    for k in range(tru.shape[0]):
        nrm = np.linalg.norm(tru[k])
        if nrm == 0:
            raise DataError(f"true topic matrix {k} is zero")
        errs.append(np.linalg.norm(est[k] - tru[k]) / nrm)
    return float(np.mean(errs))


def information_criteria(nnz: int, total_nll: float, n_test: int):
    """``(AIC, BIC) = (2 k + 2 NLL, k ln(n) + 2 NLL)`` with ``k = nnz`` and total test NLL."""
    return 2 * nnz + 2 * total_nll, nnz * math.log(n_test) + 2 * total_nll


def _nll(provider: _Provider, cascades, kernel, floor: float = 0.0) -> float:
    vals = []
    for c in cascades:
        A = provider.matrix(c.topics)
        if floor > 0:
            A = A + floor
            np.fill_diagonal(A, 0.0)
        vals.append(cascade_loglik(c, A, kernel))
    return -float(np.sum(vals))


def evaluate(model, train, test, truth: Optional[FactorPair] = None, kernel="exp",
             nnz_threshold: float = 1e-6, rate_floor: float = 0.0) -> EvalReport:
    """Average train/test NLL, per-topic error against ``truth``, and AIC/BIC on the test set.

    ``AIC = 2 nnz + 2 NLL_test`` and ``BIC = nnz ln(n_test) + 2 NLL_test``,
    where ``NLL_test`` is the total (not averaged) test negative log-likelihood
    and ``nnz`` counts parameters above ``nnz_threshold``.

    Sparse fits can give exactly zero hazard to an infection seen only in the
    test set, which makes its likelihood zero. ``rate_floor > 0`` adds that
    constant to every off-diagonal rate before computing likelihoods, so such
    models get a large finite penalty instead of an infinite one.
    """
    if not rate_floor >= 0:
        raise ValueError("rate_floor must be >= 0")
    test = list(test)
    train = list(train) if train is not None else []
    if not test:
        raise DataError("empty test set")
    kernel = get_kernel(kernel)
    prov = _Provider(model)
    total_test = _nll(prov, test, kernel, rate_floor)
    train_nll = _nll(prov, train, kernel, rate_floor) / len(train) if train else math.nan
    nnz = int(np.sum(np.abs(prov.parameters()) > nnz_threshold))
    err = None
    if truth is not None:
        err = topic_error(prov.topic_matrices(truth.K), topic_matrices(truth))
    n_test = len(test)
    aic, bic = information_criteria(nnz, total_test, n_test)
    return EvalReport(train_nll, total_test / n_test, err, nnz, aic, bic, n_test)


def emit_embeddings(factors: FactorPair, path=None) -> str:
    """CSV rows ``B1[j] || B2[j]`` for each node; written to ``path`` when given."""
    from .io import format_matrix

    text = format_matrix(factors.stacked)
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text
