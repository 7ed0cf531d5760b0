"""Vectorized evaluation of the dataset negative log-likelihood and its gradients.

Two backends share the same data preparation:

``FactorEngine``
    Objective in ``(B1, B2)`` without a mask. Because both kernels have a
    hazard and log-survival that are polynomial in ``t_dest - t_src``, the
    sums over earlier infectors collapse into prefix sums along each
    cascade's infection order, so one evaluation costs
    ``O(total events * K)``.

``ThetaEngine``
    Objective in a stack of full ``p x p`` matrices ``Theta_k`` (one per
    topic), optionally multiplied elementwise by a friendship matrix ``F``.
    Works on explicit (infector, infectee) pairs.

Cascades are split into chunks whose boundaries depend only on the data.
Chunks may be evaluated on a thread pool; partial results are always
combined in chunk order with a pairwise reduction, so the outcome does not
depend on the number of threads.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .exceptions import NumericalError
from .kernels import TransmissionKernel, get_kernel
from .model import CascadeRecord

TINY_RATE = 1e-300


def tree_sum(parts):
    """Pairwise sum in a fixed order (deterministic for a given list length)."""
    parts = list(parts)
    if not parts:
        raise ValueError("nothing to reduce")
    while len(parts) > 1:
        nxt = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def _reduce(results):
    """Tree-reduce a list of tuples elementwise."""
    return tuple(tree_sum(col) for col in zip(*results))


class _Mapper:
    def __init__(self, threads: Optional[int]):
        self.threads = max(1, int(threads or 1))

    def map(self, fn, items):
        items = list(items)
        if self.threads == 1 or len(items) == 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.threads) as ex:
            return list(ex.map(fn, items))


def _chunk_bounds(sizes: Sequence[int], max_cascades: int, max_cost: int) -> List[tuple]:
    bounds, start, cost = [], 0, 0
    for idx, s in enumerate(sizes):
        cost += s
        if idx + 1 - start >= max_cascades or cost >= max_cost:
            bounds.append((start, idx + 1))
            start, cost = idx + 1, 0
    if start < len(sizes):
        bounds.append((start, len(sizes)))
    return bounds


def _strict_counts(times: np.ndarray):
    """For sorted ``times``: #events strictly earlier, and #events not later."""
    return (np.searchsorted(times, times, side="left"),
            np.searchsorted(times, times, side="right"))


# --------------------------------------------------------------------------
# factor backend
# --------------------------------------------------------------------------


class _FactorChunk:
    def __init__(self, cascades: Sequence[CascadeRecord], p: int, kernel: TransmissionKernel):
        C = len(cascades)
        S = max(c.size for c in cascades)
        self.C, self.S = C, S
        V = np.zeros((C, S), dtype=np.int64)
        Tm = np.zeros((C, S))
        valid = np.zeros((C, S), dtype=bool)
        q = np.zeros((C, S), dtype=np.int64)
        u = np.full((C, S), S, dtype=np.int64)
        win = np.empty(C)
        for r, c in enumerate(cascades):
            n_ = c.size
            t = c.times()
            V[r, :n_] = c.nodes()
            Tm[r, :n_] = t
            valid[r, :n_] = True
            q[r, :n_], u[r, :n_] = _strict_counts(t)
            win[r] = c.window
        self.V, self.valid, self.q, self.u = V, valid, q, u
        self.haz = valid.copy()
        self.haz[:, 0] = False
        vf = valid.astype(float)
        self.vf = vf
        self.h_terms = [(fd(Tm) * vf, fs(Tm) * vf) for fd, fs in kernel.h_terms]
        self.psi_terms = [(fd(Tm) * vf, fs(Tm) * vf) for fd, fs in kernel.psi_terms]
        tau_u = np.where(valid, win[:, None] - Tm, 0.0)
        self.psi_unf = kernel.psi(tau_u) * vf
        rows = V[valid]
        cols = np.flatnonzero(valid.ravel())
        self.scatter = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(p, C * S))
        self.M = None

    # prefix sums over strictly earlier events, gathered at each event
    def _prior(self, X, terms):
        out = np.zeros_like(X)
        C, S, K = X.shape
        P = np.zeros((C, S + 1, K))
        for fd, fs in terms:
            np.cumsum(fs[..., None] * X, axis=1, out=P[:, 1:])
            out += fd[..., None] * np.take_along_axis(P, self.q[..., None], axis=1)
        return out

    # suffix sums over strictly later events, gathered at each event
    def _later(self, Y, terms):
        out = np.zeros_like(Y)
        C, S, K = Y.shape
        P = np.zeros((C, S + 1, K))
        for fd, fs in terms:
            np.cumsum(fd[..., None] * Y, axis=1, out=P[:, 1:])
            suf = P[:, S:S + 1] - P
            out += fs[..., None] * np.take_along_axis(suf, self.u[..., None], axis=1)
        return out

    def forward(self, B1, B2):
        vf = self.vf[..., None]
        X1 = B1[self.V] * vf
        X2 = B2[self.V] * vf
        Sh = self._prior(X1, self.h_terms)
        Y = self._prior(X1, self.psi_terms)
        W = np.einsum("csk,cs->ck", X1, self.psi_unf)
        U = B2.sum(axis=0)[None, :] - X2.sum(axis=1)
        lin = np.einsum("csk,csk->ck", X2, Y) + W * U
        Q = X2 * Sh
        return X1, X2, Sh, Y, W, U, lin, Q

    def loglik(self, B1, B2):
        *_, lin, Q = self.forward(B1, B2)
        R = np.einsum("csk,ck->cs", Q, self.M)
        Rh = R[self.haz]
        if Rh.size and Rh.min() < TINY_RATE:
            out = np.full(self.C, -np.inf)
            ok = ~np.any(self.haz & (R < TINY_RATE), axis=1)
            out[ok] = self._sum_logs(R, ok) - np.einsum("ck,ck->c", self.M, lin)[ok]
            return out
        return self._sum_logs(R, slice(None)) - np.einsum("ck,ck->c", self.M, lin)

    def _sum_logs(self, R, rows):
        Rm = np.where(self.haz, R, 1.0)[rows]
        return np.log(Rm).sum(axis=1)

    def value_and_grad(self, B1, B2):
        X1, X2, Sh, Y, W, U, lin, Q = self.forward(B1, B2)
        M = self.M
        R = np.einsum("csk,ck->cs", Q, M)
        if np.any(self.haz & (R < TINY_RATE)):
            raise NumericalError("hazard sum vanishes for an infected node; gradient undefined")
        ll = np.log(np.where(self.haz, R, 1.0)).sum() - np.einsum("ck,ck->", M, lin)
        g = np.where(self.haz, 1.0 / np.where(self.haz, R, 1.0), 0.0)
        gm = g[..., None] * M[:, None, :]
        # d loglik / d X2 and d X1, before scattering to node rows
        dX2 = gm * Sh - M[:, None, :] * (Y - W[:, None, :])
        dX1 = self._later(gm * X2, self.h_terms)
        dX1 -= M[:, None, :] * (self._later(X2, self.psi_terms) + self.psi_unf[..., None] * U[:, None, :])
        vf = self.vf[..., None]
        K = B1.shape[1]
        gB1 = self.scatter @ (dX1 * vf).reshape(-1, K)
        gB2 = self.scatter @ (dX2 * vf).reshape(-1, K)
        gB2 -= (M * W).sum(axis=0)[None, :]
        return ll, gB1, gB2

    def topic_design(self, B1, B2):
        *_, lin, Q = self.forward(B1, B2)
        return lin, Q


class FactorEngine:
    """Dataset objective ``f(B1, B2) = -(1/n) sum_c log l(t^c; B1 M^c B2^T)``."""

    def __init__(self, cascades: Sequence[CascadeRecord], p: int, kernel: TransmissionKernel,
                 topics: Optional[np.ndarray] = None, threads: Optional[int] = 1,
                 max_chunk: int = 512, max_cost: int = 1 << 16):
        if not cascades:
            raise ValueError("empty dataset")
        kernel = get_kernel(kernel)
        self.p, self.kernel, self.n = p, kernel, len(cascades)
        sizes = [c.size for c in cascades]
        self.bounds = _chunk_bounds(sizes, max_chunk, max_cost)
        self.chunks = [_FactorChunk(cascades[a:b], p, kernel) for a, b in self.bounds]
        self.mapper = _Mapper(threads)
        if topics is not None:
            self.set_topics(topics)

    def set_topics(self, M):
        M = np.asarray(M, dtype=float)
        if M.shape[0] != self.n:
            raise ValueError("topic matrix must have one row per cascade")
        self.K = M.shape[1]
        for (a, b), ch in zip(self.bounds, self.chunks):
            ch.M = M[a:b]

    def cascade_loglik(self, B1, B2) -> np.ndarray:
        return np.concatenate(self.mapper.map(lambda ch: ch.loglik(B1, B2), self.chunks))

    def value(self, B1, B2) -> float:
        parts = self.mapper.map(lambda ch: ch.loglik(B1, B2).sum(), self.chunks)
        ll = tree_sum(parts)
        return -ll / self.n if np.isfinite(ll) else np.inf

    def value_and_grad(self, B1, B2):
        ll, g1, g2 = _reduce(self.mapper.map(lambda ch: ch.value_and_grad(B1, B2), self.chunks))
        return -ll / self.n, -g1 / self.n, -g2 / self.n

    def topic_design(self, B1, B2):
        """Per-cascade coefficients making the log-likelihood concave in ``m``.

        Returns ``(lin, Q, owner)`` with ``loglik_c(m) = sum_{e: owner[e]=c}
        log(Q[e] @ m) - lin[c] @ m``.
        """
        lins, Qs, owners = [], [], []
        for (a, _), ch in zip(self.bounds, self.chunks):
            lin, Q = ch.topic_design(B1, B2)
            lins.append(lin)
            Qs.append(Q[ch.haz])
            owners.append(a + np.nonzero(ch.haz)[0])
        return np.vstack(lins), np.vstack(Qs), np.concatenate(owners)


# --------------------------------------------------------------------------
# pair backend
# --------------------------------------------------------------------------


class _PairChunk:
    def __init__(self, cascades, M, p, kernel):
        flats, evs, hs, dests, owners, psi_w = [], [], [], [], [], []
        n_ev = 0
        self.n_impossible = 0
        for r, c in enumerate(cascades):
            v, t = c.nodes(), c.times()
            q, _ = _strict_counts(t)
            q[0] = 0
            a_idx = np.repeat(np.arange(c.size), q)
            starts = np.repeat(np.cumsum(q) - q, q)
            b_idx = np.arange(a_idx.size) - starts
            tau = t[a_idx] - t[b_idx]
            flats.append(v[b_idx] * p + v[a_idx])
            hs.append(kernel.h(tau))
            psi_w.append(np.outer(kernel.psi(tau), M[r]))
            hz = np.arange(1, c.size)
            self.n_impossible += int(np.sum(q[1:] == 0))
            local = np.full(c.size, -1)
            local[hz] = n_ev + np.arange(hz.size)
            evs.append(local[a_idx])
            dests.append(v[hz])
            owners.append(np.full(hz.size, r))
            n_ev += hz.size
        self.flat = np.concatenate(flats)
        self.e = np.concatenate(evs)
        self.h = np.concatenate(hs)
        self.dest = np.concatenate(dests).astype(np.int64)
        self.E = n_ev
        owner = np.concatenate(owners).astype(np.int64)
        self.Me = M[owner]  # (E, K)
        K = M.shape[1]
        pf = self.flat
        pw = np.vstack(psi_w) if psi_w else np.zeros((0, K))
        prior_psi = np.stack([np.bincount(pf, pw[:, k], minlength=p * p) for k in range(K)])
        # survival toward uninfected nodes: outer products per cascade
        Uw = np.zeros((len(cascades), p))
        Z = np.ones((len(cascades), p))
        for r, c in enumerate(cascades):
            v = c.nodes()
            Uw[r, v] = kernel.psi(c.window - c.times())
            Z[r, v] = 0.0
        unf = np.stack([(Uw * M[:, k:k + 1]).T @ Z for k in range(K)])
        self.psi_sum = prior_psi.reshape(K, p, p) + unf

    def rates(self, theta_flat, Ff):
        Z = np.einsum("pk,kp->p", self.Me[self.e], theta_flat[:, self.flat])
        x = self.h * Z
        if Ff is not None:
            x = x * Ff[self.flat]
        return Z, np.bincount(self.e, x, minlength=self.E)

    def logs(self, theta_flat, Ff, p):
        _, R = self.rates(theta_flat, Ff)
        with np.errstate(divide="ignore"):
            lr = np.log(np.where(R < TINY_RATE, 0.0, R))
        return np.bincount(self.dest, lr, minlength=p)

    def value_and_grad(self, theta_flat, Ff, p, want_F, strict=True):
        Z, R = self.rates(theta_flat, Ff)
        tiny = R < TINY_RATE
        if tiny.any():
            if strict:
                raise NumericalError("hazard sum vanishes for an infected node; gradient undefined")
            R = np.where(tiny, 1.0, R)
        cols = np.bincount(self.dest, np.log(R), minlength=p)
        if tiny.any():
            cols[np.unique(self.dest[tiny])] = -np.inf
        w = self.h / R[self.e]
        wt = w if Ff is None else w * Ff[self.flat]
        K = theta_flat.shape[0]
        Mp = self.Me[self.e]
        gT = np.stack([np.bincount(self.flat, wt * Mp[:, k], minlength=p * p) for k in range(K)])
        gF = np.bincount(self.flat, w * Z, minlength=p * p) if want_F else np.zeros(1)
        return cols, gT, gF


class ThetaEngine:
    """Dataset objective in ``Theta`` with per-cascade rates ``F * sum_k m_k Theta_k``.

    ``column_values`` returns the objective split by destination node, which
    is separable across columns.
    """

    def __init__(self, cascades: Sequence[CascadeRecord], p: int, kernel: TransmissionKernel,
                 topics: np.ndarray, threads: Optional[int] = 1, max_pairs: int = 1 << 18):
        if not cascades:
            raise ValueError("empty dataset")
        kernel = get_kernel(kernel)
        M = np.asarray(topics, dtype=float)
        self.p, self.kernel, self.n, self.K = p, kernel, len(cascades), M.shape[1]
        cost = [c.size * (c.size - 1) // 2 + 1 for c in cascades]
        self.bounds = _chunk_bounds(cost, 1 << 12, max_pairs)
        self.chunks = [_PairChunk(cascades[a:b], M[a:b], p, kernel) for a, b in self.bounds]
        self.mapper = _Mapper(threads)
        self.psi_mean = tree_sum([ch.psi_sum for ch in self.chunks]) / self.n
        self.n_impossible = sum(ch.n_impossible for ch in self.chunks)

    def _lin(self, theta, F):
        prod = theta * self.psi_mean
        if F is not None:
            prod = prod * F
        return prod.sum(axis=(0, 1))

    def column_values(self, theta, F=None) -> np.ndarray:
        """Objective contribution of each destination column (``+inf`` if infeasible)."""
        theta = np.asarray(theta, dtype=float)
        tf = theta.reshape(self.K, -1)
        Ff = None if F is None else np.asarray(F, dtype=float).ravel()
        logs = tree_sum(self.mapper.map(lambda ch: ch.logs(tf, Ff, self.p), self.chunks))
        lin = self._lin(theta, F)
        out = lin - logs / self.n
        out[np.isneginf(logs)] = np.inf
        if self.n_impossible:
            out[:] = np.inf
        return out

    def value(self, theta, F=None) -> float:
        return float(tree_sum(list(self.column_values(theta, F))))

    def value_and_grad(self, theta, F=None, want_F: bool = False, strict: bool = True):
        """Return ``(column_values, grad_theta, grad_F)``; ``grad_F`` is ``None`` unless requested.

        With ``strict=False`` infeasible columns get value ``+inf`` (and a
        meaningless gradient) instead of raising.
        """
        theta = np.asarray(theta, dtype=float)
        if self.n_impossible:
            raise NumericalError("dataset contains an infection with no earlier infector")
        p, K = self.p, self.K
        tf = theta.reshape(K, -1)
        Ff = None if F is None else np.asarray(F, dtype=float).ravel()
        cols, gT, gF = _reduce(self.mapper.map(
            lambda ch: ch.value_and_grad(tf, Ff, p, want_F, strict), self.chunks))
        colv = self._lin(theta, F) - cols / self.n
        lin_grad = self.psi_mean if F is None else self.psi_mean * F
        grad = lin_grad - gT.reshape(K, p, p) / self.n
        gradF = None
        if want_F:
            gradF = (theta * self.psi_mean).sum(axis=0) - gF.reshape(p, p) / self.n
        return colv, grad, gradF
