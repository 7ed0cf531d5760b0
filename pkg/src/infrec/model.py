"""Core value types and structural operations of the influence-receptivity model.

A cascade ``c`` with topic weights ``m`` spreads over the diffusion matrix

    A = B1 @ diag(m) @ B2.T

where ``B1`` (influence) and ``B2`` (receptivity) are nonnegative ``p x K``
matrices. Entry ``A[j, i]`` is the transmission rate from node ``j`` to
node ``i``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from .exceptions import DataError, ShapeError

__all__ = [
    "ModelDims",
    "CascadeRecord",
    "FactorPair",
    "diffusion_matrix",
    "topic_matrices",
    "hard_threshold",
    "subspace_distance",
    "project_simplex",
    "balance_factors",
    "check_topic_weights",
    "check_mask",
]

_SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class ModelDims:
    p: int
    K: int

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 2:
            raise ValueError(f"p must be an integer >= 2, got {self.p!r}")
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be a positive integer, got {self.K!r}")
        if self.K > self.p:
            raise ValueError(f"K={self.K} exceeds p={self.p}")


def check_topic_weights(w, K: Optional[int] = None) -> np.ndarray:
    """Validate a topic-weight vector and return it as a float array."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise DataError(f"topic weights must be a nonempty vector, got shape {w.shape}")
    if K is not None and w.size != K:
        raise ShapeError(f"expected {K} topic weights, got {w.size}")
    if not np.all(np.isfinite(w)) or np.any(w < 0) or np.any(w > 1):
        raise DataError("topic weights must lie in [0, 1]")
    if abs(w.sum() - 1.0) > _SIMPLEX_TOL:
        raise DataError(f"topic weights must sum to 1, got {w.sum()!r}")
    return w


@dataclass(frozen=True)
class CascadeRecord:
    """One observed cascade.

    ``events`` holds ``(node, time)`` pairs sorted by time with the source at
    time 0; nodes that do not appear are uninfected within ``window``.
    ``topics`` may be ``None`` for cascades whose topic mix is unknown.
    """

    id: str
    topics: Optional[Tuple[float, ...]]
    events: Tuple[Tuple[int, float], ...]
    window: float = 1.0

    def __post_init__(self):
        events = tuple((int(v), float(t)) for v, t in self.events)
        object.__setattr__(self, "events", events)
        if self.topics is not None:
            object.__setattr__(self, "topics", tuple(float(x) for x in self.topics))
        self.validate()

    def validate(self, p: Optional[int] = None, K: Optional[int] = None) -> None:
        if not (self.window > 0 and np.isfinite(self.window)):
            raise DataError(f"cascade {self.id!r}: window must be positive")
        if not self.events:
            raise DataError(f"cascade {self.id!r}: no events")
        nodes = [v for v, _ in self.events]
        times = [t for _, t in self.events]
        if len(set(nodes)) != len(nodes):
            raise DataError(f"cascade {self.id!r}: duplicate node in events")
        if any(v < 0 for v in nodes) or (p is not None and any(v >= p for v in nodes)):
            raise DataError(f"cascade {self.id!r}: node index out of range")
        if times[0] != 0.0 or any(t == 0.0 for t in times[1:]):
            raise DataError(f"cascade {self.id!r}: exactly one event (the source) must be at t=0")
        if any(b < a for a, b in zip(times, times[1:])):
            raise DataError(f"cascade {self.id!r}: events not sorted by time")
        if any(not np.isfinite(t) or t > self.window for t in times):
            raise DataError(f"cascade {self.id!r}: event time outside [0, window]")
        if self.topics is not None:
            check_topic_weights(self.topics, K)

    @property
    def source(self) -> int:
        return self.events[0][0]

    @property
    def size(self) -> int:
        return len(self.events)

    def nodes(self) -> np.ndarray:
        return np.fromiter((v for v, _ in self.events), dtype=np.int64, count=len(self.events))

    def times(self) -> np.ndarray:
        return np.fromiter((t for _, t in self.events), dtype=float, count=len(self.events))

    def infection_times(self, p: int) -> np.ndarray:
        """Length-``p`` vector of infection times, ``inf`` for uninfected nodes."""
        t = np.full(p, np.inf)
        t[self.nodes()] = self.times()
        return t

    def with_topics(self, topics) -> "CascadeRecord":
        return CascadeRecord(self.id, tuple(np.asarray(topics, dtype=float)), self.events, self.window)


@dataclass(frozen=True)
class FactorPair:
    """Influence matrix ``B1`` and receptivity matrix ``B2``, both ``p x K``."""

    B1: np.ndarray
    B2: np.ndarray
    _dims: ModelDims = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        B1 = np.array(self.B1, dtype=float)
        B2 = np.array(self.B2, dtype=float)
        if B1.ndim != 2 or B1.shape != B2.shape:
            raise ShapeError(f"B1 and B2 must be equal-shaped matrices, got {B1.shape} and {B2.shape}")
        if not (np.all(np.isfinite(B1)) and np.all(np.isfinite(B2))):
            raise DataError("factor matrices must be finite")
        if np.any(B1 < 0) or np.any(B2 < 0):
            raise DataError("factor matrices must be nonnegative")
        B1.setflags(write=False)
        B2.setflags(write=False)
        object.__setattr__(self, "B1", B1)
        object.__setattr__(self, "B2", B2)

    @property
    def p(self) -> int:
        return self.B1.shape[0]

    @property
    def K(self) -> int:
        return self.B1.shape[1]

    @property
    def stacked(self) -> np.ndarray:
        return np.hstack([self.B1, self.B2])

    def thetas(self) -> np.ndarray:
        """Rank-one topic matrices as a ``(K, p, p)`` array."""
        return np.einsum("jk,ik->kji", self.B1, self.B2)

    def __eq__(self, other):
        if not isinstance(other, FactorPair):
            return NotImplemented
        return np.array_equal(self.B1, other.B1) and np.array_equal(self.B2, other.B2)

    def __hash__(self):
        return hash((self.B1.tobytes(), self.B2.tobytes()))


def check_mask(mask, p: int, drop_identity: bool = False) -> Optional[np.ndarray]:
    """Validate a friendship mask (binary or numeric, nonnegative, zero diagonal).

    With ``drop_identity`` a mask of all ones off the diagonal is returned as
    ``None``, since it leaves every diffusion matrix unchanged.
    """
    if mask is None:
        return None
    F = np.array(mask, dtype=float)
    if F.shape != (p, p):
        raise ShapeError(f"mask must be {p}x{p}, got {F.shape}")
    if not np.all(np.isfinite(F)) or np.any(F < 0):
        raise DataError("mask entries must be finite and nonnegative")
    np.fill_diagonal(F, 0.0)
    if drop_identity and np.all(F + np.eye(p) == 1.0):
        return None
    return F


def diffusion_matrix(factors: FactorPair, topics, mask=None, drop_diagonal: bool = True) -> np.ndarray:
    """Per-cascade diffusion matrix ``B1 diag(w) B2^T`` (optionally masked)."""
    w = np.asarray(topics, dtype=float)
    if w.ndim != 1 or w.size != factors.K:
        raise ShapeError(f"expected {factors.K} topic weights, got shape {w.shape}")
    A = (factors.B1 * w) @ factors.B2.T
    if mask is not None:
        F = np.asarray(mask, dtype=float)
        if F.shape != A.shape:
            raise ShapeError(f"mask must be {A.shape}, got {F.shape}")
        A = A * F
    if drop_diagonal:
        np.fill_diagonal(A, 0.0)
    return A


def topic_matrices(factors: FactorPair, drop_diagonal: bool = True) -> np.ndarray:
    """Per-topic diffusion matrices ``B1 M_(k) B2^T`` stacked as ``(K, p, p)``."""
    out = factors.thetas()
    if drop_diagonal:
        idx = np.arange(factors.p)
        out[:, idx, idx] = 0.0
    return out


def hard_threshold(M, s: int, per_column: bool = False) -> np.ndarray:
    """Keep the ``s`` largest entries of ``M`` and zero the rest.

    Ties at the cut-off go to the smaller column-major linear index. With
    ``per_column`` the budget ``s`` applies to each column separately.
    """
    M = np.asarray(M, dtype=float)
    if s < 1:
        raise ValueError(f"s must be >= 1, got {s}")
    if per_column:
        if M.ndim != 2:
            raise ShapeError("per-column thresholding requires a matrix")
        return np.column_stack([hard_threshold(M[:, k], s) for k in range(M.shape[1])]) if M.shape[1] else M.copy()
    flat = M.ravel(order="F")
    if np.count_nonzero(flat) <= s:
        return M.copy()
    # stable sort of -values keeps the lower index first among equal values
    keep = np.argsort(-flat, kind="stable")[:s]
    out = np.zeros_like(flat)
    out[keep] = flat[keep]
    return out.reshape(M.shape, order="F")


def subspace_distance(B: FactorPair, Bstar: FactorPair) -> float:
    """Squared distance ``||B1 - B1*||_F^2 + ||B2 - B2*||_F^2``."""
    if B.B1.shape != Bstar.B1.shape:
        raise ShapeError(f"factor shapes differ: {B.B1.shape} vs {Bstar.B1.shape}")
    return float(np.sum((B.B1 - Bstar.B1) ** 2) + np.sum((B.B2 - Bstar.B2) ** 2))


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-and-shift)."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ShapeError("project_simplex expects a nonempty vector")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    shift = css[rho] / (rho + 1.0)
    w = np.maximum(v - shift, 0.0)
    return w / w.sum()


def balance_factors(factors: FactorPair, norm: str = "l2") -> FactorPair:
    """Rescale each column pair so both columns have equal ``l1`` or ``l2`` norm.

    The products ``b1_k b2_k^T`` are left unchanged.
    """
    ord_ = {"l1": 1, "l2": 2}[norm]
    n1 = np.linalg.norm(factors.B1, ord=ord_, axis=0)
    n2 = np.linalg.norm(factors.B2, ord=ord_, axis=0)
    ok = (n1 > 0) & (n2 > 0)
    gamma = np.ones_like(n1)
    gamma[ok] = np.sqrt(n2[ok] / n1[ok])
    return FactorPair(factors.B1 * gamma, factors.B2 / gamma)


def stack_topics(cascades: Sequence[CascadeRecord], K: Optional[int] = None) -> np.ndarray:
    """Topic weights of ``cascades`` as an ``(n, K)`` array."""
    rows = []
    for c in cascades:
        if c.topics is None:
            raise DataError(f"cascade {c.id!r} has no topic weights")
        rows.append(c.topics)
    M = np.asarray(rows, dtype=float)
    if K is not None and M.shape[1] != K:
        raise ShapeError(f"expected {K} topics per cascade, got {M.shape[1]}")
    return M


def infer_num_nodes(cascades: Iterable[CascadeRecord]) -> int:
    return 1 + max(max(c.nodes()) for c in cascades)
