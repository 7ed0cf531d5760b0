"""Synthetic ground truth and cascade generation.

Factors are drawn row by row: each node picks a few topics and gets
``Unif(low, high) * zeta`` on them (``zeta = boost_factor`` with probability
``boost_prob``, else 1); columns are then rescaled so that ``B1`` and ``B2``
have equal column sums. A cascade picks a source with nonzero influence,
draws its topic mix from ``Dirichlet(B1[source])`` and spreads by the
first-infection process over ``A = B1 diag(m) B2^T``.

Randomness comes from one root seed; the factors and each cascade use
independent child streams of ``numpy.random.SeedSequence``, so cascade ``i``
is the same no matter how many cascades are generated or in what order.
"""
from __future__ import annotations

import heapq
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .exceptions import DataError
from .kernels import get_kernel, TransmissionKernel
from .model import CascadeRecord, FactorPair, ModelDims, check_topic_weights, diffusion_matrix

__all__ = [
    "SyntheticConfig",
    "generate_factors",
    "sample_topic_weights",
    "simulate_cascade",
    "generate_cascades",
    "generate_dataset",
    "disjoint_receptivity_factors",
]

_FACTOR_STREAM = 0
_CASCADE_STREAM = 1


@dataclass
class SyntheticConfig:
    p: int = 20
    K: int = 3
    n: int = 1000
    T: float = 1.0
    kernel: str = "exp"
    topics_per_node: Tuple[int, int] = (2, 3)
    magnitude_low: float = 0.8
    magnitude_high: float = 1.8
    boost_factor: float = 3.0
    boost_prob: float = 0.3
    sparsity: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        ModelDims(self.p, self.K)
        self.topics_per_node = tuple(int(x) for x in self.topics_per_node)
        lo, hi = self.topics_per_node
        if not 1 <= lo <= hi:
            raise ValueError(f"invalid topics_per_node range {self.topics_per_node}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if not 0 <= self.boost_prob <= 1:
            raise ValueError("boost_prob must be a probability")
        if self.magnitude_low > self.magnitude_high:
            raise ValueError("magnitude_low must not exceed magnitude_high")
        if self.sparsity is not None and not 1 <= self.sparsity <= self.p:
            raise ValueError("sparsity must be in [1, p]")
        get_kernel(self.kernel)

    @property
    def dims(self) -> ModelDims:
        return ModelDims(self.p, self.K)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["topics_per_node"] = list(self.topics_per_node)
        return d


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(key)))


def _magnitudes(cfg: SyntheticConfig, rng, size):
    vals = rng.uniform(cfg.magnitude_low, cfg.magnitude_high, size=size)
    boost = rng.random(size) < cfg.boost_prob
    return np.where(boost, vals * cfg.boost_factor, vals)


def _draw_matrix(cfg: SyntheticConfig, rng) -> np.ndarray:
    p, K = cfg.p, cfg.K
    B = np.zeros((p, K))
    if cfg.sparsity is not None:
        # every column gets exactly `sparsity` nonzeros
        for k in range(K):
            rows = rng.choice(p, size=cfg.sparsity, replace=False)
            B[rows, k] = _magnitudes(cfg, rng, cfg.sparsity)
        return B
    lo, hi = cfg.topics_per_node
    hi = min(hi, K)
    lo = min(lo, hi)
    for j in range(p):
        r = int(rng.integers(lo, hi + 1))
        cols = rng.choice(K, size=r, replace=False)
        B[j, cols] = _magnitudes(cfg, rng, r)
    return B


def generate_factors(config: SyntheticConfig) -> FactorPair:
    """Draw ``B1`` and ``B2`` and balance their column sums."""
    rng = _stream(config.seed, _FACTOR_STREAM)
    B1 = _draw_matrix(config, rng)
    B2 = _draw_matrix(config, rng)
    s1, s2 = B1.sum(axis=0), B2.sum(axis=0)
    ok = (s1 > 0) & (s2 > 0)
    g = np.ones(config.K)
    g[ok] = np.sqrt(s2[ok] / s1[ok])
    return FactorPair(B1 * g, B2 / g)


def sample_topic_weights(factors: FactorPair, source: int, rng: np.random.Generator) -> np.ndarray:
    """Dirichlet draw with concentration ``B1[source]`` (zero entries stay 0)."""
    alpha = factors.B1[source]
    support = alpha > 0
    if not support.any():
        raise DataError(f"node {source} has no influence on any topic")
    g = np.zeros_like(alpha)
    g[support] = rng.standard_gamma(alpha[support])
    total = g.sum()
    if total <= 0:
        # all gamma draws underflowed; fall back to the largest concentration
        g[np.argmax(alpha)] = 1.0
        total = 1.0
    w = g / total
    return w / w.sum()


def _delays(kernel: TransmissionKernel, alpha: np.ndarray, rng) -> np.ndarray:
    u = 1.0 - rng.random(alpha.size)  # (0, 1]
    u = np.where(u >= 1.0, np.nextafter(1.0, 0.0), u)
    return kernel.sample_delay(alpha, u)


def simulate_cascade(A, kernel, T: float, source: int, rng: np.random.Generator) -> List[Tuple[int, float]]:
    """Event-driven first-infection simulation.

    Returns ``(node, time)`` events, sorted by time, with the source at 0.
    """
    kernel = get_kernel(kernel)
    A = np.asarray(A, dtype=float)
    p = A.shape[0]
    if not 0 <= source < p:
        raise DataError(f"source {source} out of range")
    infected = np.zeros(p, dtype=bool)
    best = np.full(p, np.inf)
    best[source] = 0.0
    heap = [(0.0, int(source))]
    events = []
    while heap:
        t, i = heapq.heappop(heap)
        if infected[i] or t > best[i]:
            continue
        if t > T:
            break
        infected[i] = True
        events.append((i, float(t)))
        targets = np.flatnonzero((A[i] > 0) & ~infected)
        targets = targets[targets != i]
        if targets.size == 0:
            continue
        arrivals = t + _delays(kernel, A[i, targets], rng)
        for j, tj in zip(targets, arrivals):
            if tj < best[j] and tj <= T:
                best[j] = tj
                heapq.heappush(heap, (float(tj), int(j)))
    return events


def _one_cascade(factors: FactorPair, kernel, T: float, seed: int, index: int,
                 topics=None) -> CascadeRecord:
    rng = _stream(seed, _CASCADE_STREAM, index)
    candidates = np.flatnonzero(factors.B1.sum(axis=1) > 0)
    source = int(rng.choice(candidates))
    m = sample_topic_weights(factors, source, rng) if topics is None else topics
    A = diffusion_matrix(factors, m)
    events = simulate_cascade(A, kernel, T, source, rng)
    return CascadeRecord(f"c{index}", tuple(m), tuple(events), T)


def generate_cascades(factors: FactorPair, n: int, T: float = 1.0, kernel="exp", seed: int = 0,
                      start: int = 0, topics=None) -> List[CascadeRecord]:
    """Simulate cascades ``start .. start + n - 1`` from given factors.

    ``topics`` optionally fixes the weights as an ``(n, K)`` array instead of
    drawing them from the source's influence row.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    kernel = get_kernel(kernel)
    if topics is not None:
        topics = np.asarray(topics, dtype=float)
        if topics.shape != (n, factors.K):
            raise ValueError(f"topics must have shape ({n}, {factors.K})")
        for w in topics:
            check_topic_weights(w, factors.K)
        return [_one_cascade(factors, kernel, T, seed, start + r, tuple(topics[r])) for r in range(n)]
    return [_one_cascade(factors, kernel, T, seed, i) for i in range(start, start + n)]


def generate_dataset(config: SyntheticConfig):
    """Ground-truth factors and ``config.n`` simulated cascades."""
    truth = generate_factors(config)
    return truth, generate_cascades(truth, config.n, config.T, config.kernel, config.seed)


def disjoint_receptivity_factors(p: int, K: int, influence=(0.5, 1.0), receptivity=(1.0, 2.0),
                                 seed: int = 0) -> FactorPair:
    """Factors whose receptivity columns have disjoint supports.

    Nodes are split into ``K`` contiguous groups; node ``i`` is receptive only
    to the topic of its group, while influence is dense. Under such factors
    the topic of a cascade is identifiable from who got infected.
    """
    ModelDims(p, K)
    rng = _stream(seed, _FACTOR_STREAM)
    B1 = rng.uniform(*influence, size=(p, K))
    B2 = np.zeros((p, K))
    groups = np.array_split(np.arange(p), K)
    for k, g in enumerate(groups):
        B2[g, k] = rng.uniform(*receptivity, size=g.size)
    return FactorPair(B1, B2)
