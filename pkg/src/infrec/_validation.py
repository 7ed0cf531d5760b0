"""Input checks shared by the estimators."""
from __future__ import annotations

from typing import Optional

import numpy as np

from .exceptions import DataError, ShapeError
from .model import CascadeRecord, FactorPair, ModelDims


def check_cascades(X, p: Optional[int] = None, K: Optional[int] = None,
                   need_topics: bool = True) -> list:
    """Validate a sequence of cascades and return it as a list.

    Checks node range against ``p`` and topic length against ``K``. With
    ``need_topics`` every cascade must carry topic weights.
    """
    if isinstance(X, CascadeRecord):
        X = [X]
    cascades = list(X)
    if not cascades:
        raise DataError("no cascades given")
    for c in cascades:
        if not isinstance(c, CascadeRecord):
            raise DataError(f"expected CascadeRecord, got {type(c).__name__}")
        if need_topics and c.topics is None:
            raise DataError(f"cascade {c.id!r} has no topic weights")
        c.validate(p, K if c.topics is not None else None)
    return cascades


def check_factors_like(factors, dims: ModelDims) -> FactorPair:
    if not isinstance(factors, FactorPair):
        B1, B2 = factors
        factors = FactorPair(np.asarray(B1, dtype=float), np.asarray(B2, dtype=float))
    if factors.B1.shape != (dims.p, dims.K):
        raise ShapeError(f"factors must be {dims.p}x{dims.K}, got {factors.B1.shape}")
    return factors


def num_nodes(cascades, n_nodes: Optional[int] = None) -> int:
    """``n_nodes`` if given, else one more than the largest node index (at least 2)."""
    if n_nodes is not None:
        return int(n_nodes)
    return max(2, 1 + max(int(c.nodes().max()) for c in cascades))
