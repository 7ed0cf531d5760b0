"""Column-wise projected/proximal gradient for objectives in ``Theta`` (K x p x p).

The objective separates over destination columns ``i``: the variables
``Theta[:, :, i]`` only enter the terms for node ``i``. Each column keeps its
own step size (halved until the sufficient-decrease test passes) and its own
convergence flag, which makes the joint run equal to solving the columns
one at a time.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np

from ._engine import ThetaEngine
from .exceptions import NumericalError


@dataclass
class ThetaResult:
    theta: np.ndarray
    n_iter: int
    converged: np.ndarray
    objective: List[float] = field(default_factory=list)


def penalty_columns(theta, lam: float, penalty: str) -> np.ndarray:
    if lam == 0 or penalty == "none":
        return np.zeros(theta.shape[2])
    if penalty == "l1":
        return lam * theta.sum(axis=(0, 1))
    if penalty == "group":
        return lam * np.sqrt((theta ** 2).sum(axis=0)).sum(axis=0)
    raise ValueError(f"unknown penalty {penalty!r}")


def prox(Z, thresh, penalty: str):
    """Proximal map for the nonnegative ``l1`` / group penalties.

    ``thresh`` broadcasts along the last (column) axis.
    """
    if penalty == "none":
        return np.maximum(Z, 0.0)
    if penalty == "l1":
        return np.maximum(Z - thresh, 0.0)
    if penalty == "group":
        norms = np.sqrt((Z ** 2).sum(axis=0, keepdims=True))
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(norms > 0, np.maximum(0.0, 1.0 - thresh / norms), 0.0)
        return np.maximum(Z * scale, 0.0)
    raise ValueError(f"unknown penalty {penalty!r}")


def constant_start(engine: ThetaEngine) -> float:
    """Best constant rate: maximizes the likelihood over ``Theta_k = a * 1``."""
    K, p = engine.K, engine.p
    ones = np.ones((K, p, p))
    idx = np.arange(p)
    ones[:, idx, idx] = 0.0
    n_events = sum(ch.E for ch in engine.chunks)
    lin = float((engine.psi_mean * ones).sum())
    if lin <= 0 or n_events == 0:
        return 1.0
    return n_events / engine.n / lin


def solve_theta(engine: ThetaEngine, lam: float = 0.0, penalty: str = "none", theta0=None,
                F=None, tol: float = 1e-6, max_iters: int = 500, eta0: float = 1.0,
                columns=None, support=None, accelerate: bool = True,
                step_growth: float = 1.2) -> ThetaResult:
    """Minimize ``f(Theta) + lam * penalty`` over ``Theta >= 0`` with zero diagonals.

    Each column runs its own proximal gradient iteration with a backtracking
    step (halved until the quadratic upper bound holds). With ``accelerate``
    the gradient is taken at a momentum point and the momentum is reset
    whenever a step would raise the column objective, so the objective is
    nonincreasing either way. A column stops once an accepted step moves no
    entry by more than ``tol``.

    ``columns`` restricts the solve to the listed destination columns (the
    rest stay at ``theta0``). ``support`` is an optional boolean ``p x p``
    pattern outside which ``Theta`` is held at zero.
    """
    K, p = engine.K, engine.p
    if theta0 is None:
        # pairs that never enter the likelihood start (and stay) at 0; every
        # hazard pair also has a positive survival exposure
        theta = np.where(engine.psi_mean > 0, constant_start(engine), 0.0)
    else:
        theta = np.array(theta0, dtype=float)
    offdiag = ~np.eye(p, dtype=bool)
    allowed = offdiag if support is None else offdiag & np.asarray(support, dtype=bool)
    theta = np.where(allowed[None], np.maximum(theta, 0.0), 0.0)

    active = np.ones(p, dtype=bool)
    if columns is not None:
        active[:] = False
        active[np.asarray(columns)] = True
    eta = np.full(p, float(eta0))
    fx = engine.column_values(theta, F)
    if not np.all(np.isfinite(fx[active])):
        raise NumericalError("objective is infinite at the starting point")
    Fx = fx + penalty_columns(theta, lam, penalty)
    converged = ~active
    history = [float(Fx.sum())]
    prev = theta.copy()
    tk = np.ones(p)
    it = 0
    for it in range(1, max_iters + 1):
        if not active.any():
            it -= 1
            break
        if accelerate:
            tn = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk ** 2))
            beta = np.where(active, (tk - 1.0) / tn, 0.0)
            Y = np.where(allowed[None], np.maximum(theta + beta * (theta - prev), 0.0), 0.0)
        else:
            tn = tk
            Y = theta
        fy, G, _ = engine.value_and_grad(Y, F, strict=False)
        bad_y = active & ~np.isfinite(fy)
        if bad_y.any():
            # momentum point left the domain: fall back to the current iterate
            Y = Y.copy()
            Y[:, :, bad_y] = theta[:, :, bad_y]
            fy, G, _ = engine.value_and_grad(Y, F, strict=False)
            tn[bad_y] = 1.0
        cand = theta.copy()
        fc = fx.copy()
        pending = active.copy()
        for _ in range(60):
            step = np.where(pending, eta, 0.0)
            trial = prox(Y - step * G, lam * step, penalty)
            trial = np.where(allowed[None], trial, 0.0)
            cand[:, :, pending] = trial[:, :, pending]
            fnew = engine.column_values(cand, F)
            d = cand - Y
            quad = fy + (G * d).sum(axis=(0, 1)) + (d ** 2).sum(axis=(0, 1)) / (2 * np.maximum(eta, 1e-300))
            ok = np.isfinite(fnew) & (fnew <= quad + 1e-12 * np.maximum(1.0, np.abs(quad)))
            fc[pending & ok] = fnew[pending & ok]
            bad = pending & ~ok
            if not bad.any():
                break
            eta[bad] *= 0.5
            pending = bad
        else:
            # columns that never passed keep the old iterate and stop
            cand[:, :, pending] = theta[:, :, pending]
            fc[pending] = fx[pending]
            active &= ~pending
        Fc = fc + penalty_columns(cand, lam, penalty)
        worse = active & (Fc > Fx)
        if worse.any():
            # restart: reject the step and drop the momentum for these columns
            cand[:, :, worse] = theta[:, :, worse]
            Fc[worse], fc[worse] = Fx[worse], fx[worse]
            tn[worse] = 1.0
        change = np.abs(cand - theta).max(axis=(0, 1))
        prev = np.where(worse, cand, theta)
        theta, fx, Fx, tk = cand, fc, Fc, tn
        done = active & ~worse & (change < tol)
        converged = converged | done
        active &= ~done
        eta = np.where(active, eta * step_growth, eta)
        history.append(float(Fx.sum()))
    return ThetaResult(theta, it, converged, history)
