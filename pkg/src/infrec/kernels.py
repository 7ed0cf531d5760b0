"""Transmission kernels: exponential and Rayleigh delay distributions.

Both families have a log-survival and a hazard that are linear in the rate,

    log S(tau; a) = -a * psi(tau),      H(tau; a) = a * h(tau),

which the likelihood code exploits. ``psi`` and ``h`` are polynomials in
``tau = t_dest - t_src`` and are exposed as separable terms
``sum_d f_dest(t_dest) * f_src(t_src)`` so that sums over earlier infectors
reduce to prefix sums.
"""
from __future__ import annotations

from typing import Callable, List, Tuple, Union

import numpy as np

from .exceptions import DataError

__all__ = ["TransmissionKernel", "Exponential", "Rayleigh", "get_kernel", "KERNELS"]

_Term = Tuple[Callable[[np.ndarray], np.ndarray], Callable[[np.ndarray], np.ndarray]]


def _one(t):
    return np.ones_like(t)


def _ident(t):
    return t


def _neg(t):
    return -t


def _half_sq(t):
    return 0.5 * t * t


def _check_tau(tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise DataError("transmission delay must be >= 0")
    return tau


class TransmissionKernel:
    """Base class; subclasses define ``psi``, ``h`` and their separable terms."""

    name: str = ""
    psi_terms: List[_Term] = []
    h_terms: List[_Term] = []

    def psi(self, tau):
        raise NotImplementedError

    def h(self, tau):
        raise NotImplementedError

    def log_survival(self, tau, alpha):
        tau = _check_tau(tau)
        return -np.asarray(alpha, dtype=float) * self.psi(tau)

    def survival(self, tau, alpha):
        return np.exp(self.log_survival(tau, alpha))

    def hazard(self, tau, alpha):
        tau = _check_tau(tau)
        return np.asarray(alpha, dtype=float) * self.h(tau)

    def log_hazard(self, tau, alpha):
        tau = _check_tau(tau)
        with np.errstate(divide="ignore"):
            return np.log(np.asarray(alpha, dtype=float)) + np.log(self.h(tau))

    def density(self, tau, alpha):
        return self.hazard(tau, alpha) * self.survival(tau, alpha)

    def sample_delay(self, alpha, u):
        """Inverse-survival sampling: the returned delay has ``survival == u``."""
        u = np.asarray(u, dtype=float)
        if np.any((u <= 0) | (u >= 1)):
            raise DataError("uniform variate must lie in (0, 1)")
        alpha = np.asarray(alpha, dtype=float)
        if np.any(alpha <= 0):
            raise DataError("rate must be positive to sample a delay")
        return self._invert(alpha, u)

    def _invert(self, alpha, u):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"

    def __eq__(self, other):
        return type(self) is type(other)

    def __hash__(self):
        return hash(type(self))


class Exponential(TransmissionKernel):
    """``l(tau; a) = a exp(-a tau)``; constant hazard ``a``."""

    name = "exp"
    psi_terms = [(_ident, _one), (_one, _neg)]
    h_terms = [(_one, _one)]

    def psi(self, tau):
        return np.asarray(tau, dtype=float)

    def h(self, tau):
        return np.ones_like(np.asarray(tau, dtype=float))

    def _invert(self, alpha, u):
        return -np.log(u) / alpha


class Rayleigh(TransmissionKernel):
    """``l(tau; a) = a tau exp(-a tau^2 / 2)``; hazard ``a tau``."""

    name = "rayleigh"
    psi_terms = [(_half_sq, _one), (_ident, _neg), (_one, _half_sq)]
    h_terms = [(_ident, _one), (_one, _neg)]

    def psi(self, tau):
        tau = np.asarray(tau, dtype=float)
        return 0.5 * tau * tau

    def h(self, tau):
        return np.asarray(tau, dtype=float)

    def _invert(self, alpha, u):
        return np.sqrt(-2.0 * np.log(u) / alpha)


KERNELS = {"exp": Exponential, "exponential": Exponential, "rayleigh": Rayleigh}


def get_kernel(kernel: Union[str, TransmissionKernel]) -> TransmissionKernel:
    if isinstance(kernel, TransmissionKernel):
        return kernel
    try:
        return KERNELS[str(kernel).lower()]()
    except KeyError:
        raise ValueError(f"unknown kernel {kernel!r}; choose 'exp' or 'rayleigh'") from None
