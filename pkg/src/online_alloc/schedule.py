"""Step-size and normalization tables for the exponentiated subgradient method.

Two integers drive everything: the warm-up length ``ne = round(n * eps)`` (at
least 1) and the number of levels ``L = ceil(log2(1 / eps))``. Level functions
``kappa`` (distance to the end of the horizon) and ``eta`` (distance from the
warm-up) are computed with these rounded values and clamped to ``[1, L]``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np


def warmup_length(n: int, eps: float) -> int:
    return max(1, int(math.floor(n * eps + 0.5)))


def num_levels(eps: float) -> int:
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    return max(1, math.ceil(math.log2(1.0 / eps) - 1e-12))


def _kappa(t: int, n: int, ne: int, L: int) -> int:
    q = max(n - t, 0) // ne
    return min(max(q.bit_length(), 1), L)


def kappa(t: int, n: int, eps: float) -> int:
    """Level ``k`` with ``n - ne*2**k < t <= n - ne*2**(k-1)``, clamped to ``L``."""
    ne = warmup_length(n, eps)
    if not 1 <= t <= n - ne:
        raise ValueError(f"kappa is defined for 1 <= t <= {n - ne}, got {t}")
    return _kappa(t, n, ne, num_levels(eps))


def eta(t: int, n: int, eps: float) -> int:
    """Level ``h`` with ``ne*2**(h-1) < t <= ne*2**h``, clamped to ``L``; equals ``kappa(n-t+1)``."""
    ne = warmup_length(n, eps)
    if not ne < t <= n:
        raise ValueError(f"eta is defined for {ne} < t <= {n}, got {t}")
    return _kappa(n - t + 1, n, ne, num_levels(eps))


def theta(h: int, eps: float) -> float:
    if h < 0 or not 0 < eps < 1:
        raise ValueError("theta needs h >= 0 and eps in (0, 1)")
    return 2.0 ** (-(h + 1) / 2) * math.sqrt(eps)


def breakpoint(h: int, n: int, eps: float) -> int:
    """Prefix length used for the level-``h`` estimates: ``ne * 2**h`` capped at ``n // 2``."""
    ne = warmup_length(n, eps)
    return min(ne * 2**h, max(ne, n // 2))


@dataclass(frozen=True, eq=False)
class Schedule:
    """Precomputed tables, indexed directly by the 1-based step ``t``.

    ``beta`` and ``beta_p`` are defined on ``ne+1 .. n+1``; ``alpha`` on
    ``ne+1 .. n-ne``. Entries outside those ranges are ``nan``.
    """

    n: int
    eps: float
    gamma: float
    ne: int
    L: int
    nu: float
    nu_p: float
    alpha: np.ndarray
    beta: np.ndarray
    beta_p: np.ndarray
    kappa: np.ndarray
    eta: np.ndarray
    breakpoints: tuple

    @property
    def horizon(self) -> int:
        """Last step ``n - ne`` with its own (unfrozen) parameters."""
        return self.n - self.ne

    def alpha_at(self, t: int) -> float:
        """``alpha_t``, clamped to the nearest defined entry outside its range."""
        lo, hi = self.ne + 1, max(self.ne + 1, self.n - self.ne)
        return float(self.alpha[min(max(t, lo), hi)])


@functools.lru_cache(maxsize=64)
def build_schedule(n: int, eps: float, gamma: float) -> Schedule:
    """Tables for ``(n, eps, gamma)``; results are immutable and cached."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if n * eps < 1 - 1e-12:
        raise ValueError(f"schedule undefined: n * eps = {n * eps} < 1")
    ne = warmup_length(n, eps)
    L = num_levels(eps)
    root = math.sqrt(eps)
    scale = eps / (gamma * n)

    kap = np.zeros(n + 2, dtype=int)
    et = np.zeros(n + 2, dtype=int)
    for t in range(1, n + 1):
        kap[t] = _kappa(t, n, ne, L) if t <= n - ne else 0
        et[t] = _kappa(n - t + 1, n, ne, L) if t > ne else 0

    alpha = np.full(n + 2, np.nan)
    beta = np.full(n + 2, np.nan)
    beta_p = np.full(n + 2, np.nan)
    last = max(n - ne, ne + 1)
    for t in range(ne + 1, last + 1):
        h = _kappa(n - t + 1, n, ne, L)
        k = _kappa(t, n, ne, L)
        alpha[t] = (1 - 2 ** (-h / 2) * root) / (1 + 2 ** (-h / 2 + 1) * root)
        beta[t] = scale * (1 + 2 ** (-k / 2) * root)
        beta_p[t] = scale * (1 - 2 ** (-k / 2) * root) * alpha[t]
    beta[last + 1 : n + 2] = beta[last]
    beta_p[last + 1 : n + 2] = beta_p[last]

    bps = tuple(sorted({breakpoint(h, n, eps) for h in range(L)}))
    for arr in (alpha, beta, beta_p, kap, et):
        arr.setflags(write=False)
    return Schedule(
        n=n,
        eps=eps,
        gamma=gamma,
        ne=ne,
        L=L,
        nu=math.log1p(eps) / gamma,
        nu_p=-math.log1p(-eps) / gamma,
        alpha=alpha,
        beta=beta,
        beta_p=beta_p,
        kappa=kap,
        eta=et,
        breakpoints=bps,
    )
