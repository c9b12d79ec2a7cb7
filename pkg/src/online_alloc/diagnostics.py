"""Empirical checks of the probabilistic analysis behind ESA.

The sequences here are built from a fixed offline solution ``x*`` (taken from
:func:`online_alloc.lp.offline_optimum` unless supplied):

* ``R_t^i = sum_{s>=t} (A x*)_i / (n-t+1) - b_i/n`` and
  ``S_t = sum_{s>=t} f(x*) / (n-t+1) - P*/n`` are martingales in ``t`` with
  respect to the revealed prefix;
* ``Phi^t`` combines the exponential penalties of an ESA run with the
  indicators of the good events and is a super-martingale.

Monte-Carlo helpers estimate the bad-event frequencies next to their
analytic bounds.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .algorithms import algorithm1_run, esa_run_traced, estimate_prefix_value
from .generators import derive_seed, make_rng, sample_permutation
from .lp import offline_optimum
from .model import INFEASIBLE, Instance, conjugate_value, eval_utility, within_budget
from .schedule import breakpoint, build_schedule, num_levels, theta, warmup_length

EVENT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class MartingaleTrace:
    """Values of one sequence; ``values[j]`` belongs to step ``t0 + j``."""

    values: np.ndarray
    kind: str  # "R", "S" or "Phi"
    resource_index: Optional[int] = None
    t0: int = 1

    def at(self, t: int) -> float:
        return float(self.values[t - self.t0])

    @property
    def steps(self) -> np.ndarray:
        return np.arange(self.t0, self.t0 + len(self.values))


def _check_x_star(instance: Instance, x_star) -> np.ndarray:
    X = np.asarray(x_star, dtype=float)
    if X.shape != (instance.n, instance.k):
        raise ValueError(f"x_star must have shape {(instance.n, instance.k)}")
    for item, x in zip(instance.items, X):
        if eval_utility(item.f, x) is INFEASIBLE:
            raise ValueError("x_star leaves the domain of some utility")
    if not within_budget(np.einsum("tij,tj->i", instance.A_stack, X), instance.b):
        raise ValueError("x_star violates the budget")
    return X


def _running_average(values: np.ndarray) -> np.ndarray:
    """``sum_{s>=t} v_s / (n-t+1)`` for ``t = 1..n`` along axis 0."""
    n = values.shape[0]
    tail = np.cumsum(values[::-1], axis=0)[::-1]
    counts = np.arange(n, 0, -1, dtype=float)
    return tail / counts.reshape((-1,) + (1,) * (values.ndim - 1))


def _loads(instance: Instance, X: np.ndarray) -> np.ndarray:
    return np.einsum("tij,tj->ti", instance.A_stack, X)


def _utilities(instance: Instance, X: np.ndarray) -> np.ndarray:
    return np.array([float(eval_utility(it.f, x)) for it, x in zip(instance.items, X)])


def martingale_R(instance: Instance, x_star, sigma, i: int) -> MartingaleTrace:
    X = _check_x_star(instance, x_star)
    if not 0 <= i < instance.m:
        raise ValueError("resource index out of range")
    order = np.asarray(sigma, dtype=int)
    load = _loads(instance, X)[order, i]
    vals = _running_average(load) - instance.b[i] / instance.n
    return MartingaleTrace(vals, "R", i)


def martingale_S(instance: Instance, x_star, p_star: float, sigma) -> MartingaleTrace:
    X = _check_x_star(instance, x_star)
    order = np.asarray(sigma, dtype=int)
    util = _utilities(instance, X)[order]
    return MartingaleTrace(_running_average(util) - p_star / instance.n, "S")


@dataclass(frozen=True)
class MartingaleCheck:
    max_gap: float
    comparisons: int

    def passed(self, tol: float = 1e-12) -> bool:
        return self.max_gap <= tol


def exact_martingale_check(per_item: np.ndarray, offset: float) -> MartingaleCheck:
    """Enumerate all ``n!`` orders of ``per_item`` and compare conditional means.

    For ``2 <= t <= n`` and every revealed prefix ``sigma(1..t-2)``, the mean
    of ``V_t`` over the remaining orders must equal ``V_{t-1}``, where
    ``V_t = sum_{s>=t} v_{sigma(s)} / (n-t+1) - offset``.
    """
    v = np.asarray(per_item, dtype=float)
    n = v.size
    if not 1 <= n <= 8:
        raise ValueError("exhaustive check limited to 1 <= n <= 8")
    perms = np.array(list(itertools.permutations(range(n))), dtype=int)
    traces = _running_average(v[perms].T).T - offset  # (n!, n)
    gap, count = 0.0, 0
    for t in range(2, n + 1):
        groups = {}
        for p, row in zip(perms, traces):
            groups.setdefault(tuple(p[: t - 2]), []).append(row)
        for rows in groups.values():
            rows = np.array(rows)
            prev = rows[:, t - 2]
            gap = max(gap, float(np.ptp(prev)))  # V_{t-1} is fixed by the prefix
            gap = max(gap, abs(float(rows[:, t - 1].mean() - prev[0])))
            count += 1
    return MartingaleCheck(gap, count)


def exact_martingale_R(instance: Instance, x_star, i: int) -> MartingaleCheck:
    X = _check_x_star(instance, x_star)
    return exact_martingale_check(_loads(instance, X)[:, i], instance.b[i] / instance.n)


def exact_martingale_S(instance: Instance, x_star, p_star: float) -> MartingaleCheck:
    X = _check_x_star(instance, x_star)
    return exact_martingale_check(_utilities(instance, X), p_star / instance.n)


# ---------------------------------------------------------------------------
# Good events and the Phi potential
# ---------------------------------------------------------------------------


def _event_margins(n: int, eps: float):
    """``2**(-kappa(t)/2) sqrt(eps) / n`` for ``t = 1..n-ne`` (index ``t-1``)."""
    sched = build_schedule(n, eps, 1.0)
    k = sched.kappa[1 : sched.horizon + 1].astype(float)
    return 2.0 ** (-k / 2) * math.sqrt(eps) / n


@dataclass(frozen=True, eq=False)
class OfflineProfile:
    """Per-item loads ``(A x*)`` and utilities ``f(x*)`` of a checked offline solution."""

    loads: np.ndarray  # (n, m)
    utilities: np.ndarray  # (n,)
    p_star: float


def offline_profile(instance: Instance, x_star, p_star: float) -> OfflineProfile:
    X = _check_x_star(instance, x_star)
    return OfflineProfile(_loads(instance, X), _utilities(instance, X), float(p_star))


def good_events(instance: Instance, profile: OfflineProfile, sigma, eps: float):
    """Indicators ``(B_t, C_t)`` for ``t = 1..n-ne`` under the order ``sigma``."""
    order = np.asarray(sigma, dtype=int)
    n = instance.n
    p_star = profile.p_star
    margin = _event_margins(n, eps)
    T = margin.size
    R = _running_average(profile.loads[order])[:T] - instance.b / n
    S = _running_average(profile.utilities[order])[:T] - p_star / n
    slack = EVENT_TOL * (1.0 + instance.b)
    B = np.all(R <= margin[:, None] * instance.b + slack, axis=1)
    C = S >= -margin * p_star - EVENT_TOL * (1.0 + abs(p_star))
    return B, C


@dataclass(frozen=True, eq=False)
class PhiParts:
    """Pieces of ``Phi^t`` for ``t = ne..T`` (row ``j`` is ``t = ne + j``)."""

    log_phi: np.ndarray  # (T-ne+1, m)
    log_chi: np.ndarray
    alive: np.ndarray  # product of the F_s indicators up to t
    t0: int

    @property
    def values(self) -> np.ndarray:
        m = self.log_phi.shape[1]
        raw = np.exp(np.minimum(self.log_phi, 700.0)).sum(axis=1) + m * np.exp(np.minimum(self.log_chi, 700.0))
        return np.where(self.alive, raw, 0.0)


def phi_parts(instance: Instance, sigma, eps: float, gamma: float, x_star, p_star: float, profile=None) -> PhiParts:
    """Run ESA on ``sigma`` and assemble ``phi_i^t``, ``chi^t`` and the ``F`` indicators."""
    profile = offline_profile(instance, x_star, p_star) if profile is None else profile
    order = np.asarray(sigma, dtype=int)
    n, m, b = instance.n, instance.m, instance.b
    sched = build_schedule(n, eps, gamma)
    ne = sched.ne
    T = max(ne, n - 2 * ne)
    _, trace = esa_run_traced(instance, order, eps, gamma)
    B, C = good_events(instance, profile, order, eps)

    steps = T - ne
    log_phi = np.zeros((steps + 1, m))
    log_chi = np.zeros(steps + 1)
    alive = np.ones(steps + 1, dtype=bool)
    tol = EVENT_TOL * (1.0 + abs(p_star))
    for j, t in enumerate(range(ne + 1, T + 1), start=1):
        item = instance.items[order[t - 1]]
        x = trace.raw_decisions[t - 1]
        q = float(trace.q[t - 1])
        fx = float(eval_utility(item.f, x))
        log_phi[j] = log_phi[j - 1] + sched.nu * (item.A @ x) / b - sched.beta[t]
        log_chi[j] = log_chi[j - 1] - sched.nu_p * fx / q + sched.beta_p[t]
        q_ok = p_star - tol <= q <= p_star / sched.alpha_at(t) + tol
        alive[j] = alive[j - 1] and bool(B[t - 1] and C[t - 1] and q_ok)
    return PhiParts(log_phi, log_chi, alive, ne)


def phi_trace(instance: Instance, sigma, eps: float, gamma: float, x_star, p_star: float, profile=None) -> MartingaleTrace:
    """``Phi^t`` for ``t = ne..n-2ne``; the first value is ``2m``."""
    parts = phi_parts(instance, sigma, eps, gamma, x_star, p_star, profile)
    return MartingaleTrace(parts.values, "Phi", None, parts.t0)


def phi_final_values(instance: Instance, eps: float, gamma: float, perm_count: int, seed: int, x_star=None, p_star=None):
    """``Phi^T`` for ``perm_count`` seeded orders."""
    if x_star is None or p_star is None:
        p_star, x_star, _ = offline_optimum(instance)
    profile = offline_profile(instance, x_star, p_star)
    out = np.zeros(perm_count)
    for p in range(perm_count):
        sigma = sample_permutation(instance.n, make_rng(derive_seed(seed, p)))
        out[p] = phi_trace(instance, sigma, eps, gamma, x_star, p_star, profile).values[-1]
    return out


# ---------------------------------------------------------------------------
# Prefix estimate sandwich
# ---------------------------------------------------------------------------


def sandwich(instance: Instance, sigma, h: int, eps: float, x_star, y_star):
    """``(P~_h, P_h, D~_h)`` on the level-``h`` prefix of ``sigma``.

    Both bounds use the same horizon fraction ``r = len/n`` as
    :func:`estimate_prefix_value`. ``P~_h`` is ``-inf`` when ``x*`` restricted
    to the prefix exceeds the scaled budget.
    """
    X = _check_x_star(instance, x_star)
    y = np.asarray(y_star, dtype=float)
    if np.any(y < 0):
        raise ValueError("y_star must be nonnegative")
    order = np.asarray(sigma, dtype=int)
    n, b = instance.n, instance.b
    size = breakpoint(h, n, eps)
    prefix = order[:size]
    r = size / n
    th = theta(h, eps)
    items = [instance.items[i] for i in prefix]

    p_h = estimate_prefix_value(items, h, eps, b, n)

    used = _loads(instance, X)[prefix].sum(axis=0)
    if np.all(used <= r * (1 + th) * b * (1 + 1e-12)):
        p_low = _utilities(instance, X)[prefix].sum() / (r * (1 - th))
    else:
        p_low = -math.inf

    dual = sum(-conjugate_value(it.f, it.A.T @ y) for it in items)
    d_high = dual / (r * (1 - th)) + (1 + th) / (1 - th) * float(b @ y)
    return float(p_low), float(p_h), float(d_high)


# ---------------------------------------------------------------------------
# Event frequencies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EventRow:
    name: str
    estimate: float
    bound: float

    @property
    def vacuous(self) -> bool:
        return self.bound >= 1.0

    @property
    def status(self) -> str:
        if self.vacuous:
            return "vacuous"
        return "ok" if self.estimate <= self.bound else "exceeded"


@dataclass(frozen=True)
class EventStats:
    """Monte-Carlo event frequencies with their analytic bounds.

    Prefix-estimate events are reported per level ``h``; the bounds hold for
    each level separately.
    """

    perms: int
    union_B: float
    union_C: float
    low_estimate: dict = field(default_factory=dict)  # h -> P(P_h < P*)
    high_estimate: dict = field(default_factory=dict)  # h -> P(P_h > (1+2theta)/(1-theta) P*)
    bounds: dict = field(default_factory=dict)
    overload: Optional[float] = None

    def rows(self) -> list:
        out = [
            EventRow("union_B", self.union_B, self.bounds["union_B"]),
            EventRow("union_C", self.union_C, self.bounds["union_C"]),
        ]
        for h in sorted(self.low_estimate):
            out.append(EventRow(f"P_{h}<P*", self.low_estimate[h], self.bounds["low_estimate"]))
        for h in sorted(self.high_estimate):
            out.append(EventRow(f"P_{h}>upper", self.high_estimate[h], self.bounds["high_estimate"]))
        if self.overload is not None:
            out.append(EventRow("overload", self.overload, self.bounds["overload"]))
        return out

    @property
    def consistent(self) -> bool:
        return all(r.status != "exceeded" for r in self.rows())


def analytic_bounds(m: int, eps: float, gamma: float) -> dict:
    L = num_levels(eps)
    e6 = math.exp(-(eps**2) / (6 * gamma))
    e4 = math.exp(-(eps**2) / (4 * gamma))
    return {
        "union_B": m * L * e6,
        "union_C": L * e4,
        "low_estimate": e4 + m * e6,
        "high_estimate": e6,
        "overload": m * (L + 1) * e6,
    }


def event_stats(instance: Instance, eps: float, gamma: float, perm_count: int, seed: int, solution=None) -> EventStats:
    """Frequencies of the bad events over ``perm_count`` seeded orders.

    ``solution`` may pass a precomputed ``(P*, x*, y*)``.
    """
    if perm_count < 1:
        raise ValueError("perm_count must be >= 1")
    p_star, X, _ = offline_optimum(instance) if solution is None else solution
    profile = offline_profile(instance, X, p_star)
    n, b = instance.n, instance.b
    L = num_levels(eps)
    levels = range(L)
    bad_B = bad_C = 0
    low = {h: 0 for h in levels}
    high = {h: 0 for h in levels}
    for p in range(perm_count):
        sigma = sample_permutation(n, make_rng(derive_seed(seed, p)))
        B, C = good_events(instance, profile, sigma, eps)
        bad_B += int(not B.all())
        bad_C += int(not C.all())
        for h in levels:
            items = [instance.items[i] for i in sigma[: breakpoint(h, n, eps)]]
            p_h = estimate_prefix_value(items, h, eps, b, n)
            th = theta(h, eps)
            low[h] += int(p_h < p_star * (1 - 1e-12))
            high[h] += int(p_h > (1 + 2 * th) / (1 - th) * p_star * (1 + 1e-12))
    return EventStats(
        perms=perm_count,
        union_B=bad_B / perm_count,
        union_C=bad_C / perm_count,
        low_estimate={h: c / perm_count for h, c in low.items()},
        high_estimate={h: c / perm_count for h, c in high.items()},
        bounds=analytic_bounds(instance.m, eps, gamma),
    )


def overload_frequency(instance: Instance, eps: float, perm_count: int, seed: int, gamma: Optional[float] = None):
    """Fraction of orders where the feasibility greedy overloads some resource by the horizon.

    A run counts as a violation when ``max_i sum_{s<=n-ne} X_s^i > 1 + 2 eps``.
    Returns ``(frequency, bound)``.
    """
    A = instance.A_stack
    gamma = float(A.max()) if gamma is None else gamma
    T = instance.n - warmup_length(instance.n, eps)
    bad = 0
    for p in range(perm_count):
        sigma = sample_permutation(instance.n, make_rng(derive_seed(seed, p)))
        cum = algorithm1_run(instance, sigma, eps, gamma)
        bad += int(cum[T - 1].max() > 1 + 2 * eps)
    return bad / perm_count, analytic_bounds(instance.m, eps, gamma)["overload"]
