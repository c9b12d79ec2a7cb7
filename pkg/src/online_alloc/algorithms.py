"""Online allocation algorithms over a permuted item stream.

All algorithms pick ``x_t`` as a minimizer of ``v @ z - f(z)`` for a price
vector ``v = A^T y`` and differ only in how ``y`` evolves:

* ESA keeps multiplicative weights ``(y, y')`` updated after every step and
  solves at most ``L`` prefix LPs to estimate the offline optimum.
* OLA solves one prefix LP after the warm-up; DLA re-solves at every
  breakpoint ``ne * 2**h``.
* KRTV re-solves the revealed-prefix LP every ``period`` steps.

Every algorithm passes its raw decisions through the same guard: ``x_t`` is
kept only while the cumulative raw consumption is within budget. The
baselines take a zero reduced cost as acceptance (see
:func:`online_alloc.model.assign_from_dual`).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .lp import solve_allocation
from .model import INFEASIBLE, Instance, Item, RunResult, assign_from_dual, within_budget
from .schedule import Schedule, breakpoint, build_schedule, theta, warmup_length

GUARD_RTOL = 1e-12
_MAX_EXP = 700.0


@dataclass(frozen=True)
class DualVector:
    y: np.ndarray


@dataclass(frozen=True, eq=False)
class EsaState:
    """Dual weights in log space plus running totals.

    ``accepted`` records whether the most recent decision passed the guard.
    """

    t: int
    log_y: np.ndarray
    log_yp: float
    q: float
    raw_consumption: np.ndarray
    checked_consumption: np.ndarray
    utility: float = 0.0
    accepted: bool = True

    @property
    def y(self) -> np.ndarray:
        return np.exp(self.log_y)

    @property
    def y_p(self) -> float:
        return math.exp(self.log_yp)


def initial_state(sched: Schedule, m: int, q: float) -> EsaState:
    t0 = sched.ne + 1
    return EsaState(
        t=t0,
        log_y=np.full(m, -sched.beta[t0] - math.log(m)),
        log_yp=float(sched.beta_p[t0]),
        q=q,
        raw_consumption=np.zeros(m),
        checked_consumption=np.zeros(m),
    )


def scaled_prices(state: EsaState, b) -> np.ndarray:
    """``y'' = (q / y') * y / b``, the resource prices in utility units."""
    expo = np.minimum(state.log_y + math.log(state.q) - state.log_yp, _MAX_EXP)
    return np.exp(expo) / b


def esa_assign(state: EsaState, item: Item, b) -> np.ndarray:
    return assign_from_dual(item.f, item.A.T @ scaled_prices(state, b))


def _fits(consumption, b) -> bool:
    return bool(np.all(consumption <= b * (1 + GUARD_RTOL)))


def esa_update(state: EsaState, item: Item, x, sched: Schedule, b, guard_checked: bool = False) -> EsaState:
    """One exponentiated step on ``(y, y')`` followed by the feasibility guard."""
    x = np.asarray(x, dtype=float)
    t = state.t
    load = item.A @ x
    fx = item.f.evaluate(x)
    if fx is INFEASIBLE:
        raise ValueError("decision outside the utility's domain")
    log_y = state.log_y + sched.nu * load / b - sched.beta[t + 1]
    log_yp = state.log_yp - sched.nu_p * fx / state.q + sched.beta_p[t + 1]
    raw = state.raw_consumption + load
    if guard_checked:
        ok = _fits(state.checked_consumption + load, b)
    else:
        ok = _fits(raw, b)
    checked = state.checked_consumption + load if ok else state.checked_consumption
    return replace(
        state,
        t=t + 1,
        log_y=log_y,
        log_yp=float(log_yp),
        raw_consumption=raw,
        checked_consumption=checked,
        utility=state.utility + (fx if ok else 0.0),
        accepted=ok,
    )


def _fraction(count: int, h: int, eps: float, n: Optional[int]) -> float:
    return count / n if n else 2.0**h * eps


def estimate_prefix_value(prefix_items: Sequence[Item], h: int, eps: float, b, n: Optional[int] = None) -> float:
    """Estimate of the offline optimum from a revealed prefix.

    Solves the prefix problem with budget ``r(1+theta_h) b`` and divides its
    value by ``r(1-theta_h)``, where ``r`` is the prefix's share of the
    horizon (``len/n`` when ``n`` is given, else ``2**h * eps``).
    """
    r = _fraction(len(prefix_items), h, eps, n)
    th = theta(h, eps)
    value, _, _ = solve_allocation(prefix_items, r * (1 + th) * np.asarray(b, dtype=float))
    return value / (r * (1 - th))


def dual_estimate(prefix_items: Sequence[Item], h: int, eps: float, b, n: Optional[int] = None) -> DualVector:
    """Budget duals of the prefix problem with budget ``r(1 - 2**(-h/2) sqrt(eps)) b``."""
    r = _fraction(len(prefix_items), h, eps, n)
    shrink = 1 - 2.0 ** (-h / 2) * math.sqrt(eps)
    _, _, y = solve_allocation(prefix_items, r * shrink * np.asarray(b, dtype=float))
    return DualVector(np.maximum(y, 0.0))


# ---------------------------------------------------------------------------
# Shared run bookkeeping
# ---------------------------------------------------------------------------


class _Guard:
    def __init__(self, instance: Instance, guard_checked: bool):
        self.b = instance.b
        self.raw = np.zeros(instance.m)
        self.checked = np.zeros(instance.m)
        self.guard_checked = guard_checked

    def offer(self, item: Item, x: np.ndarray) -> bool:
        load = item.A @ x
        self.raw += load
        target = self.checked + load if self.guard_checked else self.raw
        if _fits(target, self.b):
            self.checked += load
            return True
        return False


def _result(instance: Instance, order, decisions, elapsed: float, lp_solves: int) -> RunResult:
    C = instance.linear_values
    if C is not None:
        # decisions come from assign_from_dual, so they are vertices of the domain
        total = float((C[order] * decisions).sum())
        use = np.einsum("tij,tj->i", instance.A_stack[order], decisions)
    else:
        total = 0.0
        use = np.zeros(instance.m)
        for t, i in enumerate(order):
            x = decisions[t]
            if not x.any():
                continue
            item = instance.items[i]
            total += item.f.evaluate(x)
            use += item.A @ x
    return RunResult(
        decisions=decisions,
        objective=float(total),
        consumption=use,
        feasible=within_budget(use, instance.b),
        elapsed=elapsed,
        order=np.asarray(order),
        lp_solves=lp_solves,
    )


def _check_order(instance: Instance, sigma) -> np.ndarray:
    order = np.asarray(sigma, dtype=int)
    if order.shape != (instance.n,) or not np.array_equal(np.sort(order), np.arange(instance.n)):
        raise ValueError("sigma must be a permutation of range(n)")
    return order


# ---------------------------------------------------------------------------
# ESA
# ---------------------------------------------------------------------------


@dataclass
class EsaTrace:
    """Per-step record of an ESA run (1-based step ``t`` at index ``t - 1``)."""

    raw_decisions: np.ndarray
    q: np.ndarray
    estimates: dict = field(default_factory=dict)  # level h -> P_h


def _esa(instance: Instance, sigma, eps: float, gamma: float, guard_checked: bool, record: bool):
    # Same arithmetic as esa_assign/esa_update, without rebuilding EsaState
    # every step; a zero decision leaves the load terms at exactly zero.
    order = _check_order(instance, sigma)
    n, m, k = instance.n, instance.m, instance.k
    b = instance.b
    cap = b * (1 + GUARD_RTOL)
    sched = build_schedule(n, eps, gamma)
    nu, nu_p = sched.nu, sched.nu_p
    beta, beta_p = sched.beta, sched.beta_p
    items = [instance.items[i] for i in order]
    decisions = np.zeros((n, k))
    raw = np.zeros((n, k)) if record else None
    qs = np.full(n, np.nan) if record else None
    estimates = {}
    solves = 0

    start = time.perf_counter()
    t0 = sched.ne + 1
    log_y = np.full(m, -beta[t0] - math.log(m))
    log_yp = float(beta_p[t0])
    used_raw = np.zeros(m)
    used_checked = np.zeros(m)
    level = 0
    q = log_q = None
    for t in range(t0, n + 1):
        lev = int(sched.eta[t])
        if lev != level:
            h = lev - 1
            p_h = estimate_prefix_value(items[: breakpoint(h, n, eps)], h, eps, b, n)
            solves += 1
            estimates[h] = p_h
            q = p_h if p_h != 0 else eps
            log_q = math.log(q)
            level = lev
        item = items[t - 1]
        prices = np.exp(np.minimum(log_y + log_q - log_yp, _MAX_EXP)) / b
        x = assign_from_dual(item.f, item.A.T @ prices)
        if record:
            raw[t - 1] = x
            qs[t - 1] = q
        if not x.any():
            log_y = log_y - beta[t + 1]
            log_yp = log_yp + beta_p[t + 1]
            continue
        load = item.A @ x
        fx = item.f.evaluate(x)
        log_y = log_y + nu * load / b - beta[t + 1]
        log_yp = float(log_yp - nu_p * fx / q + beta_p[t + 1])
        used_raw += load
        target = used_checked + load if guard_checked else used_raw
        if np.all(target <= cap):
            used_checked += load
            decisions[t - 1] = x
    elapsed = time.perf_counter() - start

    result = _result(instance, order, decisions, elapsed, solves)
    trace = EsaTrace(raw, qs, estimates) if record else None
    return result, trace


def esa_run(instance: Instance, sigma, eps: float, gamma: float, guard_checked: bool = False) -> RunResult:
    """Exponentiated subgradient algorithm over the arrival order ``sigma``."""
    return _esa(instance, sigma, eps, gamma, guard_checked, record=False)[0]


def esa_run_traced(instance: Instance, sigma, eps: float, gamma: float, guard_checked: bool = False):
    """Like :func:`esa_run` but also returns an :class:`EsaTrace`."""
    return _esa(instance, sigma, eps, gamma, guard_checked, record=True)


# ---------------------------------------------------------------------------
# Feasibility greedy
# ---------------------------------------------------------------------------


def algorithm1_run(instance: Instance, sigma, eps: float, gamma: Optional[float] = None) -> np.ndarray:
    """Multiplicative-potential greedy for ``find x_t in simplex, sum A_t x_t <= 1``.

    Returns the cumulative consumption after each step, shape ``(n, m)``.
    ``gamma`` defaults to the largest entry of any ``A_t``.
    """
    order = _check_order(instance, sigma)
    A = instance.A_stack
    if gamma is None:
        gamma = float(A.max()) if A.size else 1.0
    nu = math.log1p(eps) / gamma
    cum = np.zeros(instance.m)
    trace = np.zeros((instance.n, instance.m))
    for t, i in enumerate(order):
        w = np.exp(nu * (cum - cum.max()))
        j = int(np.argmin(w @ A[i]))
        cum = cum + A[i][:, j]
        trace[t] = cum
    return trace


# ---------------------------------------------------------------------------
# Dual-price baselines
# ---------------------------------------------------------------------------


def _run_with_prices(instance, order, first_step, prices_at, guard_checked):
    """Shared loop: ``prices_at(t, items)`` returns new prices or None to keep the old ones."""
    n, k = instance.n, instance.k
    items = [instance.items[i] for i in order]
    decisions = np.zeros((n, k))
    guard = _Guard(instance, guard_checked)
    solves = 0
    y = None
    start = time.perf_counter()
    for t in range(first_step, n + 1):
        new = prices_at(t, items)
        if new is not None:
            y = new
            solves += 1
        item = items[t - 1]
        x = assign_from_dual(item.f, item.A.T @ y, accept_ties=True)
        if x.any() and guard.offer(item, x):
            decisions[t - 1] = x
    elapsed = time.perf_counter() - start
    return _result(instance, order, decisions, elapsed, solves)


def ola_run(instance: Instance, sigma, eps: float, guard_checked: bool = False) -> RunResult:
    """One-time learning: a single dual estimate from the warm-up prefix."""
    order = _check_order(instance, sigma)
    n, b = instance.n, instance.b
    ne = warmup_length(n, eps)

    def prices_at(t, items):
        if t == ne + 1:
            return dual_estimate(items[:ne], 0, eps, b, n).y
        return None

    return _run_with_prices(instance, order, ne + 1, prices_at, guard_checked)


def dla_run(instance: Instance, sigma, eps: float, guard_checked: bool = False) -> RunResult:
    """Dynamic learning: dual estimate refreshed after each breakpoint ``ne * 2**h``."""
    order = _check_order(instance, sigma)
    n, b = instance.n, instance.b
    ne = warmup_length(n, eps)
    levels = {}
    for h in range(build_schedule(n, eps, 1.0).L):
        levels[breakpoint(h, n, eps)] = h

    def prices_at(t, items):
        h = levels.get(t - 1)
        if h is None:
            return None
        return dual_estimate(items[: t - 1], h, eps, b, n).y

    return _run_with_prices(instance, order, ne + 1, prices_at, guard_checked)


def krtv_run(instance: Instance, sigma, period: int = 1, guard_checked: bool = False) -> RunResult:
    """Prefix-LP duals recomputed every ``period`` steps (and at the last step).

    At a recompute step ``t`` the LP covers the ``t`` revealed items with
    budget ``(t / n) b``.
    """
    if period < 1:
        raise ValueError("period must be >= 1")
    order = _check_order(instance, sigma)
    n, b = instance.n, instance.b

    def prices_at(t, items):
        if (t - 1) % period and t != n:
            return None
        _, _, y = solve_allocation(items[:t], (t / n) * b)
        return np.maximum(y, 0.0)

    return _run_with_prices(instance, order, 1, prices_at, guard_checked)


ALGORITHMS = ("esa", "ola", "dla", "krtv")


def run_algorithm(
    name: str, instance: Instance, sigma, eps: Optional[float], gamma: Optional[float] = None, guard_checked: bool = False
) -> RunResult:
    """Dispatch by name: ``esa``, ``ola``, ``dla``, ``krtv`` or ``krtvK`` (period K)."""
    name = name.lower()
    if name in ("esa", "ola", "dla") and eps is None:
        raise ValueError(f"{name} needs eps")
    if name == "esa":
        if gamma is None:
            raise ValueError("esa needs gamma")
        return esa_run(instance, sigma, eps, gamma, guard_checked)
    if name == "ola":
        return ola_run(instance, sigma, eps, guard_checked)
    if name == "dla":
        return dla_run(instance, sigma, eps, guard_checked)
    if name.startswith("krtv") and (name[4:] == "" or name[4:].isdigit()):
        suffix = name[4:]
        return krtv_run(instance, sigma, int(suffix) if suffix else 1, guard_checked)
    raise ValueError(f"unknown algorithm {name!r}")
