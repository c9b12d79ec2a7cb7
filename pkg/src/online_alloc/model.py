"""Domain types: utilities, items, instances, and the dual-to-primal assignment rule.

Every utility family knows three things: how to evaluate itself, how to pick a
point of its conjugate's superdifferential for a price vector ``v`` (that is, a
minimizer of ``v @ z - f(z)``), and what its concave conjugate is at ``v``.
All online algorithms in this package route their primal decisions through
:func:`assign_from_dual`.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

DOMAIN_TOL = 1e-12
REJECT_TOL = 1e-12
TIE_RTOL = 1e-9
BUDGET_RTOL = 1e-9
BISECTION_STEPS = 80


class Infeasible(enum.Enum):
    """Marker for a value of minus infinity (outside a domain or over budget).

    Deliberately not a float so that it cannot leak into arithmetic.
    """

    INFEASIBLE = "infeasible"

    def __repr__(self) -> str:
        return "INFEASIBLE"


INFEASIBLE = Infeasible.INFEASIBLE


def _as_vector(x, k: int, what: str = "x") -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.shape != (k,):
        raise ValueError(f"{what} has shape {arr.shape}, expected ({k},)")
    return arr


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# Utility families
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LinearSimplex:
    """``f(x) = c @ x`` on ``{x in [0,1]^k : sum(x) <= 1}``."""

    c: np.ndarray

    def __post_init__(self):
        c = _frozen(np.atleast_1d(self.c))
        if c.ndim != 1 or c.size == 0:
            raise ValueError("c must be a nonempty vector")
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise ValueError("LinearSimplex requires finite c >= 0")
        object.__setattr__(self, "c", c)

    @property
    def k(self) -> int:
        return self.c.size

    def evaluate(self, x):
        x = _as_vector(x, self.k)
        if x.min() < -DOMAIN_TOL or x.max() > 1 + DOMAIN_TOL or x.sum() > 1 + DOMAIN_TOL:
            return INFEASIBLE
        return float(self.c @ x)

    def assign(self, v, accept_ties: bool = False) -> np.ndarray:
        """Best vertex; a zero reduced cost is a rejection unless ``accept_ties``."""
        v = _as_vector(v, self.k, "v")
        reduced = v - self.c
        j = int(np.argmin(reduced))  # argmin returns the lowest index on ties
        x = np.zeros(self.k)
        if reduced[j] < -REJECT_TOL:
            x[j] = 1.0
        elif accept_ties and self.c[j] > 0 and reduced[j] <= TIE_RTOL * max(1.0, self.c[j]):
            x[j] = 1.0
        return x

    def sup_value(self) -> float:
        return float(self.c.max())

    def vertices(self) -> np.ndarray:
        return np.vstack([np.zeros(self.k), np.eye(self.k)])

    def to_dict(self) -> dict:
        return {"kind": "linear_simplex", "c": self.c.tolist()}


@dataclass(frozen=True, eq=False)
class LinearSimplexEq:
    """``f(x) = c @ x`` on the probability simplex ``{x >= 0 : sum(x) = 1}``.

    Zero is not in this domain, so ``f(0)`` is infeasible.
    """

    c: np.ndarray

    def __post_init__(self):
        c = _frozen(np.atleast_1d(self.c))
        if c.ndim != 1 or c.size == 0:
            raise ValueError("c must be a nonempty vector")
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise ValueError("LinearSimplexEq requires finite c >= 0")
        object.__setattr__(self, "c", c)

    @property
    def k(self) -> int:
        return self.c.size

    def evaluate(self, x):
        x = _as_vector(x, self.k)
        if np.any(x < -DOMAIN_TOL) or abs(x.sum() - 1.0) > DOMAIN_TOL:
            return INFEASIBLE
        return float(self.c @ x)

    def assign(self, v) -> np.ndarray:
        v = _as_vector(v, self.k, "v")
        x = np.zeros(self.k)
        x[int(np.argmin(v - self.c))] = 1.0
        return x

    def sup_value(self) -> float:
        return float(self.c.max())

    def vertices(self) -> np.ndarray:
        return np.eye(self.k)

    def to_dict(self) -> dict:
        return {"kind": "linear_simplex_eq", "c": self.c.tolist()}


@dataclass(frozen=True, eq=False)
class ConcaveScalar:
    """Scalar concave utility on ``[0, 1]`` given by value and derivative oracles.

    ``derivative`` must be nonincreasing on ``[0, 1]`` and ``value(0) == 0``.
    When ``inverse`` is omitted, ``l(v) = min{x : v >= f'(x)}`` is found by
    bisection.
    """

    value: Callable[[float], float]
    derivative: Callable[[float], float]
    inverse: Optional[Callable[[float], float]] = None
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        if self.check:
            self._check_shape()

    def _check_shape(self, samples: int = 257):
        if abs(self.value(0.0)) > DOMAIN_TOL:
            raise ValueError("concave utility must satisfy f(0) = 0")
        grid = np.linspace(0.0, 1.0, samples)
        d = np.array([self.derivative(float(x)) for x in grid])
        if np.any(np.diff(d) > 1e-12 * (1 + np.abs(d[1:]).max())):
            raise ValueError("derivative oracle is not nonincreasing on [0, 1]")

    @property
    def k(self) -> int:
        return 1

    def evaluate(self, x):
        x = _as_vector(x, 1)[0]
        if x < -DOMAIN_TOL or x > 1 + DOMAIN_TOL:
            return INFEASIBLE
        return float(self.value(min(max(x, 0.0), 1.0)))

    def level_inverse(self, v: float) -> float:
        """Smallest ``x`` in ``[0, 1]`` with ``v >= f'(x)``."""
        if self.inverse is not None:
            return float(min(max(self.inverse(v), 0.0), 1.0))
        lo, hi = 0.0, 1.0
        for _ in range(BISECTION_STEPS):
            mid = 0.5 * (lo + hi)
            if v >= self.derivative(mid):
                hi = mid
            else:
                lo = mid
        return hi

    def assign(self, v) -> np.ndarray:
        v = float(_as_vector(v, 1, "v")[0])
        if self.derivative(0.0) <= v:
            return np.zeros(1)
        if self.derivative(1.0) > v:
            return np.ones(1)
        return np.array([self.level_inverse(v)])

    def sup_value(self) -> float:
        return float(self.value(1.0))

    def vertices(self) -> np.ndarray:
        return np.array([[0.0], [1.0]])

    def to_dict(self) -> dict:
        raise TypeError("only the parametric concave families are serializable")


class ConcavePower(ConcaveScalar):
    """``f(x) = a * x**p`` with ``0 < p <= 1``."""

    def __init__(self, a: float, p: float):
        if not (0 < p <= 1) or a < 0:
            raise ValueError("power utility needs a >= 0 and p in (0, 1]")
        self_a, self_p = float(a), float(p)

        def value(x):
            return self_a * x**self_p

        def derivative(x):
            if self_p < 1 and x <= 0:
                return math.inf if self_a > 0 else 0.0
            return self_a * self_p * x ** (self_p - 1)

        def inverse(v):
            return (v / (self_a * self_p)) ** (1.0 / (self_p - 1))

        super().__init__(value, derivative, inverse if p < 1 else None, check=False)
        object.__setattr__(self, "a", self_a)
        object.__setattr__(self, "p", self_p)

    def __repr__(self) -> str:
        return f"ConcavePower(a={self.a!r}, p={self.p!r})"

    def to_dict(self) -> dict:
        return {"kind": "concave_power", "a": self.a, "p": self.p}


class ConcaveLog(ConcaveScalar):
    """``f(x) = a * log(1 + s*x) / s`` with ``s > 0``."""

    def __init__(self, a: float, s: float):
        if s <= 0 or a < 0:
            raise ValueError("log utility needs a >= 0 and s > 0")
        self_a, self_s = float(a), float(s)

        def value(x):
            return self_a * math.log1p(self_s * x) / self_s

        def derivative(x):
            return self_a / (1 + self_s * x)

        def inverse(v):
            return (self_a / v - 1) / self_s

        super().__init__(value, derivative, inverse, check=False)
        object.__setattr__(self, "a", self_a)
        object.__setattr__(self, "s", self_s)

    def __repr__(self) -> str:
        return f"ConcaveLog(a={self.a!r}, s={self.s!r})"

    def to_dict(self) -> dict:
        return {"kind": "concave_log", "a": self.a, "s": self.s}


UtilityFunction = Union[LinearSimplex, LinearSimplexEq, ConcaveScalar]


def eval_utility(f: UtilityFunction, x):
    """``f(x)``, or :data:`INFEASIBLE` when ``x`` lies outside ``dom f``."""
    return f.evaluate(x)


def assign_from_dual(f: UtilityFunction, v, accept_ties: bool = False) -> np.ndarray:
    """A minimizer of ``v @ z - f(z)`` over ``dom f``.

    Linear families pick the vertex with the most negative reduced cost
    ``v_j - c_j`` (lowest index on ties); :class:`LinearSimplex` rejects with
    ``0`` unless that cost is below ``-1e-12``. With ``accept_ties`` a zero
    reduced cost on a positive-utility option selects that option instead;
    both choices minimize, and the dual-price baselines need it because LP
    duals price the marginal option at exactly its utility.
    """
    if accept_ties and isinstance(f, LinearSimplex):
        return f.assign(v, accept_ties=True)
    return f.assign(v)


def conjugate_value(f: UtilityFunction, v) -> float:
    """Concave conjugate ``f*(v) = inf_x v @ x - f(x)``."""
    v = _as_vector(v, f.k, "v")
    x = f.assign(v)
    return float(v @ x - f.evaluate(x))


# ---------------------------------------------------------------------------
# Items and instances
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Item:
    f: UtilityFunction
    A: np.ndarray

    def __post_init__(self):
        A = _frozen(np.atleast_2d(np.asarray(self.A, dtype=float)))
        if A.ndim != 2:
            raise ValueError("A must be an m x k matrix")
        if np.any(A < 0) or not np.all(np.isfinite(A)):
            raise ValueError("A must be finite and entrywise nonnegative")
        if A.shape[1] != self.f.k:
            raise ValueError(f"A has {A.shape[1]} columns but utility has k={self.f.k}")
        object.__setattr__(self, "A", A)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def k(self) -> int:
        return self.A.shape[1]


@dataclass(frozen=True, eq=False)
class Instance:
    b: np.ndarray
    items: tuple

    def __post_init__(self):
        b = _frozen(np.atleast_1d(self.b))
        if b.ndim != 1 or np.any(b <= 0) or not np.all(np.isfinite(b)):
            raise ValueError("budget b must be a finite, strictly positive vector")
        items = tuple(self.items)
        if items:
            k = items[0].k
            for it in items:
                if it.m != b.size or it.k != k:
                    raise ValueError("all items must share (m, k) with the budget")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "items", items)

    @property
    def n(self) -> int:
        return len(self.items)

    @property
    def m(self) -> int:
        return self.b.size

    @property
    def k(self) -> int:
        return self.items[0].k if self.items else 1

    @cached_property
    def A_stack(self) -> np.ndarray:
        """All consumption matrices as an ``(n, m, k)`` array."""
        if not self.items:
            return np.zeros((0, self.m, 1))
        out = np.stack([it.A for it in self.items])
        out.setflags(write=False)
        return out

    @cached_property
    def linear_values(self) -> Optional[np.ndarray]:
        """``(n, k)`` utility coefficients when every item is LinearSimplex, else None."""
        if self.items and all(type(it.f) is LinearSimplex for it in self.items):
            out = np.stack([it.f.c for it in self.items])
            out.setflags(write=False)
            return out
        return None

    def subset(self, order: Sequence[int], b=None) -> "Instance":
        return Instance(self.b if b is None else b, tuple(self.items[i] for i in order))


@dataclass(frozen=True)
class GammaBound:
    """Bid-to-budget / utility-to-optimum bound; ``gamma = max(bid, utility)``."""

    gamma: float
    bid: float
    utility: float


@dataclass
class RunResult:
    """Outcome of one online run over one arrival order.

    ``decisions[t]`` is the guarded decision for the ``t``-th arrival (and
    ``order[t]`` the index of that item in the instance).
    """

    decisions: np.ndarray
    objective: float
    consumption: np.ndarray
    feasible: bool
    elapsed: float
    order: np.ndarray
    lp_solves: int = 0


# ---------------------------------------------------------------------------
# Operations on instances
# ---------------------------------------------------------------------------


def within_budget(consumption, b, rtol: float = BUDGET_RTOL) -> bool:
    return bool(np.all(np.asarray(consumption) <= b + rtol * b))


def objective(instance: Instance, decisions, order=None):
    """``sum_t f_t(x_t)`` plus the budget indicator.

    ``decisions[t]`` pairs with ``instance.items[order[t]]`` (identity order by
    default). Returns :data:`INFEASIBLE` on a domain or budget violation.
    """
    X = np.asarray(decisions, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape != (instance.n, instance.k):
        raise ValueError(f"decisions have shape {X.shape}, expected ({instance.n}, {instance.k})")
    idx = np.arange(instance.n) if order is None else np.asarray(order)
    total = 0.0
    use = np.zeros(instance.m)
    for t, i in enumerate(idx):
        item = instance.items[i]
        val = item.f.evaluate(X[t])
        if val is INFEASIBLE:
            return INFEASIBLE
        total += val
        use += item.A @ X[t]
    if not within_budget(use, instance.b):
        return INFEASIBLE
    return total


def gamma_of_instance(instance: Instance, p_star: float) -> GammaBound:
    """Smallest gamma consistent with the instance's largest bid and utility.

    Bids are taken over the extreme points of each domain (vertices for the
    linear families, ``{0, 1}`` for scalar concave utilities).
    """
    if not p_star > 0:
        raise ValueError("p_star must be positive")
    bid = 0.0
    util = 0.0
    for it in instance.items:
        V = it.f.vertices()
        loads = (it.A @ V.T) / instance.b[:, None]
        bid = max(bid, float(loads.max()))
        util = max(util, it.f.sup_value() / p_star)
    return GammaBound(gamma=max(bid, util), bid=bid, utility=util)


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


def utility_from_dict(d: dict) -> UtilityFunction:
    kind = d.get("kind")
    if kind == "linear_simplex":
        return LinearSimplex(np.asarray(d["c"], dtype=float))
    if kind == "linear_simplex_eq":
        return LinearSimplexEq(np.asarray(d["c"], dtype=float))
    if kind == "concave_power":
        return ConcavePower(d["a"], d["p"])
    if kind == "concave_log":
        return ConcaveLog(d["a"], d["s"])
    raise ValueError(f"unknown utility kind {kind!r}")


def instance_to_dict(instance: Instance) -> dict:
    return {
        "n": instance.n,
        "m": instance.m,
        "k": instance.k,
        "b": instance.b.tolist(),
        "items": [{"utility": it.f.to_dict(), "A": it.A.tolist()} for it in instance.items],
    }


def instance_from_dict(d: dict) -> Instance:
    items = tuple(Item(utility_from_dict(it["utility"]), np.asarray(it["A"], dtype=float)) for it in d["items"])
    inst = Instance(np.asarray(d["b"], dtype=float), items)
    for key in ("n", "m", "k"):
        if key in d and d[key] != getattr(inst, key):
            raise ValueError(f"declared {key}={d[key]} does not match data ({getattr(inst, key)})")
    return inst


def save_instance(instance: Instance, path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(instance)))


def load_instance(path) -> Instance:
    return instance_from_dict(json.loads(Path(path).read_text()))
