"""Dense bounded-variable primal simplex and the allocation LPs built on it.

Problems have the form ``max c @ x  s.t.  G @ x <= g,  0 <= x <= u`` (``u`` may
contain ``inf``). The solver is a revised simplex with an explicit basis
inverse and two phases (artificials only for rows with ``g_i < 0``).
Degenerate stretches are handled by Bland's rule, so the method is
deterministic and cannot cycle.

Utility items are turned into LP columns by :func:`allocation_lp`; scalar
concave utilities are replaced by their chord interpolant on ``CHORD_PIECES``
equal segments of ``[0, 1]``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import ConcaveScalar, Instance, Item, LinearSimplex, LinearSimplexEq

PIVOT_TOL = 1e-10
CHORD_PIECES = 64
REFACTOR_EVERY = 32
VERTEX_ORACLE_MAX = 14


class LpError(RuntimeError):
    """The simplex exceeded its iteration budget (a tolerance failure)."""


@dataclass(frozen=True, eq=False)
class LpProblem:
    c: np.ndarray
    G: np.ndarray
    g: np.ndarray
    upper: Optional[np.ndarray] = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        G = np.asarray(self.G, dtype=float).reshape(-1, c.size)
        g = np.asarray(self.g, dtype=float).ravel()
        u = np.full(c.size, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).ravel()
        if G.shape[0] != g.size or u.size != c.size:
            raise ValueError("inconsistent LP dimensions")
        if not np.all(np.isfinite(g)) or np.any(u < 0):
            raise ValueError("rhs must be finite and upper bounds nonnegative")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "upper", u)

    @property
    def shape(self):
        return self.G.shape


@dataclass(frozen=True, eq=False)
class LpSolution:
    x: np.ndarray
    y: np.ndarray
    value: float
    status: str  # "optimal" | "infeasible" | "unbounded"
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def dual_value(p: LpProblem, y: np.ndarray) -> float:
    """Value of the LP dual at row prices ``y`` (``inf`` if an unbounded column prices out)."""
    red = p.c - p.G.T @ y
    fin = np.isfinite(p.upper)
    if np.any(red[~fin] > 1e-9):
        return np.inf
    return float(p.g @ y + (p.upper[fin] * np.maximum(red[fin], 0.0)).sum())


class _Simplex:
    """Revised bounded simplex over ``Aeq @ z = rhs, 0 <= z <= ub``."""

    def __init__(self, Aeq, rhs, ub, basis, max_iter):
        self.A = Aeq
        self.rhs = rhs
        self.ub = ub
        self.M, self.N = Aeq.shape
        self.basis = np.array(basis, dtype=int)
        self.is_basic = np.zeros(self.N, dtype=bool)
        self.is_basic[self.basis] = True
        self.at_upper = np.zeros(self.N, dtype=bool)
        self.Binv = np.linalg.inv(Aeq[:, self.basis])
        self.iterations = 0
        self.max_iter = max_iter
        self._since_refactor = 0
        self._recompute_xB()

    def _recompute_xB(self):
        shift = self.A[:, self.at_upper] @ self.ub[self.at_upper] if self.at_upper.any() else 0.0
        self.xB = self.Binv @ (self.rhs - shift)

    def _refactor(self):
        self.Binv = np.linalg.inv(self.A[:, self.basis])
        self._recompute_xB()
        self._since_refactor = 0

    def _tick(self):
        self.iterations += 1
        if self.iterations > self.max_iter:
            raise LpError(f"simplex exceeded {self.max_iter} iterations")

    def run(self, cost) -> str:
        """Maximize ``cost @ z`` from the current basis; returns 'optimal' or 'unbounded'.

        Entering variables are priced by largest reduced cost; after a
        degenerate pivot the method switches to Bland's rule (lowest eligible
        index, lowest basic index among tied leaving rows) until the next
        nondegenerate pivot, which rules out cycling.
        """
        ub = self.ub
        A = self.A
        tol_d = 1e-9 * max(1.0, float(np.abs(cost).max()) if cost.size else 1.0)
        bland = False
        inf = np.inf
        while True:
            y = cost[self.basis] @ self.Binv
            d = cost - y @ A
            up = self.at_upper
            score = np.where(up, -d, d)
            eligible = (score > tol_d) & ~self.is_basic & (ub > 0)
            candidates = np.flatnonzero(eligible)
            if candidates.size == 0:
                return "optimal"
            if not bland and candidates.size > 1:
                candidates = candidates[np.argsort(-score[candidates], kind="stable")]
            ubB = ub[self.basis]
            pivoted = False
            # a bound flip keeps the basis, hence the reduced costs, so the scan continues
            for j in candidates:
                self._tick()
                w = self.Binv @ A[:, j]
                dw = -w if up[j] else w
                xB = self.xB
                with np.errstate(divide="ignore", invalid="ignore"):
                    r_dec = np.where(dw > PIVOT_TOL, np.maximum(xB, 0.0) / dw, inf)
                    r_inc = np.where(dw < -PIVOT_TOL, np.maximum(ubB - xB, 0.0) / -dw, inf)
                ratios = np.minimum(r_dec, r_inc)
                theta = ub[j]
                leave = -1
                rmin = ratios.min() if self.M else inf
                if rmin < theta:
                    ties = np.flatnonzero(ratios <= rmin + 1e-12 * (1.0 + rmin))
                    leave = int(ties[np.argmin(self.basis[ties])]) if ties.size > 1 else int(ties[0])
                    theta = rmin
                if theta == inf:
                    return "unbounded"
                self.xB = xB - theta * dw
                if leave < 0:
                    up[j] = not up[j]
                    continue
                old = self.basis[leave]
                self.is_basic[old] = False
                self.at_upper[old] = bool(r_inc[leave] <= r_dec[leave])
                self.basis[leave] = j
                self.is_basic[j] = True
                self.xB[leave] = theta if not up[j] else ub[j] - theta
                self.at_upper[j] = False
                piv = w[leave]
                row = self.Binv[leave] / piv
                self.Binv -= np.outer(w, row)
                self.Binv[leave] = row
                self._since_refactor += 1
                if self._since_refactor >= REFACTOR_EVERY:
                    self._refactor()
                bland = theta <= 1e-12
                pivoted = True
                break
            if not pivoted:
                return "optimal"

    def solution(self) -> np.ndarray:
        z = np.where(self.at_upper, self.ub, 0.0)
        z[self.basis] = self.xB
        return z


def solve_lp(p: LpProblem) -> LpSolution:
    """Solve ``max c@x s.t. G@x <= g, 0 <= x <= u``; duals are for the ``<=`` rows."""
    M, N = p.G.shape
    flip = p.g < 0
    K = int(flip.sum())
    sign = np.where(flip, -1.0, 1.0)
    Aeq = np.zeros((M, N + M + K))
    Aeq[:, :N] = p.G * sign[:, None]
    Aeq[:, N : N + M] = np.diag(sign)
    art_rows = np.flatnonzero(flip)
    for a, r in enumerate(art_rows):
        Aeq[r, N + M + a] = 1.0
    rhs = p.g * sign
    ub = np.concatenate([p.upper, np.full(M + K, np.inf)])
    basis = [N + i for i in range(M)]
    for a, r in enumerate(art_rows):
        basis[r] = N + M + a
    max_iter = 10 * (M + N) ** 2 + 10
    sx = _Simplex(Aeq, rhs, ub, basis, max_iter)

    if K:
        cost1 = np.zeros(N + M + K)
        cost1[N + M :] = -1.0
        sx.run(cost1)
        infeas = float(-(cost1 @ sx.solution()))
        if infeas > 1e-9 * (1.0 + np.abs(p.g).max()):
            return LpSolution(np.zeros(N), np.zeros(M), float("nan"), "infeasible", sx.iterations)
        sx.ub[N + M :] = 0.0
        sx.at_upper[N + M :] = False

    cost = np.concatenate([p.c, np.zeros(M + K)])
    status = sx.run(cost)
    if status == "unbounded":
        return LpSolution(np.zeros(N), np.zeros(M), float("inf"), "unbounded", sx.iterations)
    sx._refactor()
    z = sx.solution()
    x = np.clip(z[:N], 0.0, p.upper)
    y = (cost[sx.basis] @ sx.Binv) * sign
    y[np.abs(y) < 1e-13] = 0.0
    return LpSolution(x, y, float(p.c @ x), "optimal", sx.iterations)


def vertex_oracle(p: LpProblem) -> float:
    """Exact optimum by enumerating every basic point; ``-inf`` when infeasible.

    Assumes a bounded feasible region. Each candidate fixes the non-basic
    variables at a bound and solves for ``r`` basic variables on ``r`` tight rows.
    """
    M, N = p.G.shape
    if M + N > VERTEX_ORACLE_MAX:
        raise ValueError(f"vertex oracle limited to M+N <= {VERTEX_ORACLE_MAX}")
    best = -np.inf
    ftol = 1e-9
    for r in range(min(M, N) + 1):
        for rows in itertools.combinations(range(M), r):
            rows = list(rows)
            for cols in itertools.combinations(range(N), r):
                cols = list(cols)
                rest = [j for j in range(N) if j not in cols]
                choices = [(0.0, p.upper[j]) if np.isfinite(p.upper[j]) else (0.0,) for j in rest]
                sub = p.G[np.ix_(rows, cols)]
                if r and abs(np.linalg.det(sub)) < 1e-12:
                    continue
                for fixed in itertools.product(*choices):
                    x = np.zeros(N)
                    x[rest] = fixed
                    if r:
                        x[cols] = np.linalg.solve(sub, p.g[rows] - p.G[np.ix_(rows, rest)] @ x[rest])
                    if np.any(x < -ftol) or np.any(x > p.upper + ftol):
                        continue
                    if np.any(p.G @ x > p.g + ftol * (1 + np.abs(p.g))):
                        continue
                    best = max(best, float(p.c @ x))
    return best


# ---------------------------------------------------------------------------
# Allocation LPs
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AllocationLp:
    """An LP encoding of ``max sum f_t(x_t) s.t. sum A_t x_t <= budget``.

    ``owner[j]`` and ``slot[j]`` say which item and which coordinate of its
    decision column ``j`` contributes to. Budget rows come first in ``problem``.
    """

    problem: LpProblem
    owner: np.ndarray
    slot: np.ndarray
    n: int
    m: int
    k: int

    def decisions(self, x: np.ndarray) -> np.ndarray:
        X = np.zeros((self.n, self.k))
        np.add.at(X, (self.owner, self.slot), x)
        return X


def chord_slopes(f: ConcaveScalar, pieces: int = CHORD_PIECES) -> np.ndarray:
    grid = np.linspace(0.0, 1.0, pieces + 1)
    vals = np.array([f.value(float(z)) for z in grid])
    return np.diff(vals) * pieces


def allocation_lp(items: Sequence[Item], budget) -> AllocationLp:
    budget = np.asarray(budget, dtype=float)
    m = budget.size
    n = len(items)
    k = items[0].k if n else 1
    if n and all(type(it.f) is LinearSimplex for it in items) and k == 1:
        c = np.array([it.f.c[0] for it in items])
        G = np.array([it.A[:, 0] for it in items]).T.reshape(m, n)
        prob = LpProblem(c, G, budget, np.ones(n))
        return AllocationLp(prob, np.arange(n), np.zeros(n, dtype=int), n, m, k)

    costs, cols, uppers, owner, slot = [], [], [], [], []
    extra_rows = []  # (column indices, coefficient, rhs)
    for t, it in enumerate(items):
        f = it.f
        if isinstance(f, (LinearSimplex, LinearSimplexEq)):
            start = len(costs)
            for j in range(k):
                costs.append(f.c[j])
                cols.append(it.A[:, j])
                uppers.append(1.0)
                owner.append(t)
                slot.append(j)
            idx = list(range(start, start + k))
            if isinstance(f, LinearSimplexEq):
                extra_rows.append((idx, 1.0, 1.0))
                extra_rows.append((idx, -1.0, -1.0))
            elif k > 1:
                extra_rows.append((idx, 1.0, 1.0))
        elif isinstance(f, ConcaveScalar):
            for s in chord_slopes(f):
                costs.append(s)
                cols.append(it.A[:, 0])
                uppers.append(1.0 / CHORD_PIECES)
                owner.append(t)
                slot.append(0)
        else:
            raise TypeError(f"unsupported utility {f!r}")
    N = len(costs)
    G = np.zeros((m + len(extra_rows), N))
    if N:
        G[:m] = np.array(cols).T
    g = np.concatenate([budget, np.zeros(len(extra_rows))])
    for r, (idx, coef, rhs) in enumerate(extra_rows):
        G[m + r, idx] = coef
        g[m + r] = rhs
    prob = LpProblem(np.array(costs, dtype=float), G, g, np.array(uppers, dtype=float))
    return AllocationLp(prob, np.array(owner, dtype=int), np.array(slot, dtype=int), n, m, k)


def solve_allocation(items: Sequence[Item], budget):
    """Optimal value, per-item decisions ``(n, k)`` and budget-row duals."""
    budget = np.asarray(budget, dtype=float)
    if not len(items):
        return 0.0, np.zeros((0, 1)), np.zeros(budget.size)
    alp = allocation_lp(items, budget)
    sol = solve_lp(alp.problem)
    if not sol.optimal:
        raise LpError(f"allocation LP returned status {sol.status}")
    return sol.value, alp.decisions(sol.x), sol.y[: alp.m].copy()


def offline_optimum(instance: Instance, budget=None):
    """``(P*, x*, y*)`` for the whole instance: value, ``(n, k)`` decisions, budget duals."""
    b = instance.b if budget is None else budget
    if instance.n == 0:
        return 0.0, np.zeros((0, instance.k)), np.zeros(instance.m)
    return solve_allocation(instance.items, b)
