"""Seeded instance generators and random permutations.

Randomness comes from ``numpy.random.Generator`` (PCG64), whose streams are
bit-identical across platforms for a given seed. Independent sub-streams are
keyed with :func:`derive_seed`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Instance, Item, LinearSimplex, LinearSimplexEq

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One output of the splitmix64 mixer for state ``x``."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, index: int) -> int:
    """``seed XOR splitmix64(index)``; adding indices never changes earlier streams."""
    return (int(seed) & _MASK64) ^ splitmix64(int(index))


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed) & _MASK64)


def sample_permutation(n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng.permutation(n)


# ---------------------------------------------------------------------------
# Worst-case multiset
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WorstCaseSpec:
    d: int
    c: float
    seed: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if not self.c >= self.d:
            raise ValueError("c must be >= d")

    @property
    def m(self) -> int:
        return 2**self.d

    @property
    def label(self) -> str:
        c = int(self.c) if float(self.c).is_integer() else self.c
        return f"d={self.d},c={c}"


def bit_vectors(d: int):
    """``(v, w)`` with ``v[i, l] = bit i of l`` (most significant first) and ``w = 1 - v``."""
    if d < 1:
        raise ValueError("d must be >= 1")
    m = 2**d
    labels = np.arange(m)
    v = np.array([(labels >> (d - 1 - i)) & 1 for i in range(d)], dtype=float)
    return v, 1.0 - v


def _ceil(x: float) -> int:
    return int(math.ceil(x - 1e-9))


def worst_case_counts(d: int, c: float):
    """Multiplicities ``(ceil(c/d), ceil(sqrt(c/d)/2), ceil(2c/d))`` of the four groups."""
    return _ceil(c / d), _ceil(0.5 * math.sqrt(c / d)), _ceil(2 * c / d)


def build_worst_case(spec: WorstCaseSpec) -> Instance:
    """Hard multiset on ``m = 2**d`` resources with budget ``c`` each.

    For every ``i < d`` it holds value-4 items on ``v_i``, and value-3, 2, 1
    items on the complement ``w_i``; the value-3 count ``j_i`` is a sum of
    ``ceil(2c/d)`` fair coin flips and the value-1 count is the remainder.
    """
    d, c = spec.d, float(spec.c)
    v, w = bit_vectors(d)
    many4, many2, pairs = worst_case_counts(d, c)
    rng = make_rng(spec.seed)
    j = [int(rng.integers(0, 2, size=pairs).sum()) for _ in range(d)]

    def items(value, col, count):
        item = Item(LinearSimplex(np.array([value])), col[:, None])
        return [item] * count

    out = []
    for i in range(d):
        out += items(4.0, v[i], many4)
    for i in range(d):
        out += items(3.0, w[i], j[i])
    for i in range(d):
        out += items(2.0, w[i], many2)
    for i in range(d):
        out += items(1.0, w[i], pairs - j[i])
    return Instance(np.full(2**d, c), tuple(out))


def worst_case_size(d: int, c: float) -> int:
    many4, many2, pairs = worst_case_counts(d, c)
    return d * (many4 + many2 + pairs)


# ---------------------------------------------------------------------------
# Random corpora
# ---------------------------------------------------------------------------


def random_linear_instance(n: int, m: int, k: int, density: float, seed: int, gamma0: float = 0.25) -> Instance:
    """Linear items with ``c ~ U(0,1)^k`` and sparse ``A`` entries ``U(0, gamma0 * b_i)``; ``b = 1``.

    Every item gets at least one nonzero consumption entry, so ``density = 0``
    still yields a valid instance.
    """
    if min(n, m, k) < 1 or not 0 <= density <= 1:
        raise ValueError("need n, m, k >= 1 and density in [0, 1]")
    rng = make_rng(seed)
    b = np.ones(m)
    C = rng.uniform(0.0, 1.0, size=(n, k))
    mask = rng.uniform(size=(n, m, k)) < density
    A = mask * rng.uniform(0.0, gamma0, size=(n, m, k)) * b[None, :, None]
    forced = rng.integers(0, m * k, size=n)
    forced_vals = rng.uniform(0.0, gamma0, size=n)
    for t in range(n):
        if not A[t].any():
            i, jj = divmod(int(forced[t]), k)
            A[t, i, jj] = forced_vals[t] * b[i] or gamma0 * b[i]
    items = tuple(Item(LinearSimplex(C[t]), A[t]) for t in range(n))
    return Instance(b, items)


def feasibility_instance(n: int, m: int, seed: int, k: int | None = None):
    """A feasibility instance (``b = 1``) with a certificate ``x_star`` on the simplex.

    ``A_t`` entries are uniform and each resource row is rescaled so that the
    certificate uses exactly the unit budget.
    """
    if n < m:
        raise ValueError("need n >= m")
    k = m if k is None else k
    rng = make_rng(seed)
    x_star = rng.dirichlet(np.ones(k), size=n)
    A = rng.uniform(0.0, 1.0, size=(n, m, k))
    loads = np.einsum("tij,tj->i", A, x_star)
    A = A / loads[None, :, None]
    loads = np.einsum("tij,tj->i", A, x_star)
    # rounding can leave a row a few ulps above 1
    A = A / np.maximum(loads, 1.0)[None, :, None]
    items = tuple(Item(LinearSimplexEq(np.zeros(k)), A[t]) for t in range(n))
    return Instance(np.ones(m), items), x_star
