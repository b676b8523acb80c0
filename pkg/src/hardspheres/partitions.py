"""Partition-lattice combinatorics.

Set partitions are enumerated as restricted growth strings and carry
0-based element labels.  Graded sequences in "toy" mode hold one symmetric
scalar per level (use :class:`fractions.Fraction` for exact identities);
in "histogram" mode level ``s`` holds an array that broadcasts over ``s``
slot axes, so the same partition sums yield tensor products.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import combinations
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np

MAX_ENUMERATION = 12
MAX_STIRLING = 30


@dataclass(frozen=True)
class SetPartition:
    """Blocks of a partition of ``{0, ..., n-1}``, ordered by smallest element."""

    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        blocks = tuple(tuple(sorted(b)) for b in self.blocks)
        if any(len(b) == 0 for b in blocks):
            raise ValueError("empty block")
        elems = [x for b in blocks for x in b]
        if sorted(elems) != list(range(len(elems))):
            raise ValueError(f"blocks do not partition 0..{len(elems) - 1}: {blocks}")
        object.__setattr__(self, "blocks", tuple(sorted(blocks)))

    @property
    def n(self) -> int:
        return sum(len(b) for b in self.blocks)

    def __len__(self) -> int:
        return len(self.blocks)


def _check_enumeration(n: int) -> None:
    if not (1 <= n <= MAX_ENUMERATION):
        raise ValueError(f"set partitions are enumerated for 1 <= n <= {MAX_ENUMERATION}, got {n}")


def enumerate_set_partitions(n: int) -> Iterator[SetPartition]:
    """Every partition of ``{0..n-1}`` once, in restricted-growth-string order."""
    _check_enumeration(n)
    a = [0] * n
    b = [1] * n  # b[i] = 1 + max(a[:i])

    while True:
        blocks: list[list[int]] = [[] for _ in range(max(a) + 1)]
        for i, label in enumerate(a):
            blocks[label].append(i)
        yield SetPartition(tuple(tuple(x) for x in blocks))
        i = n - 1
        while i > 0 and a[i] == b[i]:
            i -= 1
        if i == 0:
            return
        a[i] += 1
        for k in range(i + 1, n):
            a[k] = 0
            b[k] = max(b[i], a[i] + 1)


def mobius_weight(P: SetPartition | int) -> int:
    """``(-1)^(|P|-1) (|P|-1)!``; accepts a partition or its block count."""
    k = P if isinstance(P, int) else len(P.blocks)
    return (-1) ** (k - 1) * math.factorial(k - 1)


@lru_cache(maxsize=None)
def _stirling_row(n: int) -> tuple[int, ...]:
    if n == 0:
        return (1,)
    prev = _stirling_row(n - 1)
    row = [0] * (n + 1)
    for k in range(1, n + 1):
        row[k] = k * (prev[k] if k < len(prev) else 0) + prev[k - 1]
    return tuple(row)


def stirling2(n: int, k: int) -> int:
    """Stirling number of the second kind, exact."""
    if not (0 <= k <= n <= MAX_STIRLING):
        raise ValueError(f"stirling2 requires 0 <= k <= n <= {MAX_STIRLING}, got ({n}, {k})")
    return _stirling_row(n)[k]


def bell(n: int) -> int:
    if not (0 <= n <= MAX_STIRLING):
        raise ValueError(f"bell requires 0 <= n <= {MAX_STIRLING}")
    return sum(_stirling_row(n))


def cumulant_bound_check(n: int) -> tuple[int, float, bool]:
    """Count of weighted partitions of an (n+1)-set against ``n! e^(n+2)``."""
    if not (0 <= n <= MAX_ENUMERATION):
        raise ValueError(f"n must lie in 0..{MAX_ENUMERATION}")
    lhs = sum(stirling2(n + 1, k) * math.factorial(k - 1) for k in range(1, n + 2))
    rhs = math.factorial(n) * math.exp(n + 2)
    return lhs, rhs, lhs <= rhs


def delta_identity_check(n: int) -> int:
    """Sum of Mobius weights over all partitions of an n-set (equals [n == 1])."""
    if not (1 <= n <= 10):
        raise ValueError("n must lie in 1..10")
    return sum(mobius_weight(P) for P in enumerate_set_partitions(n))


def reduced_cumulant_coefficients(n: int) -> list[int]:
    """``[(-1)^k C(n, k)]`` for ``k = 0..n``."""
    if not (0 <= n <= 20):
        raise ValueError("n must lie in 0..20")
    return [(-1) ** k * math.comb(n, k) for k in range(n + 1)]


# --------------------------------------------------------------------------
# graded sequences

@dataclass(frozen=True)
class GradedSequence:
    """Levels ``0..n_max`` of a sequence of symmetric n-particle functions.

    In toy mode each level is a scalar.  In histogram mode level ``s`` is an
    array with ``s`` leading slot axes of equal length (level 0 a scalar).
    """

    levels: tuple
    mode: str = "toy"

    def __post_init__(self):
        if self.mode not in ("toy", "histogram"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if len(self.levels) == 0:
            raise ValueError("a graded sequence needs at least level 0")
        object.__setattr__(self, "levels", tuple(self.levels))

    @property
    def n_max(self) -> int:
        return len(self.levels) - 1

    def __getitem__(self, s: int):
        return self.levels[s]

    @classmethod
    def unit(cls, n_max: int, mode: str = "toy", cells: int | None = None) -> "GradedSequence":
        if mode == "toy":
            return cls((Fraction(1),) + (Fraction(0),) * n_max, mode)
        return cls(tuple([1.0] + [np.zeros((cells,) * s) for s in range(1, n_max + 1)]), mode)


def _slot_view(arr, slots: Sequence[int], s: int):
    """Reshape an array over ``len(slots)`` axes to broadcast over ``s`` axes."""
    arr = np.asarray(arr)
    if arr.ndim == 0:
        return arr
    order = np.argsort(slots)
    arr = np.transpose(arr, order)
    shape = [1] * s
    for ax, slot in enumerate(sorted(slots)):
        shape[slot] = arr.shape[ax]
    return arr.reshape(shape)


def _check_compatible(*seqs: GradedSequence) -> None:
    modes = {g.mode for g in seqs}
    orders = {g.n_max for g in seqs}
    if len(modes) != 1:
        raise ValueError("graded sequences in different modes")
    if len(orders) != 1:
        raise ValueError(f"truncation orders differ: {sorted(orders)}")


def star_product(f: GradedSequence, g: GradedSequence) -> GradedSequence:
    """``(f * g)_s = sum over subsets Z of {1..s} of f(Z) g(complement)``."""
    _check_compatible(f, g)
    out = []
    for s in range(f.n_max + 1):
        if f.mode == "toy":
            out.append(sum(math.comb(s, k) * f[k] * g[s - k] for k in range(s + 1)))
            continue
        total = 0.0
        for k in range(s + 1):
            for Z in combinations(range(s), k):
                rest = [x for x in range(s) if x not in Z]
                total = total + _slot_view(f[k], Z, s) * _slot_view(g[s - k], rest, s)
        out.append(np.broadcast_to(total, (f[1].shape[0],) * s).copy() if s else total)
    return GradedSequence(tuple(out), f.mode)


def _partition_sum(levels, s: int, weight: Callable[[int], int], mode: str):
    """``sum_P weight(|P|) prod_blocks levels[|block|]`` over partitions of an s-set."""
    if mode == "toy":
        # collapse by block-size multiset is unnecessary at these sizes
        return sum(weight(len(P)) * math.prod(levels[len(b)] for b in P.blocks)
                   for P in enumerate_set_partitions(s))
    total = 0.0
    for P in enumerate_set_partitions(s):
        term = weight(len(P))
        for b in P.blocks:
            term = term * _slot_view(levels[len(b)], b, s)
        total = total + term
    cells = np.asarray(levels[1]).shape[0]
    return np.broadcast_to(total, (cells,) * s).copy()


def exp_star(h: GradedSequence) -> GradedSequence:
    """Partition-lattice exponential; requires level 0 equal to 0."""
    if h[0] != 0:
        raise ValueError("exp_star requires level 0 equal to 0")
    one = Fraction(1) if h.mode == "toy" else 1.0
    out = [one] + [_partition_sum(h.levels, s, lambda k: 1, h.mode) for s in range(1, h.n_max + 1)]
    return GradedSequence(tuple(out), h.mode)


def ln_star(u: GradedSequence) -> GradedSequence:
    """Inverse of :func:`exp_star`; requires level 0 equal to 1."""
    if u[0] != 1:
        raise ValueError("ln_star requires level 0 equal to 1")
    zero = Fraction(0) if u.mode == "toy" else 0.0
    out = [zero] + [_partition_sum(u.levels, s, mobius_weight, u.mode)
                    for s in range(1, u.n_max + 1)]
    return GradedSequence(tuple(out), u.mode)


# --------------------------------------------------------------------------
# cluster transforms on explicit arguments

BlockValues = Mapping[tuple[int, ...], object] | Callable[[tuple[int, ...]], object]


def _lookup(values: BlockValues, block: tuple[int, ...]):
    if callable(values):
        return values(block)
    try:
        return values[block]
    except KeyError:
        raise ValueError(f"missing value for block {block}") from None


def _cluster(values: BlockValues, s: int, weight: Callable[[int], int]):
    total = 0
    for P in enumerate_set_partitions(s):
        term = weight(len(P))
        for b in P.blocks:
            term = term * _lookup(values, b)
        total = total + term
    return total


def cluster_forward(G_values: BlockValues, s: int):
    """``F(0..s-1) = sum_P prod_blocks G(block)``.

    ``G_values`` maps sorted 0-based index tuples to values, or is a
    callable on such tuples.
    """
    return _cluster(G_values, s, lambda k: 1)


def cluster_invert(F_values: BlockValues, s: int):
    """``G(0..s-1) = sum_P (-1)^(|P|-1) (|P|-1)! prod_blocks F(block)``."""
    return _cluster(F_values, s, mobius_weight)


def nonempty_subsets(s: int) -> list[tuple[int, ...]]:
    return [Z for k in range(1, s + 1) for Z in combinations(range(s), k)]


def cluster_forward_all(G_values: BlockValues, s: int) -> dict:
    """F on every nonempty subset of ``0..s-1`` (relabeled into each subset)."""
    return {Z: cluster_forward(lambda b, Z=Z: _lookup(G_values, tuple(Z[i] for i in b)), len(Z))
            for Z in nonempty_subsets(s)}


def cluster_invert_all(F_values: BlockValues, s: int) -> dict:
    """G on every nonempty subset of ``0..s-1``."""
    return {Z: cluster_invert(lambda b, Z=Z: _lookup(F_values, tuple(Z[i] for i in b)), len(Z))
            for Z in nonempty_subsets(s)}
