"""Exhaustive search for schedule parameters (partition and block probabilities).

Candidates are enumerated with probability vectors in the outer loop and
partitions in the inner loop, both in lexicographic order, so the first
feasible candidate is reproducible. A plant's feasibility depends only on
the probability of its own block, so per-(plant, p) answers are memoized
and the partition enumeration prunes any block containing an infeasible
plant. The pruned walk visits the feasible candidates in the same order as
the plain enumeration.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Callable, Iterator, Optional

from .certify import DEFAULT_KAPPA, StabilityCertificate, find_certificate
from .model import NcsConfig, closed_loop_matrix
from .params import Partition, ProbabilityVector, ScheduleParameters
from .synthesis import PlantSynthesis, synthesize_plant

__all__ = [
    "BudgetExhausted",
    "Partition",
    "ProbabilityVector",
    "ScheduleParameters",
    "SearchResult",
    "count_partitions",
    "enumerate_partitions",
    "enumerate_probability_vectors",
    "grid_size",
    "search",
    "search_schedule_parameters",
    "search_with_synthesis",
]


class SynthesisRequired(ValueError):
    def __init__(self, missing):
        super().__init__(f"synthesis required first: plants {sorted(missing)} have no gain")


class BudgetExhausted(RuntimeError):
    """The wall-clock budget ran out before the grid was exhausted."""


def _check_nm(N: int, M: int):
    if not 0 < M < N:
        raise ValueError(f"need 0 < M < N (got N={N}, M={M})")
    if N % M:
        raise ValueError(f"N % M must be 0 (got N={N}, M={M})")


def count_partitions(N: int, M: int) -> int:
    _check_nm(N, M)
    v = N // M
    return math.factorial(N) // (math.factorial(M) ** v * math.factorial(v))


def _partitions(remaining: tuple, M: int, allowed=None, depth: int = 0):
    if not remaining:
        yield ()
        return
    first, rest = remaining[0], remaining[1:]
    ok = allowed[depth] if allowed is not None else None
    if ok is not None and first not in ok:
        return
    pool = rest if ok is None else tuple(i for i in rest if i in ok)
    for others in combinations(pool, M - 1):
        block = (first,) + others
        taken = set(others)
        left = tuple(i for i in rest if i not in taken)
        for tail in _partitions(left, M, allowed, depth + 1):
            yield (block,) + tail


def enumerate_partitions(N: int, M: int) -> Iterator[Partition]:
    """Every unordered partition of 1..N into N/M blocks of size M, once each."""
    _check_nm(N, M)
    for blocks in _partitions(tuple(range(1, N + 1)), M):
        yield Partition(blocks)


def grid_size(h: Fraction) -> int:
    """Largest integer r with r*h < 1."""
    h = Fraction(h)
    if not 0 < h < 1:
        raise ValueError(f"step must lie in ]0,1[, got {h}")
    return math.ceil(1 / h) - 1


def _compositions(total: int, parts: int, hi: int):
    if parts == 1:
        if 1 <= total <= hi:
            yield (total,)
        return
    for k in range(1, min(hi, total - parts + 1) + 1):
        for tail in _compositions(total - k, parts - 1, hi):
            yield (k,) + tail


def enumerate_probability_vectors(v: int, h) -> Iterator[ProbabilityVector]:
    """Ordered v-tuples from ``{h, 2h, ..., r h}`` summing to exactly 1, lexicographically."""
    if v < 2:
        raise ValueError(f"need at least two blocks, got v={v}")
    h = Fraction(h)
    r = grid_size(h)
    n = 1 / h
    if n.denominator != 1:
        return
    for ks in _compositions(int(n), v, r):
        yield ProbabilityVector(tuple(k * h for k in ks))


@dataclass(frozen=True)
class SearchResult:
    params: ScheduleParameters
    certificates: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def partition(self) -> Partition:
        return self.params.partition

    @property
    def probabilities(self) -> ProbabilityVector:
        return self.params.probabilities


def search(
    N: int,
    M: int,
    h,
    oracle: Callable[[int, Fraction], Optional[object]],
    budget: Optional[float] = None,
    threads: int = 1,
) -> Optional[SearchResult]:
    """First candidate where ``oracle(plant, p)`` is not None for every plant.

    ``oracle`` is called at most once per (plant, p). ``budget`` is in seconds.
    """
    _check_nm(N, M)
    v = N // M
    plants = tuple(range(1, N + 1))
    memo: dict = {}
    start = time.monotonic()

    def fill(p):
        todo = [i for i in plants if (i, p) not in memo]
        if threads > 1 and len(todo) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                answers = list(pool.map(lambda i: oracle(i, p), todo))
        else:
            answers = [oracle(i, p) for i in todo]
        memo.update({(i, p): a for i, a in zip(todo, answers)})

    for probs in enumerate_probability_vectors(v, h):
        if budget is not None and time.monotonic() - start > budget:
            raise BudgetExhausted("budget exhausted")
        for p in set(probs):
            fill(p)
        allowed = [frozenset(i for i in plants if memo[i, p] is not None) for p in probs]
        for blocks in _partitions(plants, M, allowed):
            part = Partition(blocks)
            witnesses = {i: memo[i, probs[j]] for j, b in enumerate(blocks) for i in b}
            return SearchResult(ScheduleParameters(part, probs), witnesses)
    return None


def search_schedule_parameters(
    config: NcsConfig, h, kappa: float = DEFAULT_KAPPA, budget: Optional[float] = None, threads: int = 1
) -> Optional[SearchResult]:
    """Partition and probabilities under which every plant (with its gain) has a certificate."""
    missing = [p.index for p in config.plants if not p.has_gain]
    if missing:
        raise SynthesisRequired(missing)
    modes = {p.index: (closed_loop_matrix(p), p.A) for p in config.plants}

    def oracle(i: int, p: Fraction) -> Optional[StabilityCertificate]:
        return find_certificate(*modes[i], p, kappa)

    return search(config.N, config.M, h, oracle, budget=budget, threads=threads)


def search_with_synthesis(
    config: NcsConfig, h, kappa: float = DEFAULT_KAPPA, budget: Optional[float] = None, threads: int = 1
) -> Optional[SearchResult]:
    """Joint search: a candidate is feasible when every plant admits a synthesized gain.

    Certificates in the result are the synthesis certificates; the gains are in
    ``result.extras["gains"]``.
    """

    def oracle(i: int, p: Fraction) -> Optional[PlantSynthesis]:
        plant = config.plant(i)
        out = synthesize_plant(plant.A, plant.B, p, kappa, i)
        return out if out.ok else None

    found = search(config.N, config.M, h, oracle, budget=budget, threads=threads)
    if found is None:
        return None
    syn = found.certificates
    return SearchResult(
        found.params,
        {i: s.certificate for i, s in syn.items()},
        {"gains": {i: s.K for i, s in syn.items()}},
    )
