"""Ground-truth machinery: exhaustive stable-set enumeration for tiny
markets and standalone simulators for the auxiliary stochastic processes
(coupon collection and order-statistic sampling)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations, permutations

import numpy as np

from .engine import UNMATCHED, AcceptRule, LoyaltyAccept
from .prefs import PreferenceOracle

__all__ = [
    "SizeLimitError",
    "StableSet",
    "CollectorStats",
    "enumerate_stable",
    "rural_hospital_check",
    "coupon_collector_sim",
    "absent_minded_sim",
    "min_element_sim",
]

ENUMERATION_LIMIT = 8
FULL_UNIVERSE_LIMIT = 6


class SizeLimitError(ValueError):
    """Raised when an instance is too large for exhaustive enumeration."""


@dataclass
class StableSet:
    """All stable matchings of a small instance under one accept rule.

    Matchings are hospital-of-doctor tuples (-1 = unmatched doctor).
    ``doctor_optimal`` is filled only for the classic rule (k = 0), where
    the matching giving every doctor their best stable partner exists.
    """

    matchings: list[tuple[int, ...]]
    doctor_optimal: tuple[int, ...] | None
    unmatched_doctor_per_matching: list[int | None]

    def __contains__(self, hospital_of_doctor) -> bool:
        return tuple(hospital_of_doctor) in set(self.matchings)

    def to_json_dict(self) -> dict:
        def encode(matching: tuple[int, ...]) -> list[int | None]:
            return [None if h == UNMATCHED else h + 1 for h in matching]

        return {
            "count": len(self.matchings),
            "matchings": [encode(m) for m in self.matchings],
            "doctor_optimal": None
            if self.doctor_optimal is None
            else encode(self.doctor_optimal),
            "unmatched_doctor_per_matching": [
                None if d is None else d + 1 for d in self.unmatched_doctor_per_matching
            ],
        }


def _rank_matrices(oracle: PreferenceOracle) -> tuple[list[list[int]], list[list[int]]]:
    """Force full materialization; returns (doctor-side, hospital-side) ranks."""
    n_d, n_h = oracle.shape.num_doctors, oracle.shape.num_hospitals
    rank_d = [[oracle.doctor_rank_of(d, h) for h in range(n_h)] for d in range(n_d)]
    rank_h = [[oracle.rank_of(h, d) for d in range(n_d)] for h in range(n_h)]
    return rank_d, rank_h


def _is_stable(
    mu_d: tuple[int, ...],
    mu_h: list[int],
    rank_d: list[list[int]],
    rank_h: list[list[int]],
    accept: AcceptRule,
    n_h: int,
) -> bool:
    for d, match in enumerate(mu_d):
        row = rank_d[d]
        own = row[match] if match != UNMATCHED else n_h + 1
        for h in range(n_h):
            if row[h] >= own:
                continue
            incumbent = mu_h[h]
            rank_inc = None if incumbent == UNMATCHED else rank_h[h][incumbent]
            if accept.accepts(rank_h[h][d], rank_inc):
                return False
    return True


def _universe(n_d: int, n_h: int, full: bool):
    """Candidate matchings as hospital-of-doctor tuples.

    Default universe saturates the smaller side, which every stable
    matching must do (an unmatched doctor-hospital pair always blocks,
    since an unmatched hospital accepts anyone). The full universe covers
    every partial one-to-one matching as a cross-check.
    """
    if not full:
        if n_d >= n_h:
            for assignment in permutations(range(n_d), n_h):
                mu_d = [UNMATCHED] * n_d
                for h, d in enumerate(assignment):
                    mu_d[d] = h
                yield tuple(mu_d)
        else:
            for assignment in permutations(range(n_h), n_d):
                yield tuple(assignment)
        return
    for size in range(min(n_d, n_h) + 1):
        for doctors in combinations(range(n_d), size):
            for hospitals in permutations(range(n_h), size):
                mu_d = [UNMATCHED] * n_d
                for d, h in zip(doctors, hospitals):
                    mu_d[d] = h
                yield tuple(mu_d)


def enumerate_stable(
    oracle: PreferenceOracle,
    accept: AcceptRule,
    full_universe: bool = False,
) -> StableSet:
    """Filter every candidate matching by the zero-blocking-pair test.

    Instances are capped at 8 agents per side (6 with the full universe);
    anything larger raises SizeLimitError.
    """
    n_d, n_h = oracle.shape.num_doctors, oracle.shape.num_hospitals
    limit = FULL_UNIVERSE_LIMIT if full_universe else ENUMERATION_LIMIT
    if n_d > limit or n_h > limit:
        raise SizeLimitError(
            f"instance {n_d}x{n_h} exceeds the enumeration limit of {limit}"
        )
    rank_d, rank_h = _rank_matrices(oracle)
    stable: list[tuple[int, ...]] = []
    for mu_d in _universe(n_d, n_h, full_universe):
        mu_h = [UNMATCHED] * n_h
        for d, h in enumerate(mu_d):
            if h != UNMATCHED:
                mu_h[h] = d
        if _is_stable(mu_d, mu_h, rank_d, rank_h, accept, n_h):
            stable.append(mu_d)

    unmatched_per = []
    for mu_d in stable:
        free = [d for d, h in enumerate(mu_d) if h == UNMATCHED]
        unmatched_per.append(free[0] if len(free) == 1 else None)

    doctor_optimal = None
    if isinstance(accept, LoyaltyAccept) and accept.k == 0 and stable:
        best = [
            min(
                rank_d[d][m[d]] if m[d] != UNMATCHED else n_h + 1
                for m in stable
            )
            for d in range(n_d)
        ]
        for m in stable:
            ranks = [
                rank_d[d][m[d]] if m[d] != UNMATCHED else n_h + 1 for d in range(n_d)
            ]
            if ranks == best:
                doctor_optimal = m
                break
    return StableSet(stable, doctor_optimal, unmatched_per)


def rural_hospital_check(oracle: PreferenceOracle) -> bool:
    """Whether the same doctor is unmatched in every classic stable matching.

    Requires one extra doctor (|D| = |H| + 1) and a small instance.
    """
    n_d, n_h = oracle.shape.num_doctors, oracle.shape.num_hospitals
    if n_d != n_h + 1:
        raise ValueError("rural-hospital check needs exactly one extra doctor")
    if n_d > ENUMERATION_LIMIT:
        raise SizeLimitError(f"instance {n_d}x{n_h} exceeds the enumeration limit")
    stable = enumerate_stable(oracle, LoyaltyAccept(0))
    unmatched = {u for u in stable.unmatched_doctor_per_matching}
    return len(unmatched) == 1


@dataclass
class CollectorStats:
    """Aggregates over repeated collection trials."""

    n: int
    q: float
    trials: int
    mean_attempts: float
    tail_threshold: float
    tail_count: int

    @property
    def tail_probability(self) -> float:
        return self.tail_count / self.trials

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "q": self.q,
            "trials": self.trials,
            "mean_attempts": self.mean_attempts,
            "tail_threshold": self.tail_threshold,
            "tail_count": self.tail_count,
            "tail_probability": self.tail_probability,
        }


def _collection_attempts(rng: np.random.Generator, n: int, q: float | None) -> int:
    """Attempts until all n types are kept, drawing types uniformly.

    ``q`` is the per-draw keep probability for an uncollected type;
    None skips the coin entirely (plain collection).
    """
    seen = np.zeros(n, dtype=bool)
    remaining = n
    attempts = 0
    chunk = max(64, int(2 * n / (q or 1.0)))
    while True:
        draws = rng.integers(0, n, size=chunk)
        if q is None:
            effective = draws
            positions = None
        else:
            kept = rng.random(chunk) < q
            effective = draws[kept]
            positions = np.nonzero(kept)[0]
        uniq, first_idx = np.unique(effective, return_index=True)
        fresh = ~seen[uniq]
        new_types = uniq[fresh]
        new_idx = first_idx[fresh]
        if positions is not None:
            new_idx = positions[new_idx]
        if len(new_types) >= remaining:
            final = np.partition(new_idx, remaining - 1)[remaining - 1]
            return attempts + int(final) + 1
        attempts += chunk
        seen[new_types] = True
        remaining -= len(new_types)


def coupon_collector_sim(n: int, trials: int, seed: int = 0) -> CollectorStats:
    """Simulate uniform draws until all n types are seen.

    The tail is measured against the 2 n ln n threshold.
    """
    if n < 1 or trials < 1:
        raise ValueError("n and trials must be positive")
    rng = np.random.default_rng(seed)
    threshold = 2.0 * n * math.log(n) if n > 1 else 2.0
    total = 0
    tail = 0
    for _ in range(trials):
        t = _collection_attempts(rng, n, None)
        total += t
        if t > threshold:
            tail += 1
    return CollectorStats(n, 1.0, trials, total / trials, threshold, tail)


def absent_minded_sim(n: int, q: float, trials: int, seed: int = 0) -> CollectorStats:
    """Collection where each draw of an uncollected type is kept only with
    probability q; attempts until every type is kept.

    The tail threshold scales the plain one by 1/q.
    """
    if not 0.0 < q <= 1.0:
        raise ValueError("q must be in (0, 1]")
    if n < 1 or trials < 1:
        raise ValueError("n and trials must be positive")
    rng = np.random.default_rng(seed)
    threshold = (2.0 * n * math.log(n) if n > 1 else 2.0) / q
    total = 0
    tail = 0
    for _ in range(trials):
        t = _collection_attempts(rng, n, q)
        total += t
        if t > threshold:
            tail += 1
    return CollectorStats(n, q, trials, total / trials, threshold, tail)


def min_element_sim(n: int, k: int, trials: int, seed: int = 0) -> float:
    """Mean of min(X) over uniformly sampled k-subsets X of {1..n}."""
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    if trials < 1:
        raise ValueError("trials must be positive")
    rng = np.random.default_rng(seed)
    chunk_rows = max(1, 2_000_000 // n)
    total = 0.0
    done = 0
    while done < trials:
        rows = min(chunk_rows, trials - done)
        u = rng.random((rows, n))
        subset = np.argpartition(u, k - 1, axis=1)[:, :k]
        total += float((subset.min(axis=1) + 1).sum())
        done += rows
    return total / trials
