"""Blocking-pair verification and accept-function consistency checks.

A matching is stable when no doctor-hospital pair (d, h) exists where d
prefers h to their own match and h's accept rule would take d over its
incumbent. Verification walks exactly the pairs where the doctor side
prefers, forcing any lazy preference draws those pairs need.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .engine import UNMATCHED, AcceptRule
from .prefs import PreferenceOracle

__all__ = [
    "BlockingReport",
    "ConsistencyReport",
    "verify_stable",
    "check_consistency",
]


@dataclass
class BlockingReport:
    """Blocking pairs found (0-based ids); empty means stable."""

    pairs: list[tuple[int, int]] = field(default_factory=list)
    doctors_checked: int = 0
    sample_fraction: float = 1.0

    @property
    def is_stable(self) -> bool:
        return not self.pairs

    def to_json_dict(self) -> dict:
        return {
            "is_stable": self.is_stable,
            "blocking_pairs": [[d + 1, h + 1] for d, h in self.pairs],
            "doctors_checked": self.doctors_checked,
            "sample_fraction": self.sample_fraction,
        }


def _hospital_of_doctor_to_inverse(
    hospital_of_doctor: list[int], num_hospitals: int
) -> list[int]:
    inverse = [UNMATCHED] * num_hospitals
    for d, h in enumerate(hospital_of_doctor):
        if h == UNMATCHED:
            continue
        if h < 0 or h >= num_hospitals:
            raise ValueError(f"doctor {d} matched to unknown hospital {h}")
        if inverse[h] != UNMATCHED:
            raise ValueError(f"hospital {h} matched to two doctors")
        inverse[h] = d
    return inverse


def verify_stable(
    hospital_of_doctor: list[int],
    oracle: PreferenceOracle,
    accept: AcceptRule,
    sample_fraction: float = 1.0,
    sample_seed: int = 0,
) -> BlockingReport:
    """Enumerate blocking pairs of a one-to-one matching.

    ``hospital_of_doctor[d]`` is d's hospital or -1 when unmatched. For
    every doctor (or a sampled subset when ``sample_fraction`` < 1) the
    hospitals that doctor prefers to their match are checked against the
    accept rule. Lazy oracles are forced to materialize the ranks these
    pairs need, so verification is exact for the pairs inspected.
    """
    shape = oracle.shape
    if len(hospital_of_doctor) != shape.num_doctors:
        raise ValueError("matching length does not match the market shape")
    mu_h = _hospital_of_doctor_to_inverse(hospital_of_doctor, shape.num_hospitals)

    doctors = list(range(shape.num_doctors))
    if sample_fraction < 1.0:
        if not 0.0 < sample_fraction <= 1.0:
            raise ValueError("sample fraction must be in (0, 1]")
        keep = max(1, round(sample_fraction * len(doctors)))
        doctors = random.Random(sample_seed).sample(doctors, keep)
        doctors.sort()

    report = BlockingReport(sample_fraction=sample_fraction)
    for d in doctors:
        match = hospital_of_doctor[d]
        preferred = oracle.preferred_hospitals(d, None if match == UNMATCHED else match)
        for h in preferred:
            incumbent = mu_h[h]
            rank_inc = None if incumbent == UNMATCHED else oracle.rank_of(h, incumbent)
            if accept.accepts(oracle.rank_of(h, d), rank_inc):
                report.pairs.append((d, h))
    report.doctors_checked = len(doctors)
    return report


@dataclass
class ConsistencyReport:
    """Outcome of property-testing an accept function."""

    ok: bool
    witness: str | None = None

    def __bool__(self) -> bool:
        return self.ok


def check_consistency(
    accept: AcceptRule, num_doctors: int, trials: int, seed: int = 0
) -> ConsistencyReport:
    """Property-test the three accept-function axioms on random ranks.

    1. A proposer ranked below the incumbent is never accepted.
    2. Rejection is monotone: rejecting rank r against an incumbent means
       rejecting every rank worse than r against that incumbent.
    3. An unmatched hospital accepts everyone.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    if num_doctors < 2:
        raise ValueError("need at least two doctors to exercise the axioms")
    rng = random.Random(seed)
    n = num_doctors
    for _ in range(trials):
        r_inc = rng.randint(1, n)
        r_worse = rng.randint(r_inc, n)
        if r_worse != r_inc and accept.accepts(r_worse, r_inc):
            return ConsistencyReport(
                False,
                f"accepted proposer rank {r_worse} over better incumbent rank {r_inc}",
            )
        r_a = rng.randint(1, n)
        r_b = rng.randint(r_a, n)
        if not accept.accepts(r_a, r_inc) and accept.accepts(r_b, r_inc):
            return ConsistencyReport(
                False,
                f"rejected rank {r_a} but accepted worse rank {r_b} "
                f"against incumbent rank {r_inc}",
            )
        r_free = rng.randint(1, n)
        if not accept.accepts(r_free, None):
            return ConsistencyReport(
                False, f"rejected rank {r_free} at an unmatched hospital"
            )
    return ConsistencyReport(True)
