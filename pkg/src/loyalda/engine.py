"""Doctor-proposing deferred acceptance with pluggable proposer order and
accept rules, instrumented for phase and rank diagnostics.

The proposal loop follows the classic meta-algorithm: pick an unmatched
doctor via the ``next`` policy, let them propose to their best untried
hospital, and let the hospital's ``accept`` rule keep or reject. The run
ends when every doctor is matched or some doctor has been rejected by
every hospital.
"""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Protocol

from .prefs import MarketShape, PreferenceOracle
from .seeding import KIND_POLICY, derive_seed

__all__ = [
    "LoyaltyAccept",
    "CLASSIC_ACCEPT",
    "accept_loyal",
    "FifoPolicy",
    "LifoPolicy",
    "RandomPolicy",
    "make_next_policy",
    "HistoryEvent",
    "MatchingState",
    "RunOutcome",
    "InvalidStateError",
    "new_state",
    "step",
    "run",
]

UNMATCHED = -1

TERMINATION_ALL_MATCHED = "all_doctors_matched"
TERMINATION_EXHAUSTED = "doctor_exhausted"


class InvalidStateError(RuntimeError):
    """Raised when stepping a run that has already terminated."""


def accept_loyal(rank_new: int, rank_incumbent: int | None, k: int) -> bool:
    """Loyalty-k accept rule.

    An unmatched hospital takes any proposal. A matched hospital switches
    only for a proposer ranked more than k positions better than its
    incumbent: rank_new < rank_incumbent - k.
    """
    return rank_incumbent is None or rank_new < rank_incumbent - k


@dataclass(frozen=True)
class LoyaltyAccept:
    """Consistent accept function parameterized by loyalty k (0 = classic)."""

    k: int

    def __post_init__(self) -> None:
        if self.k < 0:
            raise ValueError("loyalty must be non-negative")

    def accepts(self, rank_new: int, rank_incumbent: int | None) -> bool:
        return rank_incumbent is None or rank_new < rank_incumbent - self.k


CLASSIC_ACCEPT = LoyaltyAccept(0)


class AcceptRule(Protocol):
    def accepts(self, rank_new: int, rank_incumbent: int | None) -> bool: ...


class FifoPolicy:
    """Queue of unmatched doctors; the head proposes until accepted.

    A doctor displaced from a match re-enters at the tail of the queue.
    """

    kind = "fifo"

    def __init__(self, order: list[int] | None = None) -> None:
        self._order = order
        self._queue: deque[int] = deque()

    def reset(self, num_doctors: int, rng: random.Random) -> None:
        order = self._order if self._order is not None else range(num_doctors)
        self._queue = deque(order)

    def select(self) -> int:
        return self._queue[0]

    def on_accepted(self, doctor: int) -> None:
        popped = self._queue.popleft()
        assert popped == doctor

    def on_displaced(self, doctor: int) -> None:
        self._queue.append(doctor)


class LifoPolicy:
    """Stack of unmatched doctors; a displaced doctor proposes next."""

    kind = "lifo"

    def __init__(self, order: list[int] | None = None) -> None:
        self._order = order
        self._stack: list[int] = []

    def reset(self, num_doctors: int, rng: random.Random) -> None:
        order = self._order if self._order is not None else range(num_doctors)
        self._stack = list(reversed(list(order)))

    def select(self) -> int:
        return self._stack[-1]

    def on_accepted(self, doctor: int) -> None:
        popped = self._stack.pop()
        assert popped == doctor

    def on_displaced(self, doctor: int) -> None:
        self._stack.append(doctor)


class RandomPolicy:
    """Each proposal comes from a uniformly random unmatched doctor."""

    kind = "random"

    def __init__(self) -> None:
        self._members: list[int] = []
        self._pos: dict[int, int] = {}
        self._rng: random.Random | None = None

    def reset(self, num_doctors: int, rng: random.Random) -> None:
        self._members = list(range(num_doctors))
        self._pos = {d: d for d in range(num_doctors)}
        self._rng = rng

    def select(self) -> int:
        assert self._rng is not None
        return self._members[self._rng.randrange(len(self._members))]

    def on_accepted(self, doctor: int) -> None:
        members, pos = self._members, self._pos
        i = pos.pop(doctor)
        last = members.pop()
        if last != doctor:
            members[i] = last
            pos[last] = i

    def on_displaced(self, doctor: int) -> None:
        self._pos[doctor] = len(self._members)
        self._members.append(doctor)


_POLICY_KINDS = {"fifo": FifoPolicy, "lifo": LifoPolicy, "random": RandomPolicy}


def make_next_policy(spec, order: list[int] | None = None):
    """Build a next-policy from a kind string, or pass an instance through."""
    if isinstance(spec, str):
        try:
            cls = _POLICY_KINDS[spec]
        except KeyError:
            raise ValueError(f"unknown next policy {spec!r}") from None
        return cls() if cls is RandomPolicy else cls(order)
    return spec


@dataclass(frozen=True)
class HistoryEvent:
    """One proposal: who proposed where, against whom, and the verdict."""

    doctor: int
    hospital: int
    incumbent: int | None
    accepted: bool
    ordinal: int
    redundant: bool = False


@dataclass
class MatchingState:
    """Mutable state of one run of the proposal loop."""

    shape: MarketShape
    n_d: int
    n_h: int
    accept: AcceptRule
    loyalty: int | None
    policy: object
    amnesiac: bool
    record_history: bool
    mu_h: list[int]
    mu_d: list[int]
    unmatched: set[int]
    m_d: list[int]
    m_h: list[int]
    f_h: list[int]
    matched_hospitals: int = 0
    balanced_phase_over: bool = False
    proposals_balanced: int = 0
    proposals_unbalanced: int = 0
    total_proposals: int = 0
    exhausted_doctor: int | None = None
    history: list[HistoryEvent] | None = None
    matching_at_flip: list[int] | None = None
    available_at_flip: list[int] | None = None
    rank_at_flip: list[int] | None = None
    unbalanced_proposed: set[int] = field(default_factory=set)

    @property
    def finished(self) -> bool:
        return self.exhausted_doctor is not None or not self.unmatched

    @property
    def phase(self) -> str:
        return "unbalanced" if self.balanced_phase_over else "balanced"


def new_state(
    shape: MarketShape,
    accept: AcceptRule,
    next_policy="fifo",
    *,
    amnesiac: bool = False,
    record_history: bool = False,
    policy_seed: int = 0,
) -> MatchingState:
    n_d, n_h = shape.num_doctors, shape.num_hospitals
    if isinstance(accept, LoyaltyAccept) and accept.k > n_d - 1:
        raise ValueError(f"loyalty {accept.k} out of range [0, {n_d - 1}]")
    policy = make_next_policy(next_policy)
    policy.reset(n_d, random.Random(derive_seed(policy_seed, KIND_POLICY)))
    return MatchingState(
        shape=shape,
        n_d=n_d,
        n_h=n_h,
        accept=accept,
        loyalty=accept.k if isinstance(accept, LoyaltyAccept) else None,
        policy=policy,
        amnesiac=amnesiac,
        record_history=record_history,
        mu_h=[UNMATCHED] * n_h,
        mu_d=[UNMATCHED] * n_d,
        unmatched=set(range(n_d)),
        m_d=[0] * n_d,
        m_h=[0] * n_h,
        f_h=[0] * n_h,
        history=[] if record_history else None,
    )


def step(state: MatchingState, oracle: PreferenceOracle) -> HistoryEvent | None:
    """Process exactly one proposal; returns the event if history is on."""
    if state.exhausted_doctor is not None or not state.unmatched:
        raise InvalidStateError("run already terminated")
    n_h = state.n_h
    policy = state.policy
    in_unbalanced = state.balanced_phase_over
    doctor = policy.select()
    if in_unbalanced:
        state.unbalanced_proposed.add(doctor)

    redundant = False
    if state.amnesiac:
        hospital, redundant = oracle.amnesiac_choice(doctor)
    else:
        hospital = oracle.next_choice(doctor)
    state.total_proposals += 1
    state.m_h[hospital] += 1
    mu_h = state.mu_h
    incumbent = mu_h[hospital]

    if redundant:
        accepted = False
    else:
        m_d = state.m_d
        m_d[doctor] += 1
        rank_new = oracle.rank_of(hospital, doctor)
        k = state.loyalty
        if incumbent == UNMATCHED:
            accepted = True if k is not None else state.accept.accepts(rank_new, None)
        elif k is not None:
            accepted = rank_new < oracle.rank_of(hospital, incumbent) - k
        else:
            accepted = state.accept.accepts(rank_new, oracle.rank_of(hospital, incumbent))
        if accepted:
            mu_d = state.mu_d
            mu_h[hospital] = doctor
            mu_d[doctor] = hospital
            state.unmatched.remove(doctor)
            policy.on_accepted(doctor)
            if incumbent == UNMATCHED:
                state.matched_hospitals += 1
                if state.f_h[hospital] == 0:
                    state.f_h[hospital] = rank_new
            else:
                mu_d[incumbent] = UNMATCHED
                state.unmatched.add(incumbent)
                policy.on_displaced(incumbent)
                if m_d[incumbent] >= n_h:
                    state.exhausted_doctor = incumbent
        elif m_d[doctor] >= n_h:
            state.exhausted_doctor = doctor

    if in_unbalanced:
        state.proposals_unbalanced += 1
        # One extra doctor means exactly one doctor hunts at a time.
        if state.n_d == n_h + 1 and state.exhausted_doctor is None:
            assert len(state.unmatched) == 1
    else:
        state.proposals_balanced += 1
        if state.matched_hospitals >= n_h and state.n_d > n_h:
            _flip_phase(state, oracle)

    event = None
    if state.record_history:
        event = HistoryEvent(
            doctor=doctor,
            hospital=hospital,
            incumbent=None if incumbent == UNMATCHED else incumbent,
            accepted=accepted,
            ordinal=state.total_proposals,
            redundant=redundant,
        )
        assert state.history is not None
        state.history.append(event)
    return event


def _flip_phase(state: MatchingState, oracle: PreferenceOracle) -> None:
    """Record the instant every hospital holds a match for the first time."""
    state.balanced_phase_over = True
    state.matching_at_flip = list(state.mu_h)
    ranks = [oracle.rank_of(h, d) for h, d in enumerate(state.mu_h)]
    state.rank_at_flip = ranks
    state.available_at_flip = [
        h for h, r in enumerate(ranks) if state.accept.accepts(1, r)
    ]


@dataclass
class RunOutcome:
    """Final matching of a run plus every metric the diagnostics consume.

    The doctor-rank average covers matched doctors only; an exhausted
    doctor is reported separately via ``unmatched_doctor_rank`` = |H| + 1.
    """

    shape: MarketShape
    k: int | None
    policy: str
    amnesiac: bool
    seed: int
    hospital_of_doctor: list[int]
    doctor_of_hospital: list[int]
    termination_cause: str
    exhausted_doctor: int | None
    total_proposals: int
    proposals_balanced: int
    proposals_unbalanced: int
    avg_doctor_rank: float
    avg_hospital_rank: float
    proposals_per_doctor: float
    unmatched_doctor_rank: int | None
    heavy_doctor_count: int
    heavy_hospital_count: int
    m_d: list[int]
    m_h: list[int]
    f_h: list[int]
    matching_at_flip: list[int] | None
    rank_at_flip: list[int] | None
    rank_final: list[int]
    available_at_flip: list[int] | None
    unbalanced_proposer_count: int
    history: list[HistoryEvent] | None

    @property
    def s_a_size(self) -> int | None:
        if self.available_at_flip is None:
            return None
        return len(self.available_at_flip)

    def t_set(self) -> list[int] | None:
        """Hospitals whose first match fell in the transition-driving rank
        band (k + l/2, k + l] with l = sqrt(n) * ln(n)."""
        if self.k is None or self.matching_at_flip is None:
            return None
        n = self.shape.num_hospitals
        ell = math.sqrt(n) * math.log(n)
        lo, hi = self.k + ell / 2, self.k + ell
        return [h for h, f in enumerate(self.f_h) if f > lo and f <= hi]

    def t_rematched_count(self) -> int | None:
        t = self.t_set()
        if t is None or self.matching_at_flip is None:
            return None
        flip = self.matching_at_flip
        return sum(1 for h in t if self.doctor_of_hospital[h] != flip[h])

    def rematched_after_flip(self) -> list[int] | None:
        if self.matching_at_flip is None:
            return None
        flip = self.matching_at_flip
        return [h for h, d in enumerate(self.doctor_of_hospital) if d != flip[h]]

    def to_json_dict(self, include_history: bool = False) -> dict:
        """JSON-friendly view; agent ids are 1-based, unmatched is null."""

        def doctor_id(d: int) -> int | None:
            return None if d == UNMATCHED else d + 1

        def hospital_id(h: int) -> int | None:
            return None if h == UNMATCHED else h + 1

        out = {
            "num_doctors": self.shape.num_doctors,
            "num_hospitals": self.shape.num_hospitals,
            "k": self.k,
            "policy": self.policy,
            "amnesiac": self.amnesiac,
            "seed": self.seed,
            "hospital_of_doctor": [hospital_id(h) for h in self.hospital_of_doctor],
            "doctor_of_hospital": [doctor_id(d) for d in self.doctor_of_hospital],
            "termination_cause": self.termination_cause,
            "exhausted_doctor": doctor_id(self.exhausted_doctor)
            if self.exhausted_doctor is not None
            else None,
            "total_proposals": self.total_proposals,
            "proposals_balanced": self.proposals_balanced,
            "proposals_unbalanced": self.proposals_unbalanced,
            "avg_doctor_rank": self.avg_doctor_rank,
            "avg_hospital_rank": self.avg_hospital_rank,
            "proposals_per_doctor": self.proposals_per_doctor,
            "unmatched_doctor_rank": self.unmatched_doctor_rank,
            "heavy_doctor_count": self.heavy_doctor_count,
            "heavy_hospital_count": self.heavy_hospital_count,
            "m_d": self.m_d,
            "m_h": self.m_h,
            "f_h": self.f_h,
            "matching_at_flip": None
            if self.matching_at_flip is None
            else [doctor_id(d) for d in self.matching_at_flip],
            "rank_at_flip": self.rank_at_flip,
            "rank_final": self.rank_final,
            "s_a": None
            if self.available_at_flip is None
            else [hospital_id(h) for h in self.available_at_flip],
            "unbalanced_proposer_count": self.unbalanced_proposer_count,
        }
        if include_history and self.history is not None:
            out["history"] = [
                {
                    "doctor": e.doctor + 1,
                    "hospital": e.hospital + 1,
                    "incumbent": None if e.incumbent is None else e.incumbent + 1,
                    "accepted": e.accepted,
                    "ordinal": e.ordinal,
                    "redundant": e.redundant,
                }
                for e in self.history
            ]
        return out


def run(
    shape: MarketShape,
    oracle: PreferenceOracle,
    accept: AcceptRule = CLASSIC_ACCEPT,
    next_policy="fifo",
    *,
    amnesiac: bool = False,
    record_history: bool = False,
) -> RunOutcome:
    """Execute proposals to completion and package the outcome.

    Terminates when no doctor is unmatched or some doctor has been rejected
    by all distinct hospitals (redundant amnesiac proposals never count
    toward exhaustion).
    """
    if oracle.shape != shape:
        raise ValueError("oracle shape does not match the market shape")
    state = new_state(
        shape,
        accept,
        next_policy,
        amnesiac=amnesiac,
        record_history=record_history,
        policy_seed=oracle.seed,
    )
    unmatched = state.unmatched
    while state.exhausted_doctor is None and unmatched:
        step(state, oracle)
    return finalize(state, oracle)


def finalize(state: MatchingState, oracle: PreferenceOracle) -> RunOutcome:
    """Freeze a finished state into a RunOutcome."""
    if not state.finished:
        raise InvalidStateError("run has not terminated")
    shape = state.shape
    n_d, n_h = shape.num_doctors, shape.num_hospitals
    matched_doctor_ranks = [state.m_d[d] for d in range(n_d) if state.mu_d[d] != UNMATCHED]
    hospital_ranks = [
        oracle.rank_of(h, d) for h, d in enumerate(state.mu_h) if d != UNMATCHED
    ]
    avg_doctor_rank = (
        sum(matched_doctor_ranks) / len(matched_doctor_ranks)
        if matched_doctor_ranks
        else 0.0
    )
    avg_hospital_rank = (
        sum(hospital_ranks) / len(hospital_ranks) if hospital_ranks else 0.0
    )
    rank_final = [
        oracle.rank_of(h, d) if d != UNMATCHED else 0 for h, d in enumerate(state.mu_h)
    ]
    k = state.accept.k if isinstance(state.accept, LoyaltyAccept) else None
    cause = (
        TERMINATION_EXHAUSTED
        if state.exhausted_doctor is not None
        else TERMINATION_ALL_MATCHED
    )
    return RunOutcome(
        shape=shape,
        k=k,
        policy=getattr(state.policy, "kind", type(state.policy).__name__),
        amnesiac=state.amnesiac,
        seed=oracle.seed,
        hospital_of_doctor=list(state.mu_d),
        doctor_of_hospital=list(state.mu_h),
        termination_cause=cause,
        exhausted_doctor=state.exhausted_doctor,
        total_proposals=state.total_proposals,
        proposals_balanced=state.proposals_balanced,
        proposals_unbalanced=state.proposals_unbalanced,
        avg_doctor_rank=avg_doctor_rank,
        avg_hospital_rank=avg_hospital_rank,
        proposals_per_doctor=state.total_proposals / n_d,
        unmatched_doctor_rank=n_h + 1 if state.exhausted_doctor is not None else None,
        heavy_doctor_count=sum(1 for m in state.m_d if 2 * m >= n_h),
        heavy_hospital_count=sum(1 for m in state.m_h if 2 * m >= n_d),
        m_d=list(state.m_d),
        m_h=list(state.m_h),
        f_h=list(state.f_h),
        matching_at_flip=state.matching_at_flip,
        rank_at_flip=state.rank_at_flip,
        rank_final=rank_final,
        available_at_flip=state.available_at_flip,
        unbalanced_proposer_count=len(state.unbalanced_proposed),
        history=state.history,
    )
