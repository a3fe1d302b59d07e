"""Uniform-random preference orders, materialized lazily or given explicitly.

Both sides of the market get uniform random permutations as preferences.
Rather than generating full permutations up front (O(n^2) memory for the
whole market), a lazy oracle draws each value the first time it is needed
and then replays it forever after. Each agent draws from a private seeded
stream, so one agent's draw order never perturbs another's values and a
(shape, seed, query sequence) triple always reproduces the same answers.

Draws use sparse Fisher-Yates: position i of the permutation is swapped
with a uniform position j >= i, storing only touched positions, which is
O(1) per draw and O(draws) memory.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .seeding import KIND_DOCTOR, KIND_HOSPITAL, derive_seed

__all__ = [
    "MarketShape",
    "PreferenceOracle",
    "ExhaustedDoctorError",
    "MalformedPermutationError",
    "InstanceFormatError",
    "OracleModeError",
    "from_explicit",
    "parse_instance",
    "load_instance",
    "format_instance",
    "random_instance",
]

# Per-doctor draw modes. A doctor locks into one drawing style for the
# lifetime of the oracle; mixing ordered and amnesiac draws would corrupt
# the lazy permutation state.
_MODE_UNSET = 0
_MODE_ORDERED = 1
_MODE_AMNESIAC = 2


class ExhaustedDoctorError(RuntimeError):
    """Raised when a doctor with no hospitals left is asked to propose."""


class MalformedPermutationError(ValueError):
    """Raised when an explicit preference list is not a permutation."""


class InstanceFormatError(ValueError):
    """Raised when an instance file deviates from the documented format."""


class OracleModeError(RuntimeError):
    """Raised on draw requests incompatible with an oracle or doctor mode."""


@dataclass(frozen=True)
class MarketShape:
    """Numbers of doctors and hospitals in a one-to-one market."""

    num_doctors: int
    num_hospitals: int

    def __post_init__(self) -> None:
        if self.num_doctors < 1 or self.num_hospitals < 1:
            raise ValueError("market sides must be positive")

    @classmethod
    def balanced(cls, n: int) -> MarketShape:
        return cls(n, n)

    @classmethod
    def unbalanced(cls, n: int) -> MarketShape:
        """n hospitals and n + 1 doctors (one extra doctor)."""
        return cls(n + 1, n)


class PreferenceOracle:
    """Answers preference queries for one run of the matching engine.

    Lazy mode draws values on demand from per-agent seeded streams.
    Explicit mode replays caller-supplied lists (see ``from_explicit``).
    An oracle instance is confined to a single run: queries mutate draw
    state. Distinct runs should use distinct instances.
    """

    def __init__(self, shape: MarketShape, seed: int = 0) -> None:
        self.shape = shape
        self.seed = seed
        self.mode = "lazy"
        n_d, n_h = shape.num_doctors, shape.num_hospitals
        self._n_d = n_d
        self._n_h = n_h
        # Doctor side: drawn preference prefix plus sparse Fisher-Yates
        # state. The random() method of each agent's stream is cached once
        # the agent first draws.
        self._doc_prefix: list[list[int]] = [[] for _ in range(n_d)]
        self._doc_swap: list[dict[int, int]] = [{} for _ in range(n_d)]
        self._doc_rand: list = [None] * n_d
        self._doc_mode: list[int] = [_MODE_UNSET] * n_d
        self._doc_proposed: list[set[int] | None] = [None] * n_d
        # Hospital side: doctor -> rank cache plus Fisher-Yates state over
        # ranks (dict size doubles as the number of ranks drawn).
        self._hosp_ranks: list[dict[int, int]] = [{} for _ in range(n_h)]
        self._hosp_swap: list[dict[int, int]] = [{} for _ in range(n_h)]
        self._hosp_rand: list = [None] * n_h
        # Explicit-mode payload (unused in lazy mode).
        self._doc_lists: list[list[int]] | None = None
        self._doc_rank_lookup: list[dict[int, int] | None] | None = None
        self._explicit_rank_maps: list[dict[int, int]] | None = None

    # -- doctor side -----------------------------------------------------

    def _doctor_rand(self, doctor: int):
        rnd = self._doc_rand[doctor]
        if rnd is None:
            rnd = random.Random(derive_seed(self.seed, KIND_DOCTOR, doctor)).random
            self._doc_rand[doctor] = rnd
        return rnd

    def next_choice(self, doctor: int) -> int:
        """Next hospital on the doctor's preference list (their best untried).

        Lazy mode draws it uniformly over the hospitals this doctor has not
        yet proposed to; a full sequence of draws forms a uniform random
        permutation of the hospitals. Explicit mode replays the given list.
        """
        prefix = self._doc_prefix[doctor]
        i = len(prefix)
        if i >= self._n_h:
            raise ExhaustedDoctorError(f"doctor {doctor} has proposed to every hospital")
        lists = self._doc_lists
        if lists is not None:
            hospital = lists[doctor][i]
            prefix.append(hospital)
            return hospital
        mode = self._doc_mode[doctor]
        if mode != _MODE_ORDERED:
            if mode == _MODE_AMNESIAC:
                raise OracleModeError(f"doctor {doctor} already draws amnesiac")
            self._doc_mode[doctor] = _MODE_ORDERED
        rnd = self._doc_rand[doctor]
        if rnd is None:
            rnd = self._doctor_rand(doctor)
        swap = self._doc_swap[doctor]
        j = i + int(rnd() * (self._n_h - i))
        if j == i:
            hospital = swap.pop(i, i)
        else:
            hospital = swap.get(j, j)
            swap[j] = swap.pop(i, i)
        prefix.append(hospital)
        return hospital

    def amnesiac_choice(self, doctor: int) -> tuple[int, bool]:
        """Draw a hospital uniformly over all of them, repeats included.

        Returns (hospital, is_redundant) where the flag marks a hospital the
        doctor has already proposed to. A fresh draw extends the doctor's
        preference prefix exactly as ``next_choice`` would. Lazy mode only.
        """
        if self._doc_lists is not None:
            raise OracleModeError("amnesiac draws need lazily sampled preferences")
        mode = self._doc_mode[doctor]
        if mode != _MODE_AMNESIAC:
            if mode == _MODE_ORDERED:
                raise OracleModeError(f"doctor {doctor} already draws in preference order")
            self._doc_mode[doctor] = _MODE_AMNESIAC
            self._doc_proposed[doctor] = set()
        rnd = self._doc_rand[doctor]
        if rnd is None:
            rnd = self._doctor_rand(doctor)
        hospital = int(rnd() * self._n_h)
        proposed = self._doc_proposed[doctor]
        if hospital in proposed:
            return hospital, True
        proposed.add(hospital)
        self._doc_prefix[doctor].append(hospital)
        return hospital, False

    def proposed_count(self, doctor: int) -> int:
        return len(self._doc_prefix[doctor])

    def has_proposed(self, doctor: int, hospital: int) -> bool:
        proposed = self._doc_proposed[doctor]
        if proposed is not None:
            return hospital in proposed
        return hospital in self._doc_prefix[doctor]

    def proposal_sequence(self, doctor: int) -> tuple[int, ...]:
        """Hospitals this doctor has drawn so far, in preference order."""
        return tuple(self._doc_prefix[doctor])

    def doctor_rank_of(self, doctor: int, hospital: int) -> int:
        """Rank (1-based) the doctor gives the hospital; forces lazy draws."""
        if self._doc_lists is not None:
            return self._doctor_rank_lookup(doctor)[hospital]
        prefix = self._doc_prefix[doctor]
        try:
            return prefix.index(hospital) + 1
        except ValueError:
            pass
        while True:
            drawn = self.next_choice(doctor)
            if drawn == hospital:
                return len(prefix)

    def preferred_hospitals(self, doctor: int, hospital: int | None) -> list[int]:
        """Hospitals the doctor strictly prefers to ``hospital``.

        ``None`` means the doctor is unmatched, in which case every hospital
        qualifies. Lazy mode forces any draws needed to answer.
        """
        if hospital is None:
            if self._doc_lists is not None:
                return list(self._doc_lists[doctor])
            while len(self._doc_prefix[doctor]) < self._n_h:
                self.next_choice(doctor)
            return list(self._doc_prefix[doctor])
        rank = self.doctor_rank_of(doctor, hospital)
        source = self._doc_lists[doctor] if self._doc_lists is not None else self._doc_prefix[doctor]
        return list(source[: rank - 1])

    def _doctor_rank_lookup(self, doctor: int) -> dict[int, int]:
        assert self._doc_rank_lookup is not None and self._doc_lists is not None
        lookup = self._doc_rank_lookup[doctor]
        if lookup is None:
            lookup = {h: i + 1 for i, h in enumerate(self._doc_lists[doctor])}
            self._doc_rank_lookup[doctor] = lookup
        return lookup

    # -- hospital side -----------------------------------------------------

    def rank_of(self, hospital: int, doctor: int) -> int:
        """Rank (1-based) the hospital gives the doctor.

        Lazy mode draws the rank uniformly over the ranks this hospital has
        not assigned yet and caches it; repeat queries replay the cache.
        """
        ranks = self._hosp_ranks[hospital]
        rank = ranks.get(doctor)
        if rank is None:
            rnd = self._hosp_rand[hospital]
            if rnd is None:
                rnd = random.Random(
                    derive_seed(self.seed, KIND_HOSPITAL, hospital)
                ).random
                self._hosp_rand[hospital] = rnd
            i = len(ranks)
            swap = self._hosp_swap[hospital]
            j = i + int(rnd() * (self._n_d - i))
            if j == i:
                rank = swap.pop(i, i) + 1
            else:
                rank = swap.get(j, j) + 1
                swap[j] = swap.pop(i, i)
            ranks[doctor] = rank
        return rank

    def assigned_ranks(self, hospital: int) -> dict[int, int]:
        """Copy of the doctor-to-rank map drawn so far for the hospital."""
        return dict(self._hosp_ranks[hospital])

    # -- lifecycle -----------------------------------------------------------

    def clone_fresh(self) -> PreferenceOracle:
        """A new oracle with the same preference source and no draw state."""
        if self._doc_lists is not None:
            clone = PreferenceOracle(self.shape, self.seed)
            clone.mode = "explicit"
            clone._doc_lists = self._doc_lists
            clone._doc_rank_lookup = [None] * self._n_d
            assert self._explicit_rank_maps is not None
            clone._hosp_ranks = [dict(r) for r in self._explicit_rank_maps]
            clone._explicit_rank_maps = self._explicit_rank_maps
            return clone
        return PreferenceOracle(self.shape, self.seed)


def _check_permutation(entries: list[int], universe: int, label: str) -> None:
    if sorted(entries) != list(range(universe)):
        raise MalformedPermutationError(
            f"{label} is not a permutation of the opposite side: {entries}"
        )


def from_explicit(
    doctor_lists: list[list[int]], hospital_lists: list[list[int]], seed: int = 0
) -> PreferenceOracle:
    """Build an explicit-mode oracle from full preference lists.

    ``doctor_lists[d]`` is doctor d's hospitals in preference order and
    ``hospital_lists[h]`` is hospital h's doctors in preference order, all
    0-based. The ``seed`` only feeds run-level machinery (e.g. the random
    proposer policy), not the preferences themselves.
    """
    n_d, n_h = len(doctor_lists), len(hospital_lists)
    shape = MarketShape(n_d, n_h)
    for d, lst in enumerate(doctor_lists):
        _check_permutation(list(lst), n_h, f"doctor {d} list")
    for h, lst in enumerate(hospital_lists):
        _check_permutation(list(lst), n_d, f"hospital {h} list")
    oracle = PreferenceOracle(shape, seed)
    oracle.mode = "explicit"
    oracle._doc_lists = [list(lst) for lst in doctor_lists]
    oracle._doc_rank_lookup = [None] * n_d
    rank_maps = [{d: i + 1 for i, d in enumerate(lst)} for lst in hospital_lists]
    oracle._hosp_ranks = [dict(r) for r in rank_maps]
    oracle._explicit_rank_maps = rank_maps
    return oracle


def parse_instance(text: str) -> tuple[list[list[int]], list[list[int]]]:
    """Parse the plain-text instance format into 0-based preference lists.

    Format: first line "D H"; then D doctor lines, each a space-separated
    permutation of 1..H; then H hospital lines, each a permutation of 1..D.
    Parsing is strict: wrong counts, stray tokens, or non-permutations are
    errors.
    """
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise InstanceFormatError("empty instance file")
    header = lines[0].split()
    if len(header) != 2:
        raise InstanceFormatError(f"header must be 'D H', got {lines[0]!r}")
    try:
        n_d, n_h = int(header[0]), int(header[1])
    except ValueError as exc:
        raise InstanceFormatError(f"non-integer header: {lines[0]!r}") from exc
    if n_d < 1 or n_h < 1:
        raise InstanceFormatError("market sides must be positive")
    body = lines[1:]
    if len(body) != n_d + n_h:
        raise InstanceFormatError(
            f"expected {n_d + n_h} preference lines, found {len(body)}"
        )

    def parse_line(line: str, universe: int, label: str) -> list[int]:
        try:
            values = [int(tok) for tok in line.split()]
        except ValueError as exc:
            raise InstanceFormatError(f"{label}: non-integer token in {line!r}") from exc
        if any(v < 1 or v > universe for v in values):
            raise InstanceFormatError(f"{label}: index out of range in {line!r}")
        zero_based = [v - 1 for v in values]
        _check_permutation(zero_based, universe, label)
        return zero_based

    doctor_lists = [
        parse_line(body[d], n_h, f"doctor line {d + 1}") for d in range(n_d)
    ]
    hospital_lists = [
        parse_line(body[n_d + h], n_d, f"hospital line {h + 1}") for h in range(n_h)
    ]
    return doctor_lists, hospital_lists


def load_instance(path: str, seed: int = 0) -> PreferenceOracle:
    with open(path, encoding="utf-8") as f:
        doctor_lists, hospital_lists = parse_instance(f.read())
    return from_explicit(doctor_lists, hospital_lists, seed=seed)


def format_instance(
    doctor_lists: list[list[int]], hospital_lists: list[list[int]]
) -> str:
    """Render 0-based preference lists in the 1-based instance file format."""
    out = [f"{len(doctor_lists)} {len(hospital_lists)}"]
    for lst in doctor_lists:
        out.append(" ".join(str(v + 1) for v in lst))
    for lst in hospital_lists:
        out.append(" ".join(str(v + 1) for v in lst))
    return "\n".join(out) + "\n"


def random_instance(
    shape: MarketShape, seed: int
) -> tuple[list[list[int]], list[list[int]]]:
    """Fully materialized uniform-random preference lists (small markets)."""
    rng = random.Random(derive_seed(seed, KIND_DOCTOR, KIND_HOSPITAL))
    doctor_lists = []
    for _ in range(shape.num_doctors):
        lst = list(range(shape.num_hospitals))
        rng.shuffle(lst)
        doctor_lists.append(lst)
    hospital_lists = []
    for _ in range(shape.num_hospitals):
        lst = list(range(shape.num_doctors))
        rng.shuffle(lst)
        hospital_lists.append(lst)
    return doctor_lists, hospital_lists
