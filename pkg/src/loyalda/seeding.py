"""Deterministic seed derivation for independent per-agent random streams."""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

# Stream kinds. Distinct salts keep agent streams disjoint from each other
# and from run-level machinery.
KIND_DOCTOR = 0x0D
KIND_HOSPITAL = 0x08
KIND_POLICY = 0x9C
KIND_RUN = 0x41
KIND_TRIAL = 0x7E


def splitmix64(x: int) -> int:
    """One round of the splitmix64 finalizer (64-bit avalanche hash)."""
    x = (x + _GOLDEN) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(*words: int) -> int:
    """Hash a tuple of integers into a 64-bit stream seed.

    Distinct word tuples map to unrelated seeds, so every agent can own a
    private generator whose draws are unaffected by how often other agents
    draw. This is what makes lazily sampled preferences replayable.
    """
    h = 0
    for w in words:
        h = splitmix64(h ^ (w & _MASK64))
    return h
