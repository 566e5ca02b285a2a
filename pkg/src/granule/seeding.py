"""Deterministic seed fan-out: one master seed, many named sub-streams.

Every random decision in the library draws from a stream derived as

    sub_seed = splitmix64(splitmix64(master XOR fnv1a64(label)) + index)

where ``label`` names the consumer ("batch", "ballgen", ...) and ``index``
is an optional per-step or per-repeat counter. Both mixers are exact
64-bit integer arithmetic, so derived seeds are identical on every
platform and never depend on the order in which streams are created.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One round of the splitmix64 mixer (64-bit wraparound arithmetic)."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def fnv1a64(text: str) -> int:
    """FNV-1a hash of UTF-8 text, 64-bit."""
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


def derive_seed(master: int, label: str, index: int = 0) -> int:
    """Seed for the sub-stream ``label`` (optionally indexed) of ``master``."""
    return splitmix64(splitmix64((master & _MASK64) ^ fnv1a64(label)) + (index & _MASK64))


def stream(master: int, label: str, index: int = 0) -> np.random.Generator:
    """A fresh PCG64 generator for the named sub-stream."""
    return np.random.default_rng(derive_seed(master, label, index))
