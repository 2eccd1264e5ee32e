"""Counter-based random number streams.

Every stochastic routine in the package draws from a Philox generator keyed
by (master seed, stream index...).  Streams are independent of how many other
streams exist, so enlarging a path ensemble or a probe set never reshuffles
the draws already assigned to existing paths/probes.
"""

from __future__ import annotations

import numpy as np

_MIX = 0x9E3779B97F4A7C15  # 64-bit golden-ratio increment, splitmix-style


def _mix64(value: int) -> int:
    value = (value ^ (value >> 30)) * 0xBF58476D1CE4E5B9 % 2**64
    value = (value ^ (value >> 27)) * 0x94D049BB133111EB % 2**64
    return value ^ (value >> 31)


def stream_key(seed: int, *stream: int) -> tuple[int, int]:
    """Fold (seed, stream ids) into a 2x64-bit Philox key, deterministically."""
    lo = _mix64(seed % 2**64)
    hi = _mix64((seed + _MIX) % 2**64)
    for i, s in enumerate(stream):
        lo = _mix64((lo + (s % 2**64) + (i + 1) * _MIX) % 2**64)
        hi = _mix64((hi ^ lo) % 2**64)
    return lo, hi


def generator(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator for an addressable stream under a master seed."""
    lo, hi = stream_key(seed, *stream)
    return np.random.Generator(np.random.Philox(key=np.array([lo, hi], dtype=np.uint64)))
