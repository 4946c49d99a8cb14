"""Counter-based random streams.

Every random number used by a chain comes from a Philox-4x64 generator whose
key is ``(seed, chain_id)`` and whose counter encodes ``(segment, lane)``.  A
segment is a fixed run of sweeps; restarting a segment from its counter gives
the same numbers, so checkpoints only need the segment index.  Chains never
share a key, so merging them is independent of scheduling order.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1

# lanes partition the counter space of one chain
LANE_INIT = 0
LANE_SWEEP = 1
LANE_MISC = 2


class SeedError(ValueError):
    pass


def check_seed(seed) -> int:
    if seed is None:
        raise SeedError("a seed is required; runs are never seeded from ambient entropy")
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise SeedError(f"seed must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if not 0 <= seed <= MASK64:
        raise SeedError("seed must fit in 64 unsigned bits")
    return seed


def stream(seed: int, chain_id: int, segment: int, lane: int = LANE_SWEEP) -> np.random.Generator:
    """Generator for one (chain, segment, lane) cell of the counter space."""
    seed = check_seed(seed)
    key = np.array([seed, int(chain_id) & MASK64], dtype=np.uint64)
    counter = np.array([0, int(segment) & MASK64, int(lane) & MASK64, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


def derive_seed(seed: int, *labels) -> int:
    """Deterministic child seed for named sub-tasks (e.g. one per beta point)."""
    import hashlib

    h = hashlib.sha256(str(check_seed(seed)).encode())
    for lab in labels:
        h.update(b"\x00" + str(lab).encode())
    return int.from_bytes(h.digest()[:8], "little")
