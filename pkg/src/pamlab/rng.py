"""Counter-based random streams for reproducible parallel Monte Carlo.

Every replicate gets its own Philox generator keyed by a hash of
(master seed, purpose label, replicate index), so results do not depend
on scheduling or thread count.
"""

import hashlib

import numpy as np


def stream_key(master_seed: int, label: str, index: int = 0) -> int:
    """128-bit key derived from (seed, label, index)."""
    payload = f"{master_seed}:{label}:{index}".encode()
    digest = hashlib.sha256(payload).digest()
    return int.from_bytes(digest[:16], "little")


def stream(master_seed: int, label: str, index: int = 0) -> np.random.Generator:
    """Independent generator for one replicate of one purpose."""
    return np.random.Generator(np.random.Philox(key=stream_key(master_seed, label, index)))
