"""Counter-based random streams.

Every random draw in the package comes from a stream addressed by
``(master_seed, purpose, *indices)``.  Streams are independent of the
order in which they are requested, so modes and replicas can be generated
in any order (or concurrently) and still reproduce bit for bit.
"""
import numpy as np

PURPOSES = {
    "fbm": 0,
    "convolution": 1,
    "stationary": 2,
    "initial": 3,
    "battery": 4,
    "driving_bm": 5,
}

_MASK64 = (1 << 64) - 1


def _check_seed(seed):
    seed = int(seed)
    if seed < 0 or seed > _MASK64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def stream(seed, purpose, *indices):
    """Return a Philox generator for the stream ``(seed, purpose, *indices)``."""
    seed = _check_seed(seed)
    pid = PURPOSES[purpose] if isinstance(purpose, str) else int(purpose)
    key = (pid,) + tuple(int(i) for i in indices)
    ss = np.random.SeedSequence(entropy=seed, spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))
