"""Seed derivation and counter-keyed random streams.

Every random draw in a run comes from ``stream(trial_seed, *key)``, a PCG64
generator seeded by ``SeedSequence(trial_seed, spawn_key=key)``. Keys are
small integer tuples such as ``(round, CLIENT, client_id)``, so a stream is
fully determined by where it is used, never by call order or threading.
"""

import numpy as np

MASK64 = (1 << 64) - 1

# key tags
INIT = 0
PARTITION = 1
SAMPLE = 2
CLIENT = 3


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def trial_seed(root_seed: int, trial: int) -> int:
    """``splitmix64(root_seed XOR splitmix64(trial))``, as documented in the README."""
    return splitmix64((root_seed & MASK64) ^ splitmix64(trial))


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed & MASK64, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def derived_seed(seed: int, *key: int) -> int:
    """A 64-bit integer seed drawn from the keyed stream (for APIs that take an int)."""
    ss = np.random.SeedSequence(seed & MASK64, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
