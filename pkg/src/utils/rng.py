"""
Counter-based random streams for ensemble realizations.

The stream of realization r at correlation strength m is

    Generator(Philox(SeedSequence(entropy=master_seed, spawn_key=(m, r))))

and a re-seeded retry appends a flag: spawn_key=(m, r, 1). SeedSequence
hashes entropy and spawn key into the Philox key, so streams depend only on
the triple and never on scheduling. This construction is part of the output
contract: changing it changes every published curve.
"""
from typing import Tuple

import numpy as np

from src.errors import InvalidArgumentError

RESEED_FLAG = 1


def stream_key(master_seed: int, m: int, r: int, reseeded: bool = False) -> Tuple[int, ...]:
    if master_seed < 0 or master_seed >= 2 ** 64:
        raise InvalidArgumentError(f"master seed must be a 64-bit unsigned integer, got {master_seed}")
    if m < 1 or r < 0:
        raise InvalidArgumentError(f"invalid stream coordinates m={m} r={r}")
    return (m, r, RESEED_FLAG) if reseeded else (m, r)


def derive_stream(master_seed: int, m: int, r: int, reseeded: bool = False) -> np.random.Generator:
    key = stream_key(master_seed, m, r, reseeded)
    sequence = np.random.SeedSequence(entropy=master_seed, spawn_key=key)
    return np.random.Generator(np.random.Philox(sequence))
