"""Deterministic RNG stream derivation.

Every random quantity in the package is drawn from a numpy PCG64 generator
seeded through SeedSequence with an explicit entropy tuple

    (root_seed, group_index, replica_index)

so streams are independent across replicas and groups, and a replica's
stream does not depend on how many replicas run, in which order, or in how
many worker processes.  Seeds are mandatory everywhere; there is no
wall-clock fallback.
"""

from __future__ import annotations

import numpy as np

RNG_NAME = "numpy-PCG64/SeedSequence(seed,group,replica)"


def replica_generator(seed: int, group: int, replica: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, group, replica])))


def replica_generators(seed: int, group: int, n: int) -> list[np.random.Generator]:
    return [replica_generator(seed, group, r) for r in range(n)]
