"""Deterministic PRNG streams.

All randomness in the package flows through one 64-bit master seed.  Each
noise target (timing perturbation, data noise, preconditioner draws, power
iteration starts, ...) gets its own child stream derived from the master seed
and a string label, so adding a consumer never shifts the draws of another.

The generator is NumPy's PCG64; the name is echoed into experiment reports so
results stay portable across machines running the same NumPy.
"""

from __future__ import annotations

import zlib

import numpy as np

GENERATOR_NAME = "pcg64"


def _label_key(label: str) -> int:
    # crc32 is stable across platforms and Python versions
    return zlib.crc32(label.encode("utf-8"))


def child_seed_sequence(seed: int, *labels: str) -> np.random.SeedSequence:
    """Seed sequence for the child stream identified by `labels`."""
    return np.random.SeedSequence(
        entropy=int(seed), spawn_key=tuple(_label_key(l) for l in labels)
    )


def child_rng(seed: int, *labels: str) -> np.random.Generator:
    """Generator for the child stream identified by `labels`.

    Deterministic: identical (seed, labels) give bit-identical streams.
    """
    return np.random.Generator(np.random.PCG64(child_seed_sequence(seed, *labels)))
