"""
Random streams.
Every replica gets its own counter-based Philox stream keyed by (seed, replica),
so replicas are independent without any coordination between workers.
"""
import numpy as np


def make_rng(seed: int, replica: int = 0) -> np.random.Generator:
    """Generator for stream (seed, replica)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(replica)])))


def raw_words(rng: np.random.Generator, count: int) -> list:
    """`count` uniformly random 64-bit words as Python ints (one fair coin per bit)."""
    return rng.bit_generator.random_raw(count).tolist()
