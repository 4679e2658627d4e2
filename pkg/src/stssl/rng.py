"""Seed-derived random streams, one per concern, so runs replay exactly."""

import numpy as np

# stream ids
AUG = 1
INIT = 2
SAMPLE = 3
RANSAC = 4
SYNTH = 5
KMEANS = 6


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for (seed, key...) — stable across runs."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))


def generator_state(gen: np.random.Generator) -> dict:
    return gen.bit_generator.state


def restore_generator(state: dict) -> np.random.Generator:
    bg = np.random.PCG64()
    bg.state = state
    return np.random.Generator(bg)
