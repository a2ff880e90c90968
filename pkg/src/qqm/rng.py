"""Seeded random streams.

All randomness comes from numpy's PCG64 bit generator seeded through
``SeedSequence(seed, spawn_key=path)``.  A stream is identified by an integer
seed plus a tuple of small integers naming its role, so independent streams
never depend on how many draws another stream made.  Normal variates use the
Box-Muller transform on PCG64 doubles, which keeps them bit-stable across
numpy versions (numpy's own ziggurat sampler is not covered by that promise).
"""
from __future__ import annotations

import numpy as np

# stream roles
THETA_INIT = 1
SAMPLING = 2
EULER_MARUYAMA = 3
GAN_BATCH = 4
GAN_KS = 5
GAN_DATA = 6


def stream(seed: int, *path: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.PCG64(ss))


def box_muller(gen: np.random.Generator, n: int) -> np.ndarray:
    """``n`` standard normal variates from pairs of uniforms."""
    m = (n + 1) // 2
    u1 = 1.0 - gen.random(m)  # (0, 1]
    u2 = gen.random(m)
    r = np.sqrt(-2.0 * np.log(u1))
    out = np.empty(2 * m)
    out[0::2] = r * np.cos(2.0 * np.pi * u2)
    out[1::2] = r * np.sin(2.0 * np.pi * u2)
    return out[:n]


def uniform_latent(gen: np.random.Generator, n: int) -> np.ndarray:
    """``n`` latent draws from uniform(-1, 1)."""
    return 2.0 * gen.random(n) - 1.0
