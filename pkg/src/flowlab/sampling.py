"""Seeded sample clouds from the invariant measures of the testbed maps.

Both testbed maps are ergodic for Lebesgue measure, so clouds are produced by
Birkhoff sampling: iterate from random seeds and discard a burn-in prefix.
All randomness flows through a counter-based Philox generator keyed by the
run seed, with fixed stream indices per purpose, so every cloud is a pure
function of (seed, parameters).
"""

from __future__ import annotations

import numpy as np

from .dynamics import BaseMap

RNG_ALGORITHM = "numpy.random.Philox"

# fixed stream indices; manifests record the algorithm and the stream map
STREAM_BASE_CLOUD = 1
STREAM_HEIGHTS = 2
STREAM_GAMMA_SAMPLES = 3
STREAM_DENSITY_SAMPLES = 4
STREAM_RECURRENCE = 5
STREAM_WITNESS = 6
STREAM_CHECKS = 7


def rng_for(seed: int, stream: int) -> np.random.Generator:
    """Independent deterministic stream: Philox keyed by the seed, jumped."""
    bitgen = np.random.Philox(key=np.uint64(seed))
    return np.random.Generator(bitgen.jumped(int(stream)))


def birkhoff_cloud(
    base_map: BaseMap,
    size: int,
    *,
    rng: np.random.Generator,
    burn_in: int = 64,
    chains: int = 64,
) -> np.ndarray:
    """(size, m) cloud collected chain-major after the burn-in prefix."""
    if size < 1:
        raise ValueError("cloud size must be positive")
    chains = max(1, min(chains, size))
    per = -(-size // chains)
    pos = rng.random((chains, base_map.dim))
    for _ in range(burn_in):
        pos = base_map.step_batch(pos)
    out = np.empty((chains, per, base_map.dim))
    for j in range(per):
        out[:, j, :] = pos
        pos = base_map.step_batch(pos)
    return out.reshape(chains * per, base_map.dim)[:size].copy()


def suspension_cloud(
    base_map: BaseMap,
    size: int,
    *,
    rng_base: np.random.Generator,
    rng_height: np.random.Generator,
    burn_in: int = 64,
    chains: int = 64,
) -> tuple[np.ndarray, np.ndarray]:
    """Base cloud plus independent uniform heights: samples of the product
    measure (base invariant) x (Lebesgue on the fiber)."""
    coords = birkhoff_cloud(base_map, size, rng=rng_base, burn_in=burn_in, chains=chains)
    heights = rng_height.random(size)
    return coords, heights
