"""
File that describes how random streams are derived from a single 64-bit seed.

Every consumer gets its own ``numpy.random.Generator`` built from ``SeedSequence([seed, *path])``,
so results never depend on the order in which other consumers drew numbers.
"""
import numpy as np

from core.errors import ContractViolation

# Second entropy word of each stream family.
ANCESTRAL = 0
CHAIN = 1
REPARAMETERIZATION = 2
NOISE_INIT = 3
RUN = 4


def stream(seed: int, *path: int) -> np.random.Generator:
    """
    Generator for the stream identified by ``(seed, *path)``.

    :param seed: (:class:`int`) Non-negative 64-bit seed.
    :param path: Non-negative integers naming the sub-stream.
    :return: (:class:`numpy.random.Generator`)
    """
    if seed < 0 or any(p < 0 for p in path):
        raise ContractViolation(f"Seeds must be non-negative, got {(seed, *path)}")
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, path)]))


def chain_noise(seed: int, batch: int, steps: int, width: int, dtype=np.float64) -> np.ndarray:
    """
    Standard normal Langevin noise with one independent stream per chain.

    Chain ``i`` uses the stream ``(seed, CHAIN, i)`` and draws all its steps at once; the chains
    are then stacked in index order.

    :return: (:class:`numpy.ndarray`) Array of shape ``(steps, batch, width)``.
    """
    noise = np.empty((steps, batch, width), dtype=dtype)
    for i in range(batch):
        noise[:, i, :] = stream(seed, CHAIN, i).standard_normal((steps, width))
    return noise


def next_seed(rng: np.random.Generator) -> int:
    """Draw a fresh non-negative 63-bit seed from ``rng``."""
    return int(rng.integers(0, 2 ** 63 - 1))
