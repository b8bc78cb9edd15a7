"""
File that contains the dataset generators. Every kind returns ``n`` points scaled to ``[-1, 1]^D``
and depends only on its parameters and the seed.
"""
from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

from core.errors import ContractViolation

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".pgm", ".ppm", ".tif", ".tiff", ".gif")
BRANCH_OFFSET = 0.5


class Dataset(ABC):
    """
    Abstract generator of a point cloud.

    :cvar data_dim: (:class:`int`) Dimension of the generated points.
    """

    data_dim: int = 2

    @abstractmethod
    def _draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Raw ``(n, data_dim)`` points before clipping."""

    def generate(self, n: int, seed: int = 0) -> np.ndarray:
        """
        :param n: (:class:`int`) Number of points, ``>= 1``.
        :param seed: (:class:`int`) Non-negative seed.
        :return: (:class:`numpy.ndarray`) ``(n, data_dim)`` points in ``[-1, 1]``.
        """
        if n < 1:
            raise ContractViolation(f"Dataset size must be >= 1, got {n}")
        if seed < 0:
            raise ContractViolation(f"Seed must be non-negative, got {seed}")
        return np.clip(self._draw(n, np.random.default_rng(seed)), -1.0, 1.0)

    def centers(self) -> Optional[np.ndarray]:
        """Mode centers for coverage diagnostics, ``None`` for kinds without discrete modes."""
        return None


class GaussianGrid(Dataset):
    """``k × k`` isotropic Gaussians on a square lattice spanning ``[-radius, radius]²``."""

    def __init__(self, k: int = 3, radius: float = 0.8, std: float = 0.05):
        self.k, self.radius, self.std = k, radius, std

    def centers(self):
        axis = np.linspace(-self.radius, self.radius, self.k) if self.k > 1 else np.zeros(1)
        xs, ys = np.meshgrid(axis, axis, indexing="ij")
        return np.stack([xs.ravel(), ys.ravel()], axis=1)

    def _draw(self, n, rng):
        centers = self.centers()
        return centers[rng.integers(0, len(centers), n)] + self.std * rng.standard_normal((n, 2))


class GaussianRing(Dataset):
    """``k`` isotropic Gaussians evenly spaced on a circle."""

    def __init__(self, k: int = 8, radius: float = 0.8, std: float = 0.05):
        self.k, self.radius, self.std = k, radius, std

    def centers(self):
        angles = 2.0 * np.pi * np.arange(self.k) / self.k
        return self.radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)

    def _draw(self, n, rng):
        centers = self.centers()
        return centers[rng.integers(0, self.k, n)] + self.std * rng.standard_normal((n, 2))


class Ring(Dataset):
    """Uniform angle on a circle with Gaussian radial noise."""

    def __init__(self, radius: float = 0.8, noise: float = 0.02):
        self.radius, self.noise = radius, noise

    def _draw(self, n, rng):
        angles = rng.uniform(0.0, 2.0 * np.pi, n)
        radii = self.radius + self.noise * rng.standard_normal(n)
        return np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)


class TwoSpirals(Dataset):
    """Two interleaved Archimedean spirals of ``turns`` turns."""

    def __init__(self, radius: float = 0.8, noise: float = 0.02, turns: float = 1.5):
        self.radius, self.noise, self.turns = radius, noise, turns

    def _draw(self, n, rng):
        t = np.sqrt(rng.uniform(0.0, 1.0, n))
        angle = 2.0 * np.pi * self.turns * t
        arm = np.where(rng.uniform(size=n) < 0.5, 1.0, -1.0)
        points = self.radius * t[:, None] * np.stack([np.cos(angle), np.sin(angle)], axis=1) * arm[:, None]
        return points + self.noise * rng.standard_normal((n, 2))


class Checkerboard(Dataset):
    """Uniform points on the dark cells of a ``k × k`` board over ``[-radius, radius]²``."""

    def __init__(self, k: int = 4, radius: float = 0.8):
        self.k, self.radius = k, radius

    def _draw(self, n, rng):
        cell = 2.0 * self.radius / self.k
        rows, cols = np.nonzero(np.add.outer(np.arange(self.k), np.arange(self.k)) % 2 == 0)
        pick = rng.integers(0, rows.size, n)
        offsets = rng.uniform(0.0, cell, (n, 2))
        return -self.radius + np.stack([cols[pick] * cell, rows[pick] * cell], axis=1) + offsets


class TwoBranch(Dataset):
    """
    First coordinate uniform in ``[-radius, radius]``, second on one of the two branches ``±0.5``.
    The first coordinate alone never tells the branch, which makes it a one-to-many conditional task.
    """

    def __init__(self, radius: float = 0.8, noise: float = 0.02):
        self.radius, self.noise = radius, noise

    def branches(self) -> tuple[float, float]:
        return -BRANCH_OFFSET, BRANCH_OFFSET

    def _draw(self, n, rng):
        u = rng.uniform(-self.radius, self.radius, n)
        branch = np.where(rng.uniform(size=n) < 0.5, -BRANCH_OFFSET, BRANCH_OFFSET)
        return np.stack([u, branch + self.noise * rng.standard_normal(n)], axis=1)


class Patches(Dataset):
    """
    Square grayscale patches cropped at random from the images of a directory.

    :param directory: (:class:`str`) Directory with images readable by Pillow.
    :param size: (:class:`int`) Patch side; points have ``size²`` coordinates.
    """

    def __init__(self, directory: str, size: int = 4):
        self.size = size
        self.data_dim = size * size
        self.images = self._load(Path(directory), size)

    @staticmethod
    def _load(directory: Path, size: int) -> list[np.ndarray]:
        if not directory.is_dir():
            raise ContractViolation(f"Patch directory {directory} does not exist or is not a directory")
        images = []
        for path in sorted(directory.iterdir()):
            if path.suffix.lower() not in IMAGE_SUFFIXES:
                continue
            try:
                with Image.open(path) as image:
                    pixels = np.asarray(image.convert("L"), dtype=np.float64)
            except (OSError, UnidentifiedImageError) as e:
                logger.warning(f"Skipping unreadable image {path}: {e}")
                continue
            if min(pixels.shape) < size:
                logger.warning(f"Skipping {path}: smaller than a {size}x{size} patch")
                continue
            images.append(pixels / 127.5 - 1.0)
        if not images:
            raise ContractViolation(f"No readable image of at least {size}x{size} pixels in {directory}")
        logger.info(f"Loaded {len(images)} images from {directory}")
        return images

    def _draw(self, n, rng):
        out = np.empty((n, self.data_dim))
        for i, k in enumerate(rng.integers(0, len(self.images), n)):
            image = self.images[k]
            top = rng.integers(0, image.shape[0] - self.size + 1)
            left = rng.integers(0, image.shape[1] - self.size + 1)
            out[i] = image[top:top + self.size, left:left + self.size].ravel()
        return out


def make_dataset(kind: str, modes: int = 8, radius: float = 0.8, std: float = 0.05, noise: float = 0.02,
                 patch_dir: str = "", patch_size: int = 4) -> Dataset:
    """
    Build the generator of a dataset kind.

    :raises ContractViolation: for an unknown kind or an unreadable patch directory.
    """
    if kind == "gaussian_grid":
        return GaussianGrid(modes, radius, std)
    if kind == "gaussian_ring":
        return GaussianRing(modes, radius, std)
    if kind == "ring":
        return Ring(radius, noise)
    if kind == "two_spirals":
        return TwoSpirals(radius, noise)
    if kind == "checkerboard":
        return Checkerboard(modes, radius)
    if kind == "two_branch":
        return TwoBranch(radius, noise)
    if kind == "patches":
        return Patches(patch_dir, patch_size)
    raise ContractViolation(f"Unknown dataset kind {kind!r}")


def dataset_generate(kind: str, n: int, seed: int = 0, **params) -> np.ndarray:
    """``n`` points of ``kind``; ``params`` are the keyword arguments of :func:`make_dataset`."""
    return make_dataset(kind, **params).generate(n, seed)


def paired_dataset(points) -> tuple[np.ndarray, np.ndarray]:
    """
    Split points into conditional pairs: ``y`` is the first half of the coordinates (at least one),
    ``x`` the full point.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] < 2:
        raise ContractViolation(f"Paired data needs points with at least 2 coordinates, got {points.shape}")
    return points[:, :points.shape[1] // 2].copy(), points
