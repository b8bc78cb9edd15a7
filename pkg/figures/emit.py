"""
File that contains the figure emitters of a run: sample scatter overlays, the normalized energy
heatmap, Langevin frame strips and latent interpolation strips, plus CSV point sets.
"""
from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from core.errors import ContractViolation
from core.models import ModelSet
from diagnostics.analysis import latent_interpolate
from diagnostics.quadrature import GridSpec, grid_log_density
from figures.netpbm import to_pixels, write_image
from sampling.samplers import ChainRecord

logger = logging.getLogger(__name__)

# RGB colours of the scatter layers: data, initial samples, revised samples.
DATA_COLOR = (160, 160, 160)
INITIAL_COLOR = (40, 90, 220)
REVISED_COLOR = (220, 50, 40)
PANEL_SIZE = 128
TILE_SCALE = 8
MAX_TILES = 8


def write_points_csv(path: Union[str, Path], points) -> Path:
    """One row per point, columns ``x0, x1, ...``."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as file:
        writer = csv.writer(file)
        writer.writerow([f"x{k}" for k in range(points.shape[1])])
        writer.writerows([[repr(float(v)) for v in row] for row in points])
    return path


def read_points_csv(path: Union[str, Path]) -> np.ndarray:
    with Path(path).open(newline="", encoding="utf-8") as file:
        reader = csv.reader(file)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    return np.asarray(rows, dtype=np.float64).reshape(len(rows), len(header))


def scatter_pixels(layers: Sequence[tuple[np.ndarray, tuple[int, int, int]]], bounds: tuple[float, float],
                   size: int = PANEL_SIZE) -> np.ndarray:
    """
    Draw 2-D point layers on a white square, later layers on top. The y axis points up.

    :param layers: ``(points (n, 2), rgb)`` pairs.
    :param bounds: ``(lo, hi)`` shared by both axes; points outside are not drawn.
    """
    lo, hi = bounds
    canvas = np.full((size, size, 3), 255, dtype=np.uint8)
    for points, color in layers:
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 2:
            raise ContractViolation(f"Scatter layers need (n, 2) points, got {points.shape}")
        cols = np.floor((points[:, 0] - lo) / (hi - lo) * size).astype(np.int64)
        rows = size - 1 - np.floor((points[:, 1] - lo) / (hi - lo) * size).astype(np.int64)
        keep = (cols >= 0) & (cols < size) & (rows >= 0) & (rows < size)
        canvas[rows[keep], cols[keep]] = color
    return canvas


def heatmap_pixels(models: ModelSet, grid: GridSpec) -> np.ndarray:
    """
    ``exp(-U)/Z`` on a 2-D grid as a graymap, scaled so that the densest node is white.
    Rows run from the top of the y range to its bottom.
    """
    if grid.dims != 2:
        raise ContractViolation(f"Heatmaps need a 2-D grid, got {grid.dims} dimensions")
    density = np.exp(grid_log_density(models.energy, grid))
    return to_pixels(density.T[::-1], 0.0, float(density.max()))


def tile_pixels(batch: np.ndarray, side: int) -> np.ndarray:
    """Stack the first samples of a patch batch vertically, each ``side × side`` upscaled by :data:`TILE_SCALE`."""
    tiles = [np.kron(row.reshape(side, side), np.ones((TILE_SCALE, TILE_SCALE))) for row in batch[:MAX_TILES]]
    return to_pixels(np.vstack(tiles), -1.0, 1.0)


def strip_pixels(batches: Sequence[np.ndarray], bounds: tuple[float, float]) -> np.ndarray:
    """
    One panel per batch, left to right: scatter panels for 2-D points, patch tiles for square patches.
    """
    width = np.asarray(batches[0]).shape[1]
    if width == 2:
        panels = [scatter_pixels([(b, REVISED_COLOR)], bounds) for b in batches]
    else:
        side = int(round(np.sqrt(width)))
        if side * side != width:
            raise ContractViolation(f"Cannot draw {width}-dimensional points")
        panels = [np.repeat(tile_pixels(np.asarray(b), side)[:, :, None], 3, axis=2) for b in batches]
    gap = np.full((panels[0].shape[0], 2, 3), 0, dtype=np.uint8)
    pieces = []
    for panel in panels:
        pieces += [panel, gap]
    return np.concatenate(pieces[:-1], axis=1)


def _drawable(width: int) -> bool:
    return width == 2 or int(round(np.sqrt(width))) ** 2 == width


def emit_figures(run_dir: Union[str, Path], models: ModelSet, data: Optional[np.ndarray], record: ChainRecord,
                 grid: Optional[GridSpec] = None, interpolation_seed: int = 0, interpolation_steps: int = 8) -> list[Path]:
    """
    Write the figures of a run into ``run_dir/figures``.

    * ``samples_data.csv``, ``samples_initial.csv``, ``samples_revised.csv`` and, for 2-D data,
      ``scatter.ppm`` with data in gray, x̂ in blue and x̃ in red,
    * ``heatmap.pgm`` for 2-D grids,
    * ``frames.ppm`` when the chain kept its frames,
    * ``interpolation.csv`` and ``interpolation.ppm`` along one latent arc.

    :return: (:class:`list`) Written paths.
    """
    out = Path(run_dir) / "figures"
    bounds = (grid.bounds[0][0], grid.bounds[0][1]) if grid is not None else (-1.0, 1.0)
    written = []
    if data is not None:
        written.append(write_points_csv(out / "samples_data.csv", data))
    written.append(write_points_csv(out / "samples_initial.csv", record.initial))
    written.append(write_points_csv(out / "samples_revised.csv", record.final))

    if record.final.shape[1] == 2:
        layers = ([(data, DATA_COLOR)] if data is not None else []) + \
                 [(record.initial, INITIAL_COLOR), (record.final, REVISED_COLOR)]
        written.append(write_image(out / "scatter.ppm", scatter_pixels(layers, bounds)))
    if grid is not None and grid.dims == 2 and models.cond_dim == 0:
        written.append(write_image(out / "heatmap.pgm", heatmap_pixels(models, grid)))
    drawable = _drawable(record.final.shape[1])
    if record.frames and drawable:
        written.append(write_image(out / "frames.ppm", strip_pixels(record.frames, bounds)))

    if models.cond_dim == 0:
        rng = np.random.default_rng(interpolation_seed)
        g = models.generator
        path = latent_interpolate(g, rng.standard_normal(g.latent_dim), rng.standard_normal(g.latent_dim),
                                  interpolation_steps)
        written.append(write_points_csv(out / "interpolation.csv", path))
        if drawable:
            written.append(write_image(out / "interpolation.ppm", strip_pixels([row[None, :] for row in path], bounds)))
    logger.info(f"Wrote {len(written)} figure files to {out}")
    return written
