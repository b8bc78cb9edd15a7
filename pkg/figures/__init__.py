"""
Module that writes the figures of a run as portable graymaps/pixmaps and CSV point sets
"""

from .emit import emit_figures, write_points_csv, read_points_csv, heatmap_pixels, scatter_pixels
from .netpbm import write_image, read_image, to_pixels
