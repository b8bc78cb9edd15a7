"""
Module for persisting runs: checkpoints and the metrics file
"""

from .checkpoints import (Checkpoint, save_checkpoint, load_checkpoint, checkpoint_from_state, restore_state,
                          checkpoint_path, latest_checkpoint)
from .metrics import MetricsWriter, metrics_log, read_metrics, COLUMNS
