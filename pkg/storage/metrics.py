"""
File that describes the metrics CSV of a run. The column order is fixed by :data:`COLUMNS`;
an unavailable divergence is written as an empty cell.
"""
import csv
import logging
from pathlib import Path
from typing import Mapping, Optional, Union

from diagnostics.divergences import COLUMNS as DIVERGENCE_COLUMNS
from training.trainer import LossReport

logger = logging.getLogger(__name__)

LOSS_COLUMNS = ("iteration", "positive_energy", "negative_energy", "reconstruction", "kl", "vae_loss", "energy_gap")
COLUMNS = LOSS_COLUMNS + DIVERGENCE_COLUMNS
METRICS_FILE = "metrics.csv"


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


class MetricsWriter:
    """
    Appends rows to a metrics file; the header is written when the file is new or empty.

    Usage::

        with MetricsWriter(run_dir / "metrics.csv") as writer:
            writer.log(report, trace.tail())
    """

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self._file = None
        self._writer = None

    def __enter__(self) -> "MetricsWriter":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fresh = not self.path.exists() or self.path.stat().st_size == 0
        self._file = self.path.open("a", newline="", encoding="utf-8")
        self._writer = csv.writer(self._file)
        if fresh:
            self._writer.writerow(COLUMNS)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self._file.close()
        self._file = None

    def log(self, report: LossReport, divergences: Optional[Mapping[str, Optional[float]]] = None) -> None:
        """Append one row and flush it."""
        if self._file is None:
            raise RuntimeError("MetricsWriter is used outside of its context")
        values = {**report.as_dict(), **(divergences or {})}
        self._writer.writerow([_cell(values.get(name)) for name in COLUMNS])
        self._file.flush()


def metrics_log(run_dir: Union[str, Path], report: LossReport,
                divergences: Optional[Mapping[str, Optional[float]]] = None) -> Path:
    """Append one row to ``run_dir/metrics.csv``."""
    path = Path(run_dir) / METRICS_FILE
    with MetricsWriter(path) as writer:
        writer.log(report, divergences)
    return path


def read_metrics(path: Union[str, Path]) -> list[dict]:
    """
    Parse a metrics file: ``iteration`` as int, the other cells as float, empty cells as ``None``.

    :raises ValueError: when the header is not the documented column order.
    """
    with Path(path).open(newline="", encoding="utf-8") as file:
        reader = csv.reader(file)
        header = tuple(next(reader, ()))
        if header != COLUMNS:
            raise ValueError(f"{path}: unexpected metrics header {header}")
        rows = []
        for line in reader:
            row = {}
            for name, text in zip(COLUMNS, line):
                if text == "":
                    row[name] = None
                else:
                    row[name] = int(text) if name == "iteration" else float(text)
            rows.append(row)
    return rows
