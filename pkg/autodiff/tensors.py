"""
File that describes tensors and named parameter collections.

A tensor is a plain :class:`numpy.ndarray`; this module only adds the validation
applied at API boundaries and the :class:`ParamStore` container for θ, α and β.
"""
from __future__ import annotations

from collections.abc import Iterator, Mapping
from typing import Sequence

import numpy as np

from core.errors import ContractViolation

DTYPES = {"float64": np.float64, "float32": np.float32}


def resolve_dtype(precision: str | np.dtype | type) -> np.dtype:
    """
    Map a precision name (``float64`` or ``float32``) or a numpy dtype to a numpy dtype.
    """
    if isinstance(precision, str):
        if precision not in DTYPES:
            raise ContractViolation(f"Unknown precision {precision!r}, expected one of {sorted(DTYPES)}")
        return np.dtype(DTYPES[precision])
    return np.dtype(precision)


def as_tensor(value, dtype=np.float64, name: str = "tensor") -> np.ndarray:
    """
    Convert ``value`` to an array of ``dtype`` and reject NaN/Inf.

    :param value: Array-like input.
    :param dtype: Target dtype.
    :param name: (:class:`str`) Name used in error messages.
    :return: (:class:`numpy.ndarray`) Validated array.
    """
    array = np.asarray(value, dtype=dtype)
    ensure_finite(array, name)
    return array


def ensure_finite(array: np.ndarray, name: str = "tensor") -> None:
    """Raise :class:`ContractViolation` if ``array`` contains a non-finite value."""
    if not np.all(np.isfinite(array)):
        raise ContractViolation(f"{name} contains non-finite values")


def as_batch(value, width: int, dtype=np.float64, name: str = "batch") -> np.ndarray:
    """
    Convert a single vector or a batch of vectors into a validated ``(B, width)`` array.

    :param value: Array-like of shape ``(width,)`` or ``(B, width)``.
    :param width: (:class:`int`) Expected trailing dimension.
    :return: (:class:`numpy.ndarray`) Array of shape ``(B, width)``.
    """
    array = as_tensor(value, dtype, name)
    if array.ndim == 1:
        array = array[None, :]
    if array.ndim != 2 or array.shape[1] != width:
        raise ContractViolation(f"{name} has shape {array.shape}, expected (B, {width})")
    return array


class ParamStore(Mapping):
    """
    Ordered, named collection of parameter tensors.

    Entries are updated in place by optimizers; the key set and the shapes never change
    after construction.

    :param entries: Mapping from parameter name to array.
    """

    def __init__(self, entries: Mapping[str, np.ndarray] | Sequence[tuple[str, np.ndarray]] = ()):
        items = entries.items() if isinstance(entries, Mapping) else entries
        self._entries: dict[str, np.ndarray] = {}
        for name, value in items:
            if name in self._entries:
                raise ContractViolation(f"Duplicate parameter name {name!r}")
            self._entries[name] = np.array(value, copy=True)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._entries[name]

    def __setitem__(self, name: str, value) -> None:
        if name not in self._entries:
            raise ContractViolation(f"Unknown parameter {name!r}")
        current = self._entries[name]
        value = np.asarray(value, dtype=current.dtype)
        if value.shape != current.shape:
            raise ContractViolation(f"Parameter {name!r} has shape {current.shape}, got {value.shape}")
        current[...] = value

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __repr__(self):
        shapes = ", ".join(f"{k}={v.shape}" for k, v in self._entries.items())
        return f"ParamStore({shapes})"

    @property
    def total_dim(self) -> int:
        """Total number of scalar parameters."""
        return int(sum(v.size for v in self._entries.values()))

    @property
    def dtype(self) -> np.dtype:
        """Dtype of the first entry (all entries share it in practice)."""
        for value in self._entries.values():
            return value.dtype
        return np.dtype(np.float64)

    def check_keys(self, other: Mapping[str, np.ndarray]) -> None:
        """Raise :class:`ContractViolation` unless ``other`` has exactly the same names and shapes."""
        if list(self._entries) != list(other):
            raise ContractViolation(f"Parameter key mismatch: {list(self._entries)} vs {list(other)}")
        for name, value in self._entries.items():
            if np.shape(other[name]) != value.shape:
                raise ContractViolation(f"Shape mismatch for {name!r}: {value.shape} vs {np.shape(other[name])}")

    def flatten(self) -> np.ndarray:
        """Concatenate all entries into one 1-D vector, in key order."""
        if not self._entries:
            return np.zeros(0)
        return np.concatenate([v.ravel() for v in self._entries.values()])

    def unflatten(self, vector) -> ParamStore:
        """
        Build a new store with this store's names and shapes from a flat vector.

        :param vector: 1-D array of length :attr:`total_dim`.
        :return: (:class:`ParamStore`) New store; ``self`` is unchanged.
        """
        vector = np.asarray(vector, dtype=self.dtype)
        if vector.shape != (self.total_dim,):
            raise ContractViolation(f"Flat vector has shape {vector.shape}, expected ({self.total_dim},)")
        entries, offset = [], 0
        for name, value in self._entries.items():
            entries.append((name, vector[offset:offset + value.size].reshape(value.shape)))
            offset += value.size
        return ParamStore(entries)

    def assign(self, other: Mapping[str, np.ndarray]) -> None:
        """Copy every entry of ``other`` into this store in place."""
        self.check_keys(other)
        for name in self._entries:
            self[name] = other[name]

    def copy(self) -> ParamStore:
        return ParamStore(self._entries)

    def zeros_like(self) -> ParamStore:
        return ParamStore([(k, np.zeros_like(v)) for k, v in self._entries.items()])

    def map(self, func) -> ParamStore:
        """Apply ``func`` to every entry and return the results as a new store."""
        return ParamStore([(k, func(v)) for k, v in self._entries.items()])

    def norm(self) -> float:
        """Euclidean norm of the flattened parameters."""
        return float(np.sqrt(sum(float(np.sum(v * v)) for v in self._entries.values())))

    def __add__(self, other: ParamStore) -> ParamStore:
        self.check_keys(other)
        return ParamStore([(k, v + other[k]) for k, v in self._entries.items()])

    def __sub__(self, other: ParamStore) -> ParamStore:
        self.check_keys(other)
        return ParamStore([(k, v - other[k]) for k, v in self._entries.items()])

    def __mul__(self, scale: float) -> ParamStore:
        return ParamStore([(k, v * scale) for k, v in self._entries.items()])

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, ParamStore) or list(self) != list(other):
            return False
        return all(np.array_equal(v, other[k]) for k, v in self._entries.items())

    __hash__ = None
