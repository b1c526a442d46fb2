"""Shared model-side types: discrete time grids, pmf/CIF containers, the
uniform predict-CIF contract, and the on-disk model envelope.

Every trained model, whatever its kind, exposes ``predict_cif(series, t)``
returning a :class:`CifEstimate` on the model's native grid, plus a
``horizon()`` giving the duration treated as "infinity" when classifier
probabilities need total event masses.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError


@dataclass(frozen=True)
class TimeGrid:
    """Ascending durations ``deltas`` over which pmf-style models put mass.

    Bin u covers ``(deltas[u-1], deltas[u]]`` with an implicit left edge of
    0.  Model grids additionally require a positive first edge and a last
    edge covering every residual duration seen in training; constructors
    of the pmf models enforce that.
    """

    deltas: np.ndarray

    def __post_init__(self):
        deltas = np.ascontiguousarray(self.deltas, dtype=np.float64)
        if deltas.ndim != 1 or deltas.size == 0:
            raise ValidationError("a time grid needs at least one duration")
        if deltas[0] < 0 or (deltas.size > 1 and not np.all(np.diff(deltas) > 0)):
            raise ValidationError("grid durations must be nonnegative and ascending")
        deltas.setflags(write=False)
        object.__setattr__(self, "deltas", deltas)

    @property
    def m(self) -> int:
        return self.deltas.size

    def bin_index(self, duration: float) -> int:
        """0-based bin containing ``duration``; durations beyond the last
        edge are clamped into the final bin (callers warn where relevant).
        """
        u = int(np.searchsorted(self.deltas, duration, side="left"))
        return min(u, self.m - 1)

    @classmethod
    def regular(cls, upper: float, m: int) -> "TimeGrid":
        if upper <= 0 or m < 1:
            raise ValidationError("grid upper bound and size must be positive")
        return cls(np.linspace(upper / m, upper, m))


def default_grid(max_residual: float, m: int = 30) -> TimeGrid:
    """Equal-width grid with 5% headroom past the longest residual, so no
    training subject lands in the final (open-ended) bin."""
    return TimeGrid.regular(max_residual * 1.05, m)


@dataclass(frozen=True)
class PmfEstimate:
    """Per-(event, bin) probability masses; entries sum to 1."""

    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValidationError("pmf values must be a k x m matrix")
        if np.any(values < 0):
            raise ValidationError("pmf entries must be nonnegative")
        if abs(values.sum() - 1.0) > 1e-6:
            raise ValidationError(f"pmf entries sum to {values.sum()}, expected 1")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class CifEstimate:
    """Per-event cumulative incidence on a grid: ``values[j, u]`` is the
    probability of event j+1 within ``grid.deltas[u]``."""

    values: np.ndarray
    grid: TimeGrid

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != self.grid.m:
            raise ValidationError("CIF matrix must be k x len(grid)")
        if np.any(values < -1e-12):
            raise ValidationError("CIF values must be nonnegative")
        if values.shape[1] > 1 and np.any(np.diff(values, axis=1) < -1e-9):
            raise ValidationError("CIF rows must be nondecreasing")
        if np.any(values[:, -1].sum() > 1 + 1e-6):
            raise ValidationError("total event mass exceeds 1")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def k(self) -> int:
        return self.values.shape[0]

    def value_at(self, event: int, delta: float) -> float:
        """Step interpolation: the value at the largest grid point <= delta,
        0 before the first grid point (right-continuous CIF)."""
        u = int(np.searchsorted(self.grid.deltas, delta, side="right")) - 1
        if u < 0:
            return 0.0
        return float(self.values[event - 1, min(u, self.grid.m - 1)])

    def terminal(self, event: int) -> float:
        """Event mass at the last grid point (the "infinity" surrogate)."""
        return float(self.values[event - 1, -1])


def cif_from_pmf(pmf: PmfEstimate, grid: TimeGrid) -> CifEstimate:
    """Row-wise prefix sums turn bin masses into cumulative incidence."""
    if pmf.values.shape[1] != grid.m:
        raise ValidationError("pmf and grid disagree on bin count")
    return CifEstimate(values=np.cumsum(pmf.values, axis=1), grid=grid)


# ---------------------------------------------------------------------------
# Model file envelope: magic, JSON header (kind, dims, grid, hyperparameters,
# seed), then named float64 arrays.  Raw little-endian array bytes make the
# round trip bit-exact.
# ---------------------------------------------------------------------------

_MODEL_MAGIC = b"DCRKITM1"


def pack_arrays(header: dict, arrays: dict) -> bytes:
    head = json.dumps(header, separators=(",", ":"), allow_nan=False).encode()
    chunks = [_MODEL_MAGIC, struct.pack("<I", len(head)), head]
    chunks.append(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        name_b = name.encode()
        chunks.append(struct.pack("<I", len(name_b)))
        chunks.append(name_b)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}q", *arr.shape))
        chunks.append(arr.astype("<f8", copy=False).tobytes())
    return b"".join(chunks)


def unpack_arrays(data: bytes):
    if data[:8] != _MODEL_MAGIC:
        raise ValidationError("not a dcrkit model file")
    off = 8
    (hlen,) = struct.unpack_from("<I", data, off)
    off += 4
    header = json.loads(data[off : off + hlen].decode())
    off += hlen
    (count,) = struct.unpack_from("<I", data, off)
    off += 4
    arrays = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", data, off)
        off += 4
        name = data[off : off + nlen].decode()
        off += nlen
        (ndim,) = struct.unpack_from("<I", data, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}q", data, off)
        off += 8 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(data, dtype="<f8", count=size, offset=off).reshape(shape)
        off += 8 * size
        arrays[name] = arr.copy()
    if off != len(data):
        raise ValidationError("trailing bytes in model file")
    return header, arrays
