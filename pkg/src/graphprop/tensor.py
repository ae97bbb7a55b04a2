"""Dense tensors, mode-m matricisation, m-mode products, and Tucker synthesis.

Node enumeration contract used across the package: for a tensor of shape
(I1, ..., Im), the mode-m fibers are indexed by

    p = i1 + I1*i2 + I1*I2*i3 + ...        (zero-based, i1 varies fastest)

over the leading m-1 indices. ``matricize``/``refold`` below, the binary
file layout, and the graph construction all share this enumeration. For a
general mode, the fiber index runs over the remaining axes in their
original order, earliest axis fastest.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

FORMAT_DTYPE = "f64"
FORMAT_LAYOUT = "fiber-fastest"
ORTHONORMAL_TOL = 1e-10


def _finite_float_array(values, context: str) -> np.ndarray:
    arr = np.ascontiguousarray(np.asarray(values, dtype=np.float64))
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{context}: values must be finite")
    return arr


@dataclass(frozen=True, eq=False)
class DenseTensor:
    """Dense real tensor with explicit shape.

    ``values`` is a C-contiguous float64 array whose shape equals ``shape``;
    all entries are finite. Instances are immutable.
    """

    shape: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        if len(shape) < 1 or any(s < 1 for s in shape):
            raise ValueError(f"tensor extents must be positive, got {shape}")
        arr = _finite_float_array(self.values, "DenseTensor")
        if arr.shape != shape:
            raise ValueError(
                f"value array shape {arr.shape} does not match declared shape {shape}"
            )
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "values", arr)

    @classmethod
    def from_array(cls, values) -> "DenseTensor":
        arr = np.asarray(values, dtype=np.float64)
        return cls(tuple(arr.shape), arr)

    @property
    def order(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


@dataclass(frozen=True, eq=False)
class FiberMatrix:
    """Mode-m fibers as rows: row p holds the fiber of node p under the
    canonical enumeration (module docstring)."""

    values: np.ndarray

    def __post_init__(self):
        arr = _finite_float_array(self.values, "FiberMatrix")
        if arr.ndim != 2:
            raise ValueError(f"fiber matrix must be 2-D, got {arr.ndim}-D")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"fiber matrix must be non-empty, got shape {arr.shape}")
        object.__setattr__(self, "values", arr)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]


def _check_mode(order: int, mode: int) -> None:
    if not 1 <= mode <= order:
        raise ValueError(f"mode must be in 1..{order}, got {mode}")


def matricize(t: DenseTensor, mode: int) -> FiberMatrix:
    """Arrange the mode-``mode`` fibers of ``t`` as matrix rows.

    ``mode`` is 1-based. Row p is the fiber whose remaining indices
    enumerate in the canonical order (earliest remaining axis fastest).
    """
    _check_mode(t.order, mode)
    moved = np.moveaxis(t.values, mode - 1, 0)
    unfolded = np.reshape(moved, (t.shape[mode - 1], -1), order="F")
    return FiberMatrix(np.ascontiguousarray(unfolded.T))


def refold(f: FiberMatrix, shape, mode: int) -> DenseTensor:
    """Inverse of :func:`matricize`: rebuild the tensor of ``shape`` from
    rows of mode-``mode`` fibers."""
    shape = tuple(int(s) for s in shape)
    _check_mode(len(shape), mode)
    if shape[mode - 1] != f.channels:
        raise ValueError(
            f"shape[{mode}] = {shape[mode - 1]} does not match fiber length {f.channels}"
        )
    if f.n * f.channels != math.prod(shape):
        raise ValueError(
            f"fiber matrix holds {f.n * f.channels} values, shape {shape} needs {math.prod(shape)}"
        )
    rest = tuple(s for i, s in enumerate(shape) if i != mode - 1)
    moved = np.reshape(f.values.T, (shape[mode - 1],) + rest, order="F")
    return DenseTensor(shape, np.ascontiguousarray(np.moveaxis(moved, 0, mode - 1)))


def mode_product(t: DenseTensor, matrix: np.ndarray, mode: int) -> DenseTensor:
    """m-mode product: contract mode ``mode`` of ``t`` with the columns of
    ``matrix``.

    ``matrix`` has shape (J, I_mode); the result replaces extent I_mode
    with J. Equivalently, every mode-``mode`` fiber is mapped through
    ``matrix``.
    """
    _check_mode(t.order, mode)
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != t.shape[mode - 1]:
        raise ValueError(
            f"matrix shape {matrix.shape} incompatible with mode-{mode} extent {t.shape[mode - 1]}"
        )
    out = np.tensordot(matrix, t.values, axes=(1, mode - 1))
    out = np.moveaxis(out, 0, mode - 1)
    return DenseTensor(tuple(out.shape), np.ascontiguousarray(out))


@dataclass(frozen=True, eq=False)
class TuckerFactors:
    """Core tensor plus one factor per mode, factor k of shape (r_k, I_k)
    with orthonormal rows."""

    core: DenseTensor
    factors: tuple[np.ndarray, ...]

    def __post_init__(self):
        factors = tuple(np.asarray(u, dtype=np.float64) for u in self.factors)
        if len(factors) != self.core.order:
            raise ValueError(
                f"need {self.core.order} factors for an order-{self.core.order} core, got {len(factors)}"
            )
        for k, u in enumerate(factors):
            if u.ndim != 2:
                raise ValueError(f"factor {k + 1} must be a matrix")
            rows, cols = u.shape
            if rows != self.core.shape[k]:
                raise ValueError(
                    f"factor {k + 1} has {rows} rows, core extent is {self.core.shape[k]}"
                )
            if rows > cols:
                raise ValueError(f"factor {k + 1} has rank {rows} > extent {cols}")
            gram = u @ u.T
            if np.max(np.abs(gram - np.eye(rows))) > ORTHONORMAL_TOL:
                raise ValueError(f"factor {k + 1} rows are not orthonormal")
        object.__setattr__(self, "factors", factors)

    @property
    def output_shape(self) -> tuple[int, ...]:
        return tuple(u.shape[1] for u in self.factors)


def tucker_synthesize(tf: TuckerFactors) -> DenseTensor:
    """Multilinear product of the core with every factor: the mode-k
    unfolding of the result has numerical rank at most r_k."""
    result = tf.core
    for k, u in enumerate(tf.factors):
        result = mode_product(result, u.T, k + 1)
    return result


def save_tensor(t: DenseTensor, path) -> None:
    """Write the binary container: one JSON header line, then raw
    little-endian float64 in fiber-fastest order (the last index varies
    fastest, then the first, second, ...)."""
    header = json.dumps(
        {"shape": list(t.shape), "dtype": FORMAT_DTYPE, "layout": FORMAT_LAYOUT}
    )
    payload = matricize(t, t.order).values.astype("<f8").tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(header.encode("utf-8"))
        fh.write(b"\n")
        fh.write(payload)


def load_tensor(path) -> DenseTensor:
    """Read a tensor written by :func:`save_tensor`, validating that the
    header and payload agree."""
    raw = Path(path).read_bytes()
    sep = raw.find(b"\n")
    if sep < 0:
        raise DataError(f"{path}: missing header line")
    try:
        header = json.loads(raw[:sep].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: malformed header ({exc})") from exc
    if not isinstance(header, dict) or set(header) != {"shape", "dtype", "layout"}:
        raise DataError(f"{path}: header must carry exactly shape/dtype/layout")
    if header["dtype"] != FORMAT_DTYPE:
        raise DataError(f"{path}: unsupported dtype {header['dtype']!r}")
    if header["layout"] != FORMAT_LAYOUT:
        raise DataError(f"{path}: unsupported layout {header['layout']!r}")
    shape = header["shape"]
    if (
        not isinstance(shape, list)
        or not shape
        or not all(isinstance(s, int) and s >= 1 for s in shape)
    ):
        raise DataError(f"{path}: shape must be a list of positive integers")
    shape = tuple(shape)
    payload = raw[sep + 1 :]
    expected = math.prod(shape) * 8
    if len(payload) != expected:
        raise DataError(
            f"{path}: payload holds {len(payload)} bytes, header implies {expected}"
        )
    flat = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    channels = shape[-1]
    rows = flat.reshape(math.prod(shape) // channels, channels)
    try:
        return refold(FiberMatrix(rows), shape, len(shape))
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
