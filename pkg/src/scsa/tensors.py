"""Dense numeric substrate: feature maps, matmul, masked row softmax, region statistics.

Feature maps are stored channel-first (C, H, W) in float64. Attention code works on
the "cells" view, a (H*W, C) matrix with one row per spatial cell in row-major order.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, EmptyCorrespondenceError, ShapeMismatchError

FEATURE_MAGIC = b"SCSAF1"


@dataclass(frozen=True, eq=False)
class FeatureMap:
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise DataError(f"feature map must be a non-empty (C, H, W) array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DataError("feature map contains NaN or infinite values")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def spatial(self) -> tuple[int, int]:
        return self.data.shape[1:]

    def cells(self) -> np.ndarray:
        """(H*W, C) view, one row per spatial cell."""
        return self.data.reshape(self.channels, -1).T

    @classmethod
    def from_cells(cls, cells: np.ndarray, height: int, width: int) -> "FeatureMap":
        cells = np.asarray(cells, dtype=np.float64)
        if cells.ndim != 2 or cells.shape[0] != height * width:
            raise ShapeMismatchError("cells -> feature map", cells.shape, (height * width, "C"))
        return cls(cells.T.reshape(cells.shape[1], height, width))

    def __add__(self, other: "FeatureMap") -> "FeatureMap":
        _check_same(self, other, "add")
        return FeatureMap(self.data + other.data)

    def __sub__(self, other: "FeatureMap") -> "FeatureMap":
        _check_same(self, other, "subtract")
        return FeatureMap(self.data - other.data)

    def __mul__(self, k: float) -> "FeatureMap":
        return FeatureMap(self.data * float(k))

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"FeatureMap(channels={self.channels}, height={self.height}, width={self.width})"


def _check_same(a: FeatureMap, b: FeatureMap, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(what, a.shape, b.shape)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError("matmul", a.shape, b.shape)
    return a @ b


def row_softmax(m: np.ndarray) -> np.ndarray:
    """Row-wise softmax where -inf entries become exactly 0.

    The stabilizing max is taken over finite entries only. A row without any
    finite entry raises EmptyCorrespondenceError.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise DataError(f"attention matrix must be 2-D, got shape {m.shape}")
    if np.any(np.isnan(m)) or np.any(m == np.inf):
        raise DataError("attention matrix contains NaN or +inf")
    finite = np.isfinite(m)
    empty = ~finite.any(axis=1)
    if empty.any():
        raise EmptyCorrespondenceError(int(np.argmax(empty)))
    row_max = np.where(finite, m, -np.inf).max(axis=1, keepdims=True)
    e = np.where(finite, np.exp(np.where(finite, m - row_max, 0.0)), 0.0)
    return e / e.sum(axis=1, keepdims=True)


def slice_stats(f: FeatureMap, cells) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and population std over the selected spatial cells.

    `cells` is either a boolean (H, W) mask or an array of flat cell indices.
    """
    cells = np.asarray(cells)
    flat = f.cells()
    if cells.dtype == bool:
        if cells.shape != f.spatial:
            raise ShapeMismatchError("slice_stats mask", cells.shape, f.spatial)
        sel = flat[cells.reshape(-1)]
    else:
        sel = flat[cells.reshape(-1).astype(np.intp)]
    if sel.shape[0] == 0:
        raise DataError("slice_stats: empty cell set")
    mean = sel.mean(axis=0)
    std = np.sqrt(((sel - mean) ** 2).mean(axis=0))
    return mean, std


def save_feature_map(path, f: FeatureMap) -> None:
    write_feature_array(path, f.data)


def write_feature_array(path, data: np.ndarray) -> None:
    """Write any finite (C, H, W) array in SCSAF1 layout."""
    data = np.asarray(data)
    c, h, w = data.shape
    payload = np.ascontiguousarray(data, dtype="<f4").tobytes()
    Path(path).write_bytes(FEATURE_MAGIC + struct.pack("<3I", c, h, w) + payload)


def load_feature_map(path) -> FeatureMap:
    raw = Path(path).read_bytes()
    header = len(FEATURE_MAGIC) + 12
    if len(raw) < header or raw[: len(FEATURE_MAGIC)] != FEATURE_MAGIC:
        raise DataError(f"{path}: not an SCSAF1 feature file")
    c, h, w = struct.unpack("<3I", raw[len(FEATURE_MAGIC):header])
    expected = c * h * w * 4
    if len(raw) - header != expected:
        raise DataError(f"{path}: payload is {len(raw) - header} bytes, header implies {expected}")
    data = np.frombuffer(raw, dtype="<f4", offset=header).reshape(c, h, w)
    return FeatureMap(data.astype(np.float64))
