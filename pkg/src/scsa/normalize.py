"""Per-region adaptive instance normalization (S-AdaIN)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ShapeMismatchError
from .semantics import LabelMap
from .tensors import FeatureMap, slice_stats

DEFAULT_EPS = 1e-5


@dataclass(frozen=True)
class RegionStats:
    label: int
    mean: np.ndarray
    std: np.ndarray


def region_stats(f: FeatureMap, l: LabelMap) -> dict[int, RegionStats]:
    if l.shape != f.spatial:
        raise ShapeMismatchError("labels vs features", l.shape, f.spatial)
    out = {}
    for i in sorted(l.present()):
        mean, std = slice_stats(f, l.labels == i)
        out[i] = RegionStats(i, mean, std)
    return out


def _renormalize(x: np.ndarray, src_mean, src_std, dst_mean, dst_std, eps: float) -> np.ndarray:
    denom = np.broadcast_to(src_std + eps, x.shape)
    z = np.divide(x - src_mean, denom, out=np.zeros_like(x), where=denom > 0)
    return z * dst_std + dst_mean


def s_adain(fc: FeatureMap, fs: FeatureMap, lc: LabelMap, ls: LabelMap, eps: float = DEFAULT_EPS) -> FeatureMap:
    """Match every content region's channel statistics to the same-label style region.

    Cells of different labels never mix. A single-cell (or constant) content region
    maps onto the style region's mean.
    """
    if fc.channels != fs.channels:
        raise ShapeMismatchError("s_adain channels", fc.shape, fs.shape)
    if lc.shape != fc.spatial:
        raise ShapeMismatchError("content labels vs features", lc.shape, fc.spatial)
    if ls.shape != fs.spatial:
        raise ShapeMismatchError("style labels vs features", ls.shape, fs.spatial)
    if eps < 0:
        raise DataError(f"eps must be non-negative, got {eps}")

    style = region_stats(fs, ls)
    cells = fc.cells().copy()
    flat = lc.flat()
    for i in sorted(lc.present()):
        if i not in style:
            raise DataError(f"unmatched semantic region: label {i} has no style cells")
        sel = flat == i
        region = cells[sel]
        mean = region.mean(axis=0)
        std = np.sqrt(((region - mean) ** 2).mean(axis=0))
        cells[sel] = _renormalize(region, mean, std, style[i].mean, style[i].std, eps)
    return FeatureMap.from_cells(cells, fc.height, fc.width)


def adain(fc: FeatureMap, fs: FeatureMap, eps: float = DEFAULT_EPS) -> FeatureMap:
    """Plain whole-map AdaIN, the label-free counterpart of s_adain."""
    if fc.channels != fs.channels:
        raise ShapeMismatchError("adain channels", fc.shape, fs.shape)
    c, s = fc.cells(), fs.cells()
    out = _renormalize(c, c.mean(axis=0), c.std(axis=0), s.mean(axis=0), s.std(axis=0), eps)
    return FeatureMap.from_cells(out, fc.height, fc.width)
