"""Semantic style loss: per-region mean/std distance between two feature maps."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ShapeMismatchError
from .semantics import LabelMap
from .tensors import FeatureMap, slice_stats


@dataclass(frozen=True)
class RegionDistance:
    label: int
    mean_distance: float
    std_distance: float


@dataclass(frozen=True)
class SslReport:
    per_region: list[RegionDistance]
    total: float
    skipped: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "regions": [
                {"label": r.label, "mean_d": r.mean_distance, "std_d": r.std_distance}
                for r in self.per_region
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def semantic_style_loss(f_out: FeatureMap, f_s: FeatureMap, l_out: LabelMap, l_s: LabelMap) -> SslReport:
    """Average over shared labels of ||mu_out - mu_s|| + ||sigma_out - sigma_s||.

    Labels present on only one side are skipped with a warning.
    """
    if f_out.channels != f_s.channels:
        raise ShapeMismatchError("ssl channels", f_out.shape, f_s.shape)
    if l_out.shape != f_out.spatial:
        raise ShapeMismatchError("output labels vs features", l_out.shape, f_out.spatial)
    if l_s.shape != f_s.spatial:
        raise ShapeMismatchError("style labels vs features", l_s.shape, f_s.spatial)

    in_out, in_s = l_out.present(), l_s.present()
    shared = sorted(in_out & in_s)
    skipped = sorted(in_out ^ in_s)
    if not shared:
        raise DataError("semantic style loss: no label is shared by the two maps")
    if skipped:
        warnings.warn(f"semantic style loss skips labels present on one side only: {skipped}")

    regions = []
    for i in shared:
        mo, so = slice_stats(f_out, l_out.labels == i)
        ms, ss = slice_stats(f_s, l_s.labels == i)
        regions.append(RegionDistance(i, float(np.linalg.norm(mo - ms)), float(np.linalg.norm(so - ss))))
    total = float(np.mean([r.mean_distance + r.std_distance for r in regions]))
    return SslReport(regions, total, skipped)
