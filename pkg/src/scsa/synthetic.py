"""Synthetic quadruples: Voronoi semantic layouts filled with per-region color noise."""
from __future__ import annotations

import numpy as np

from .pipeline import Quadruple

SEM_COLORS = np.array([
    [0, 0, 0], [255, 255, 255], [255, 0, 0], [0, 255, 0],
    [0, 0, 255], [255, 255, 0], [255, 0, 255], [0, 255, 255],
], dtype=np.uint8)


def voronoi_labels(rng: np.random.Generator, size: int, regions: int, min_cells: int = 16) -> np.ndarray:
    """Random Voronoi partition of a size x size grid in which every region is non-trivial."""
    yy, xx = np.mgrid[0:size, 0:size]
    while True:
        seeds = rng.uniform(0, size, size=(regions, 2))
        d = (yy[..., None] - seeds[:, 0]) ** 2 + (xx[..., None] - seeds[:, 1]) ** 2
        labels = np.argmin(d, axis=2)
        if np.bincount(labels.ravel(), minlength=regions).min() >= min_cells:
            return labels


def region_image(rng: np.random.Generator, labels: np.ndarray, means: np.ndarray, stds: np.ndarray) -> np.ndarray:
    img = means[labels] + rng.standard_normal(labels.shape + (3,)) * stds[labels][..., None]
    return np.clip(img, 0, 255)


def make_quadruple(seed: int, size: int = 64, regions: int | None = None) -> tuple[Quadruple, int]:
    """Content and style share a label vocabulary but not layout or color statistics."""
    rng = np.random.default_rng(seed)
    n = regions or int(rng.integers(2, 5))
    lc = voronoi_labels(rng, size, n)
    ls = voronoi_labels(rng, size, n)
    c_img = region_image(rng, lc, rng.uniform(30, 225, (n, 3)), rng.uniform(2, 30, n))
    s_img = region_image(rng, ls, rng.uniform(30, 225, (n, 3)), rng.uniform(2, 30, n))
    quad = Quadruple(c_img, SEM_COLORS[lc], s_img, SEM_COLORS[ls])
    return quad, n
