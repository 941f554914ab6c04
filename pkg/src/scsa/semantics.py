"""Semantic maps -> aligned integer label maps.

Both maps are clustered jointly so that label i means the same category on the
content and the style side.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError, SemanticError
from .tensors import FeatureMap

LABEL_MAGIC = b"SCSAL1"
MAX_ITER = 100


@dataclass(frozen=True, eq=False)
class LabelMap:
    labels: np.ndarray
    num_labels: int

    def __post_init__(self):
        arr = np.asarray(self.labels)
        if arr.ndim != 2 or min(arr.shape) < 1:
            raise DataError(f"label map must be a non-empty 2-D array, got shape {arr.shape}")
        if not np.issubdtype(arr.dtype, np.integer):
            raise DataError(f"label map must hold integers, got {arr.dtype}")
        if self.num_labels < 1 or self.num_labels > 65535:
            raise DataError(f"num_labels must be in [1, 65535], got {self.num_labels}")
        if arr.min() < 0 or arr.max() >= self.num_labels:
            raise DataError(f"labels must lie in [0, {self.num_labels})")
        arr = np.ascontiguousarray(arr, dtype=np.int64)
        arr.setflags(write=False)
        object.__setattr__(self, "labels", arr)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def flat(self) -> np.ndarray:
        return self.labels.reshape(-1)

    def present(self) -> set[int]:
        return set(np.unique(self.labels).tolist())

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, LabelMap)
            and self.num_labels == other.num_labels
            and np.array_equal(self.labels, other.labels)
        )

    def __repr__(self) -> str:
        return f"LabelMap({self.height}x{self.width}, num_labels={self.num_labels})"


@dataclass(frozen=True)
class Palette:
    centers: np.ndarray  # (N, 3), RGB in [0, 255]

    def colors_uint8(self) -> np.ndarray:
        return np.clip(np.rint(self.centers), 0, 255).astype(np.uint8)

    def to_json(self) -> dict:
        return {"centers": [[float(v) for v in c] for c in self.centers]}


def _as_rgb(img) -> np.ndarray:
    arr = np.asarray(img)
    if arr.ndim == 2:
        arr = np.stack([arr] * 3, axis=-1)
    if arr.ndim != 3 or arr.shape[2] < 3 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise DataError(f"expected a non-empty RGB image, got shape {arr.shape}")
    return arr[..., :3].astype(np.float64)


def _nearest(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d, axis=1)  # first minimum -> lowest center index on ties


def _seed_centers(colors: np.ndarray, weights: np.ndarray, n: int, rng) -> np.ndarray:
    # k-means++ seeding over the distinct colors, weighted by pixel count
    first = rng.choice(len(colors), p=weights / weights.sum())
    chosen = [first]
    d2 = ((colors - colors[first]) ** 2).sum(axis=1)
    for _ in range(1, n):
        w = weights * d2
        idx = rng.choice(len(colors), p=w / w.sum())
        chosen.append(idx)
        d2 = np.minimum(d2, ((colors - colors[idx]) ** 2).sum(axis=1))
    return colors[chosen].copy()


def kmeans(colors: np.ndarray, weights: np.ndarray, n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Weighted Lloyd iteration. Returns (centers, assignment per color)."""
    rng = np.random.default_rng(seed)
    centers = _seed_centers(colors, weights, n, rng)
    assign = _nearest(colors, centers)
    for _ in range(MAX_ITER):
        for k in range(n):
            sel = assign == k
            if sel.any():  # an emptied cluster keeps its previous center
                centers[k] = (colors[sel] * weights[sel, None]).sum(axis=0) / weights[sel].sum()
        new = _nearest(colors, centers)
        if np.array_equal(new, assign):
            break
        assign = new
    return centers, assign


def quantize_semantic_maps(csem, ssem, n: int, seed: int = 0) -> tuple[LabelMap, LabelMap, Palette]:
    if n < 1:
        raise DataError(f"cluster count must be >= 1, got {n}")
    c_rgb, s_rgb = _as_rgb(csem), _as_rgb(ssem)
    pixels = np.concatenate([c_rgb.reshape(-1, 3), s_rgb.reshape(-1, 3)])
    colors, inverse, counts = np.unique(pixels, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    if n > len(colors):
        raise SemanticError(f"{n} clusters requested but the semantic maps hold only {len(colors)} distinct colors")

    centers, assign = kmeans(colors, counts.astype(np.float64), n, seed)

    population = np.bincount(assign, weights=counts, minlength=n)
    # descending population, ties by centroid color
    order = sorted(range(n), key=lambda k: (-population[k], tuple(centers[k])))
    relabel = np.empty(n, dtype=np.int64)
    relabel[order] = np.arange(n)

    pixel_labels = relabel[assign][inverse]
    n_c = c_rgb.shape[0] * c_rgb.shape[1]
    lc = pixel_labels[:n_c].reshape(c_rgb.shape[:2])
    ls = pixel_labels[n_c:].reshape(s_rgb.shape[:2])
    check_aligned(lc, ls, n)
    return LabelMap(lc, n), LabelMap(ls, n), Palette(centers[order])


def check_aligned(lc, ls, n: int) -> None:
    """Every label in [0, n) must occur on both sides."""
    lc = lc.labels if isinstance(lc, LabelMap) else np.asarray(lc)
    ls = ls.labels if isinstance(ls, LabelMap) else np.asarray(ls)
    in_c = np.bincount(lc.reshape(-1), minlength=n) > 0
    in_s = np.bincount(ls.reshape(-1), minlength=n) > 0
    missing = [i for i in range(n) if not (in_c[i] and in_s[i])]
    if missing:
        sides = ", ".join(f"{i} ({'content' if not in_c[i] else 'style'})" for i in missing)
        raise SemanticError(f"semantic category missing on one side: {sides}")


def _bin_index(src: int, dst: int) -> np.ndarray:
    # source index -> target cell; cell i covers [ceil(i*src/dst), ceil((i+1)*src/dst))
    return (np.arange(src) * dst) // src


def downsample_labels(l: LabelMap, target_h: int, target_w: int) -> LabelMap:
    """Majority-vote pooling; ties go to the smaller label."""
    if target_h < 1 or target_w < 1:
        raise DataError(f"target dimensions must be positive, got {target_h}x{target_w}")
    if target_h > l.height or target_w > l.width:
        raise DataError(f"cannot upsample labels {l.height}x{l.width} -> {target_h}x{target_w}")
    if (target_h, target_w) == l.shape:
        return l
    rows = _bin_index(l.height, target_h)
    cols = _bin_index(l.width, target_w)
    counts = np.zeros((target_h, target_w, l.num_labels), dtype=np.int64)
    np.add.at(counts, (rows[:, None], cols[None, :], l.labels), 1)
    return LabelMap(np.argmax(counts, axis=2), l.num_labels)


def masks_from_labels(l: LabelMap) -> list[np.ndarray]:
    return [(l.labels == i).astype(np.uint8) for i in range(l.num_labels)]


def semantic_embedding(l: LabelMap, channels: int) -> FeatureMap:
    """One-hot label features, constant inside every region."""
    if channels < l.num_labels:
        raise DataError(f"embedding needs at least {l.num_labels} channels, got {channels}")
    data = np.zeros((channels, l.height, l.width))
    for i in range(l.num_labels):
        data[i] = l.labels == i
    return FeatureMap(data)


def aligned_at(lc: LabelMap, ls: LabelMap, content_hw, style_hw) -> tuple[LabelMap, LabelMap]:
    """Downsample an aligned pair to feature resolution and re-validate it."""
    dc = downsample_labels(lc, *content_hw)
    ds = downsample_labels(ls, *style_hw)
    check_aligned(dc, ds, lc.num_labels)
    return dc, ds


# ---- I/O ----

def save_label_map(path, l: LabelMap) -> None:
    header = LABEL_MAGIC + struct.pack("<3I", l.height, l.width, l.num_labels)
    Path(path).write_bytes(header + l.labels.astype("<u2").tobytes())


def load_label_map(path) -> LabelMap:
    raw = Path(path).read_bytes()
    start = len(LABEL_MAGIC) + 12
    if len(raw) < start or raw[: len(LABEL_MAGIC)] != LABEL_MAGIC:
        raise DataError(f"{path}: not an SCSAL1 label file")
    h, w, n = struct.unpack("<3I", raw[len(LABEL_MAGIC):start])
    if len(raw) - start != h * w * 2:
        raise DataError(f"{path}: payload is {len(raw) - start} bytes, header implies {h * w * 2}")
    labels = np.frombuffer(raw, dtype="<u2", offset=start).reshape(h, w)
    return LabelMap(labels.astype(np.int64), n)


def label_preview(l: LabelMap, palette: Palette) -> Image.Image:
    """Palette-indexed PNG image of a label map."""
    if l.num_labels > 256:
        raise DataError("preview PNGs support at most 256 labels")
    img = Image.frombytes("P", (l.width, l.height), l.labels.astype(np.uint8).tobytes())
    flat = palette.colors_uint8().reshape(-1).tolist()
    img.putpalette(flat + [0] * (768 - len(flat)))
    return img
