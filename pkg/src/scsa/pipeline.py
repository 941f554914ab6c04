"""End-to-end semantic style transfer on a toy patch codec.

Flow per transformation pass: encode -> labels at feature resolution -> S-AdaIN
-> SCA / SSA -> preset-specific fusion. Features are never clamped; clamping only
happens when an image is written.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import attention as attn
from .errors import DataError, ShapeMismatchError, stage
from .normalize import DEFAULT_EPS, adain, s_adain
from .semantics import LabelMap, Palette, aligned_at, quantize_semantic_maps, semantic_embedding
from .tensors import FeatureMap

log = logging.getLogger(__name__)

PRESETS: dict[str, dict[str, float]] = {
    "cnn": {"alpha1": 0.7, "alpha2": 0.3},
    "transformer": {"alpha1": 1.2, "alpha2": 0.5, "b": 0.7},
    "diffusion": {"alpha1": 0.8, "alpha2": 0.2, "t1": 0.3, "t2": 0.5},
}
TUNABLE = ("alpha1", "alpha2", "b", "t1", "t2")


@dataclass(frozen=True)
class ScsaConfig:
    preset: str = "cnn"
    alpha1: float | None = None
    alpha2: float | None = None
    b: float | None = None
    t1: float | None = None
    t2: float | None = None
    clusters: int = 2
    eps: float = DEFAULT_EPS
    seed: int = 0
    passes: int = 1

    def __post_init__(self):
        if self.preset not in (*PRESETS, "custom"):
            raise DataError(f"unknown preset {self.preset!r}")
        fixed = PRESETS.get(self.preset, {})
        for name in TUNABLE:
            value = getattr(self, name)
            if name in fixed:
                if value is None:
                    object.__setattr__(self, name, fixed[name])
                elif value != fixed[name]:
                    raise DataError(f"preset {self.preset} fixes {name}={fixed[name]}, got {value}")
            elif self.preset != "custom" and value is not None:
                raise DataError(f"preset {self.preset} does not use {name}")
        if self.alpha1 is None:
            object.__setattr__(self, "alpha1", 0.0)
        if self.alpha2 is None:
            object.__setattr__(self, "alpha2", 0.0)
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise DataError("alpha1 and alpha2 must be >= 0")
        for name in ("b", "t1", "t2"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise DataError(f"{name} must lie in [0, 1], got {v}")
        if self.clusters < 1:
            raise DataError("clusters must be >= 1")
        if not self.eps > 0:
            raise DataError("eps must be positive")
        if self.passes < 1:
            raise DataError("passes must be >= 1")

    @property
    def uses_content_blend(self) -> bool:
        return self.b is not None

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


# ---- codec ----

@dataclass(frozen=True, eq=False)
class ToyCodec:
    """Non-overlapping patch embedding with orthonormal columns.

    `embed` is (3*p*p, channels); decoding multiplies by its transpose, which is the
    exact inverse whenever the columns are orthonormal.
    """

    patch_size: int
    embed: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.embed, dtype=np.float64)
        k = 3 * self.patch_size ** 2
        if self.patch_size < 1 or e.ndim != 2 or e.shape[0] != k:
            raise DataError(f"embed must have shape ({k}, channels), got {e.shape}")
        object.__setattr__(self, "embed", e)

    @property
    def channels(self) -> int:
        return self.embed.shape[1]

    @classmethod
    def orthonormal(cls, patch_size: int = 2, channels: int | None = None, seed: int = 0) -> "ToyCodec":
        k = 3 * patch_size ** 2
        channels = channels or k
        if channels < k:
            raise DataError(f"an invertible codec needs >= {k} channels, got {channels}")
        rng = np.random.default_rng(seed)
        q, r = np.linalg.qr(rng.standard_normal((channels, k)))
        q = q * np.sign(np.diag(r))
        return cls(patch_size, q.T)  # (k, channels); rows orthonormal

    @classmethod
    def identity(cls, patch_size: int = 1) -> "ToyCodec":
        return cls(patch_size, np.eye(3 * patch_size ** 2))


def encode(img, codec: ToyCodec) -> FeatureMap:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DataError(f"expected an (H, W, 3) image, got shape {img.shape}")
    p = codec.patch_size
    h, w, _ = img.shape
    if h % p or w % p:
        raise DataError(f"image {h}x{w} is not divisible by patch size {p}; pad or crop it first")
    hp, wp = h // p, w // p
    # (hp, p, wp, p, 3) -> (hp, wp, 3, p, p) -> one row per patch
    patches = img.reshape(hp, p, wp, p, 3).transpose(0, 2, 4, 1, 3).reshape(hp * wp, -1)
    return FeatureMap.from_cells(patches @ codec.embed, hp, wp)


def decode(f: FeatureMap, codec: ToyCodec) -> np.ndarray:
    """Inverse patch embedding -> float (H, W, 3) image, not clamped."""
    if f.channels != codec.channels:
        raise ShapeMismatchError("decode channels", f.shape, (codec.channels,))
    p = codec.patch_size
    patches = f.cells() @ codec.embed.T
    img = patches.reshape(f.height, f.width, 3, p, p).transpose(0, 3, 1, 4, 2)
    return img.reshape(f.height * p, f.width * p, 3)


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


# ---- fusion ----

def _same_dims(*maps: FeatureMap) -> None:
    for m in maps[1:]:
        if m.shape != maps[0].shape:
            raise ShapeMismatchError("fusion inputs", maps[0].shape, m.shape)


def fuse(f_sca: FeatureMap, f_ssa: FeatureMap, fc: FeatureMap, alpha1: float, alpha2: float) -> FeatureMap:
    _same_dims(f_sca, f_ssa, fc)
    return FeatureMap(alpha1 * f_sca.data + alpha2 * f_ssa.data + fc.data)


def fuse_with_content_blend(f_sca: FeatureMap, f_ssa: FeatureMap, fc_sadain: FeatureMap,
                            fc_raw: FeatureMap, alpha1: float, alpha2: float, b: float) -> FeatureMap:
    """Fusion with a b-weighted mix of normalized and raw content as the residual."""
    _same_dims(f_sca, f_ssa, fc_sadain, fc_raw)
    if b == 1.0:
        residual = fc_sadain.data
    elif b == 0.0:
        residual = fc_raw.data
    else:
        residual = b * fc_sadain.data + (1.0 - b) * fc_raw.data
    return FeatureMap(alpha1 * f_sca.data + alpha2 * f_ssa.data + residual)


def blend_features(t: float, a: FeatureMap, b: FeatureMap) -> FeatureMap:
    _same_dims(a, b)
    if t == 1.0:
        return a
    if t == 0.0:
        return b
    return FeatureMap(t * a.data + (1.0 - t) * b.data)


# ---- full transform ----

@dataclass(frozen=True)
class Quadruple:
    content: np.ndarray
    content_sem: np.ndarray
    style: np.ndarray
    style_sem: np.ndarray

    def __post_init__(self):
        for side, img, sem in (("content", self.content, self.content_sem),
                               ("style", self.style, self.style_sem)):
            if np.shape(img)[:2] != np.shape(sem)[:2]:
                raise ShapeMismatchError(f"{side} image vs semantic map", np.shape(img), np.shape(sem))


@dataclass(frozen=True)
class Prepared:
    """Encoded features and feature-resolution labels for one quadruple."""

    fc: FeatureMap
    fs: FeatureMap
    lc: LabelMap
    ls: LabelMap
    fcsem: FeatureMap
    fssem: FeatureMap
    palette: Palette


@dataclass
class TransformResult:
    output: FeatureMap
    fc_sadain: FeatureMap
    f_sca: FeatureMap
    f_ssa: FeatureMap
    history: list[FeatureMap] = field(default_factory=list)


def prepare(quad: Quadruple, cfg: ScsaConfig, codec: ToyCodec) -> Prepared:
    with stage("encode"):
        fc = encode(quad.content, codec)
        fs = encode(quad.style, codec)
    with stage("segment"):
        lc_full, ls_full, palette = quantize_semantic_maps(quad.content_sem, quad.style_sem,
                                                           cfg.clusters, cfg.seed)
        lc, ls = aligned_at(lc_full, ls_full, fc.spatial, fs.spatial)
        fcsem = semantic_embedding(lc, codec.channels)
        fssem = semantic_embedding(ls, codec.channels)
    return Prepared(fc, fs, lc, ls, fcsem, fssem, palette)


def default_projections(codec: ToyCodec, seed: int = 0) -> attn.ProjectionSet:
    return attn.ProjectionSet.random(codec.channels, seed=seed + 1)


def _one_pass(prep: Prepared, fc_raw: FeatureMap, cfg: ScsaConfig, p: attn.ProjectionSet,
              first: bool, masked: bool) -> TransformResult:
    lc, ls = (prep.lc, prep.ls) if masked else (None, None)
    diffusion_like = cfg.preset == "diffusion"

    with stage("s-adain"):
        if diffusion_like and not first:
            fc_ad = fc_raw
        elif masked:
            fc_ad = s_adain(fc_raw, prep.fs, prep.lc, prep.ls, cfg.eps)
        else:
            fc_ad = adain(fc_raw, prep.fs, cfg.eps)

    with stage("sca"):
        if cfg.t1 is not None:
            norm = attn.normalize_features
            q1 = blend_features(cfg.t1, norm(prep.fcsem), norm(fc_ad))
            k1 = blend_features(cfg.t1, norm(prep.fssem), norm(prep.fs))
            f_sca = attn.sca(q1, k1, prep.fs, lc, ls, p, prenormalized=True)
        else:
            f_sca = attn.sca(prep.fcsem, prep.fssem, prep.fs, lc, ls, p)

    with stage("ssa"):
        if cfg.t2 is not None:
            q2 = blend_features(cfg.t2, attn.normalize_features(fc_ad), attn.normalize_features(fc_raw))
            f_ssa = attn.ssa(q2, prep.fs, lc, ls, p, prenormalized=True)
        else:
            f_ssa = attn.ssa(fc_ad, prep.fs, lc, ls, p)

    with stage("fuse"):
        if cfg.b is not None:
            b = cfg.b if first else 0.0
            out = fuse_with_content_blend(f_sca, f_ssa, fc_ad, fc_raw, cfg.alpha1, cfg.alpha2, b)
        else:
            out = fuse(f_sca, f_ssa, fc_ad, cfg.alpha1, cfg.alpha2)
    return TransformResult(out, fc_ad, f_sca, f_ssa)


def transform_features(prep: Prepared, cfg: ScsaConfig, p: attn.ProjectionSet,
                       masked: bool = True) -> TransformResult:
    """Run `cfg.passes` transformation passes, feeding each output back as content.

    `masked=False` runs the same arithmetic with the semantic masks removed
    (full key set, whole-map AdaIN).
    """
    if p.d_in != prep.fc.channels or p.d_out != prep.fc.channels:
        raise ShapeMismatchError("projection set vs feature channels", (p.d_in, p.d_out), prep.fc.shape)
    current = prep.fc
    history = []
    result = None
    for i in range(cfg.passes):
        result = _one_pass(prep, current, cfg, p, first=(i == 0), masked=masked)
        current = result.output
        history.append(current)
    result.history = history
    log.debug("transform done: %d pass(es), preset=%s", cfg.passes, cfg.preset)
    return result


def scsa_transform(quad: Quadruple, cfg: ScsaConfig, codec: ToyCodec,
                   p: attn.ProjectionSet | None = None) -> FeatureMap:
    prep = prepare(quad, cfg, codec)
    p = p or default_projections(codec, cfg.seed)
    return transform_features(prep, cfg, p).output


def stylize(quad: Quadruple, cfg: ScsaConfig, codec: ToyCodec,
            p: attn.ProjectionSet | None = None) -> np.ndarray:
    out = scsa_transform(quad, cfg, codec, p)
    with stage("decode"):
        return decode(out, codec)


def with_overrides(cfg: ScsaConfig, **kw) -> ScsaConfig:
    return replace(cfg, **kw)
