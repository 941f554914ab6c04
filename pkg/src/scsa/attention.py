"""Universal, semantic continuous (SCA) and semantic sparse (SSA) attention.

All kernels work on the cells view: queries are content cells, keys/values are
style cells, and attention matrices are (content cells) x (style cells).
No 1/sqrt(d) temperature is applied to the scores.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DataError, SemanticError, ShapeMismatchError
from .semantics import LabelMap
from .tensors import FeatureMap, matmul, row_softmax

NORM_EPS = 1e-12


class TiePolicy(enum.Enum):
    LOWEST_INDEX = "lowest-index"


@dataclass(frozen=True, eq=False)
class LinearMap:
    weight: np.ndarray  # (d_in, d_out)
    bias: np.ndarray | None = None

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float64)
        if w.ndim != 2 or not np.all(np.isfinite(w)):
            raise DataError("linear map weight must be a finite 2-D matrix")
        object.__setattr__(self, "weight", w)
        if self.bias is not None:
            b = np.asarray(self.bias, dtype=np.float64).reshape(-1)
            if b.shape != (w.shape[1],) or not np.all(np.isfinite(b)):
                raise DataError(f"bias must be a finite vector of length {w.shape[1]}")
            object.__setattr__(self, "bias", b)

    @property
    def d_in(self) -> int:
        return self.weight.shape[0]

    @property
    def d_out(self) -> int:
        return self.weight.shape[1]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        y = matmul(x, self.weight)
        return y if self.bias is None else y + self.bias


def _orthogonal(rng: np.random.Generator, d_in: int, d_out: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(d_in, d_out), min(d_in, d_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))  # unique QR -> deterministic orientation
    return gain * (q if d_in >= d_out else q.T)


@dataclass(frozen=True)
class ProjectionSet:
    f_q: LinearMap
    f_k: LinearMap
    f_v: LinearMap
    f_o: LinearMap

    def __post_init__(self):
        if self.f_q.d_out != self.f_k.d_out:
            raise DataError("query and key projections must share an output dimension")
        if self.f_o.d_in != self.f_v.d_out:
            raise DataError("output projection must consume the value dimension")

    @property
    def d_in(self) -> int:
        return self.f_q.d_in

    @property
    def d_out(self) -> int:
        return self.f_o.d_out

    @classmethod
    def identity(cls, channels: int) -> "ProjectionSet":
        eye = np.eye(channels)
        return cls(*(LinearMap(eye) for _ in range(4)))

    @classmethod
    def random(cls, channels: int, d_attn: int | None = None, seed: int = 0,
               value_gain: float | None = None) -> "ProjectionSet":
        """Seeded orthogonal projections, channels -> d_attn -> channels, no bias.

        Query/key maps are plain orthogonal. Value and output maps are scaled by
        `value_gain` (default 1/sqrt(channels), i.e. unit Frobenius norm for square
        maps) so the attention branch stays small next to the residual content.
        """
        d_attn = d_attn or channels
        gain = 1.0 / np.sqrt(channels) if value_gain is None else value_gain
        rng = np.random.default_rng(seed)
        maps = [
            LinearMap(_orthogonal(rng, channels, d_attn, 1.0)),
            LinearMap(_orthogonal(rng, channels, d_attn, 1.0)),
            LinearMap(_orthogonal(rng, channels, d_attn, gain)),
            LinearMap(_orthogonal(rng, d_attn, channels, gain)),
        ]
        return cls(*maps)


def _check_input(f: FeatureMap, p: ProjectionSet, what: str) -> None:
    if f.channels != p.d_in:
        raise ShapeMismatchError(f"{what} channels vs projection input", f.shape, (p.d_in,))


def normalize_cells(x: np.ndarray) -> np.ndarray:
    mean = x.mean(axis=0)
    std = np.sqrt(((x - mean) ** 2).mean(axis=0))
    centered = x - mean
    std = np.broadcast_to(std, x.shape)
    return np.divide(centered, std, out=np.zeros_like(x), where=std > NORM_EPS)


def normalize_features(f: FeatureMap) -> FeatureMap:
    """Per-channel zero mean / unit std over all cells; constant channels become 0."""
    return FeatureMap.from_cells(normalize_cells(f.cells()), f.height, f.width)


def _same_label(lc: LabelMap, ls: LabelMap, shape) -> np.ndarray:
    qc, ks = lc.flat(), ls.flat()
    if shape != (qc.size, ks.size):
        raise ShapeMismatchError("attention matrix vs label maps", shape, (qc.size, ks.size))
    same = qc[:, None] == ks[None, :]
    orphan = ~same.any(axis=1)
    if orphan.any():
        row = int(np.argmax(orphan))
        raise SemanticError(f"query cell {row} has label {qc[row]} but no style cell carries it")
    return same


def g1_mask(a: np.ndarray, lc: LabelMap, ls: LabelMap) -> np.ndarray:
    """Keep same-label scores, set cross-label scores to -inf."""
    a = np.asarray(a, dtype=np.float64)
    same = _same_label(lc, ls, a.shape)
    return np.where(same, a, -np.inf)


def masked_argmax(b: np.ndarray, lc: LabelMap | None, ls: LabelMap | None,
                  tie: TiePolicy = TiePolicy.LOWEST_INDEX) -> np.ndarray:
    """Per-row index of the best same-label key (the whole key set if labels are None)."""
    if tie is not TiePolicy.LOWEST_INDEX:
        raise DataError(f"unsupported tie policy {tie}")
    b = np.asarray(b, dtype=np.float64)
    if lc is None or ls is None:
        return np.argmax(b, axis=1)
    same = _same_label(lc, ls, b.shape)
    return np.argmax(np.where(same, b, -np.inf), axis=1)  # argmax returns the first maximum


def g2_mask(b: np.ndarray, lc: LabelMap | None, ls: LabelMap | None,
            tie: TiePolicy = TiePolicy.LOWEST_INDEX) -> np.ndarray:
    """Keep only the maximal same-label score per row; everything else becomes -inf."""
    b = np.asarray(b, dtype=np.float64)
    idx = masked_argmax(b, lc, ls, tie)
    rows = np.arange(b.shape[0])
    out = np.full_like(b, -np.inf)
    out[rows, idx] = b[rows, idx]
    return out


def _scores(q_in: np.ndarray, k_in: np.ndarray, p: ProjectionSet) -> np.ndarray:
    return matmul(p.f_q(q_in), p.f_k(k_in).T)


def _mix(w: np.ndarray, fs: FeatureMap, p: ProjectionSet) -> np.ndarray:
    """f_o(w @ f_v(V)), evaluated as w @ f_o(f_v(V)).

    Rows of w sum to one and f_o is affine, so the two orders agree; projecting the
    style values first makes one-hot rows exact copies of a projected style value.
    """
    return matmul(w, p.f_o(p.f_v(fs.cells())))


def _prepare(f: FeatureMap, prenormalized: bool) -> np.ndarray:
    return f.cells() if prenormalized else normalize_cells(f.cells())


# ---- universal attention ----

def ua_weights(fc: FeatureMap, fs: FeatureMap, p: ProjectionSet) -> np.ndarray:
    _check_input(fc, p, "content")
    _check_input(fs, p, "style")
    return row_softmax(_scores(normalize_cells(fc.cells()), normalize_cells(fs.cells()), p))


def universal_attention(fc: FeatureMap, fs: FeatureMap, p: ProjectionSet) -> FeatureMap:
    if p.d_out != fc.channels:
        raise ShapeMismatchError("output projection vs content channels", (p.d_out,), fc.shape)
    w = ua_weights(fc, fs, p)
    out = _mix(w, fs, p) + fc.cells()
    return FeatureMap.from_cells(out, fc.height, fc.width)


# ---- semantic continuous attention ----

def sca_weights(fcsem: FeatureMap, fssem: FeatureMap, lc: LabelMap | None, ls: LabelMap | None,
                p: ProjectionSet, prenormalized: bool = False) -> np.ndarray:
    """softmax(G1(Q1 K1^T)); with lc/ls None the mask is skipped."""
    _check_input(fcsem, p, "content semantic")
    _check_input(fssem, p, "style semantic")
    a = _scores(_prepare(fcsem, prenormalized), _prepare(fssem, prenormalized), p)
    if lc is not None and ls is not None:
        a = g1_mask(a, lc, ls)
    return row_softmax(a)


def sca(fcsem: FeatureMap, fssem: FeatureMap, fs: FeatureMap, lc: LabelMap | None,
        ls: LabelMap | None, p: ProjectionSet, prenormalized: bool = False) -> FeatureMap:
    """Every query attends to all style cells of its own region (no residual).

    With `prenormalized=True` the query/key inputs are used as given, which is how
    blended query inputs are fed in.
    """
    _check_input(fs, p, "style")
    if ls is not None and ls.shape != fs.spatial:
        raise ShapeMismatchError("style labels vs style features", ls.shape, fs.spatial)
    w = sca_weights(fcsem, fssem, lc, ls, p, prenormalized)
    out = _mix(w, fs, p)
    return FeatureMap.from_cells(out, fcsem.height, fcsem.width)


# ---- semantic sparse attention ----

def ssa_weights(fc: FeatureMap, fs: FeatureMap, lc: LabelMap | None, ls: LabelMap | None,
                p: ProjectionSet, tie: TiePolicy = TiePolicy.LOWEST_INDEX,
                prenormalized: bool = False) -> np.ndarray:
    """softmax(G2(Q2 K2^T)), one-hot per row."""
    _check_input(fc, p, "content")
    _check_input(fs, p, "style")
    q_in = fc.cells() if prenormalized else normalize_cells(fc.cells())
    b = _scores(q_in, normalize_cells(fs.cells()), p)
    return row_softmax(g2_mask(b, lc, ls, tie))


def ssa(fc: FeatureMap, fs: FeatureMap, lc: LabelMap | None, ls: LabelMap | None,
        p: ProjectionSet, tie: TiePolicy = TiePolicy.LOWEST_INDEX,
        prenormalized: bool = False) -> FeatureMap:
    """Every query copies the value of its most similar same-region style cell.

    `prenormalized` applies to the query input only; keys are always normalized here.
    """
    w = ssa_weights(fc, fs, lc, ls, p, tie, prenormalized)
    out = _mix(w, fs, p)
    return FeatureMap.from_cells(out, fc.height, fc.width)
