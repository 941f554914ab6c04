"""Semantic continuous-sparse attention for semantic style transfer."""
from .attention import (
    LinearMap,
    ProjectionSet,
    TiePolicy,
    g1_mask,
    g2_mask,
    normalize_features,
    sca,
    ssa,
    universal_attention,
)
from .errors import DataError, NumericError, ScsaError, SemanticError, ShapeMismatchError
from .metrics import SslReport, semantic_style_loss
from .normalize import s_adain
from .pipeline import (
    Quadruple,
    ScsaConfig,
    ToyCodec,
    blend_features,
    decode,
    encode,
    fuse,
    fuse_with_content_blend,
    scsa_transform,
    stylize,
)
from .semantics import LabelMap, Palette, downsample_labels, masks_from_labels, quantize_semantic_maps, semantic_embedding
from .tensors import FeatureMap, matmul, row_softmax, slice_stats

__version__ = "0.1.0"
