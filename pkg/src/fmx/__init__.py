"""fmx: data-side machinery for VFM-guided cross-modal domain adaptation.

Mask-pack preprocessing, frustum-style cross-domain mixing of images and
point clouds, pseudo-label fusion, and loss/metric evaluation, all over
deterministic little-endian .fmx containers.
"""

__version__ = "0.1.0"

from .core import (
    IGNORE_ID,
    CameraModel,
    Image,
    LabelMap,
    LogitMap,
    MixedSample,
    PointCloud,
    PointImage,
    ProbabilityMap,
    Provenance,
    validate,
)
from .errors import (
    BadMagicError,
    ChecksumError,
    DecodeError,
    DimensionMismatchError,
    EmptyInputError,
    EmptySupervisionError,
    FmxError,
    MappingError,
    ParameterRangeError,
    TruncatedStreamError,
    UnknownMaskIdError,
    ValidationError,
    VersionMismatchError,
)
from .formats import (
    MaskMeta,
    MaskPack,
    SemanticMaskPack,
    decode,
    encode,
    pack_masks,
    read_file,
    unpack_mask,
    write_file,
)
from .label_fusion import (
    ClassMapping,
    MappingEntry,
    RemappedProbs,
    fuse_pl,
    hard_pl,
    load_class_mapping,
    remap_vfm_probs,
    softmax,
)
from .mask_ops import MergedMask, remainder, sample_and_merge
from .metrics import (
    LedgerInputs,
    LossLambdas,
    LossLedger,
    assemble_ledger,
    cross_entropy,
    ensemble,
    kl_divergence,
    miou,
)
from .mixing import Sample, frustum_mix, mix_images, mix_labels, mix_points
from .projection import labels_to_points, project, unproject
from .rng import Xoshiro256StarStar, derive_seed

__all__ = [
    "__version__",
    "IGNORE_ID",
    "Image",
    "PointCloud",
    "LabelMap",
    "ProbabilityMap",
    "LogitMap",
    "CameraModel",
    "PointImage",
    "MixedSample",
    "Provenance",
    "validate",
    "MaskMeta",
    "MaskPack",
    "SemanticMaskPack",
    "pack_masks",
    "unpack_mask",
    "encode",
    "decode",
    "read_file",
    "write_file",
    "MergedMask",
    "sample_and_merge",
    "remainder",
    "project",
    "unproject",
    "labels_to_points",
    "Sample",
    "frustum_mix",
    "mix_images",
    "mix_labels",
    "mix_points",
    "ClassMapping",
    "MappingEntry",
    "RemappedProbs",
    "load_class_mapping",
    "softmax",
    "remap_vfm_probs",
    "fuse_pl",
    "hard_pl",
    "cross_entropy",
    "kl_divergence",
    "miou",
    "ensemble",
    "LossLambdas",
    "LossLedger",
    "LedgerInputs",
    "assemble_ledger",
    "Xoshiro256StarStar",
    "derive_seed",
    "FmxError",
    "ValidationError",
    "DimensionMismatchError",
    "EmptyInputError",
    "ParameterRangeError",
    "UnknownMaskIdError",
    "MappingError",
    "EmptySupervisionError",
    "DecodeError",
    "BadMagicError",
    "VersionMismatchError",
    "ChecksumError",
    "TruncatedStreamError",
]
