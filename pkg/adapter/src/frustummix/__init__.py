"""frustummix: array-first adapter over the fmx pipeline.

Exposes the mixing, pseudo-label fusion, softmax, mIoU, and container
codec entry points against plain numpy arrays, for use inside dataloader
code.  Results are identical (byte-for-byte through the codecs) to the
primary fmx pipeline; all fmx errors resurface as adapter exceptions
carrying the primary error name.
"""

__version__ = "0.1.0"

from ._api import (
    Mixed,
    Scene,
    decode,
    derive_seed,
    encode,
    fuse_pl,
    load_mapping,
    miou,
    mix,
    read,
    softmax,
    write,
)
from ._convert import from_arrays, to_arrays
from .errors import MIRRORS, AdapterTypeError, FrustumMixError

__all__ = [
    "__version__",
    "Scene",
    "Mixed",
    "mix",
    "softmax",
    "fuse_pl",
    "miou",
    "load_mapping",
    "encode",
    "decode",
    "read",
    "write",
    "derive_seed",
    "from_arrays",
    "to_arrays",
    "FrustumMixError",
    "AdapterTypeError",
    "MIRRORS",
]
