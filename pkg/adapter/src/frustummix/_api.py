"""Numpy-facing mirrors of the mixing, fusion, metric, and codec entry points.

All functions are pure: equal inputs give equal outputs and no state is
kept between calls.  Heavy lifting happens inside numpy kernels, which
release the GIL, so dataloader workers can overlap these calls.
"""

from __future__ import annotations

import os
from typing import NamedTuple, Optional, Union

import numpy as np

import fmx
from fmx import label_fusion as _fusion

from ._convert import (
    camera_from_arrays,
    cloud_from_arrays,
    image_from_array,
    labels_from_array,
    mask_pack_from_arrays,
    probs_from_array,
    require_array,
    to_arrays,
)
from .errors import AdapterTypeError, mirrored

__all__ = [
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
]

derive_seed = fmx.derive_seed


class Scene(NamedTuple):
    """One domain's sample as plain arrays.

    ``labels`` are ground truth for a source scene and (fused)
    pseudo-labels for a target scene.  ``mask_ids`` is the packed ID
    matrix (0 = background).  ``point_labels`` overrides the projection
    of ``labels`` onto the cloud when present.
    """

    image: np.ndarray  # (H, W, C) float32 in [0, 1]
    points: np.ndarray  # (N, 3) float32
    labels: np.ndarray  # (H, W) uint16
    fx: float
    fy: float
    cx: float
    cy: float
    extrinsic: np.ndarray  # (3, 4) float32
    mask_ids: np.ndarray  # (H, W) uint32
    mask_classes: Optional[np.ndarray] = None  # (num_masks,) uint16
    point_labels: Optional[np.ndarray] = None  # (N,) uint16


class Mixed(NamedTuple):
    """One mixing direction flattened to arrays (see fmx.MixedSample)."""

    image: np.ndarray
    points: np.ndarray
    labels_2d: np.ndarray
    labels_3d: np.ndarray
    indices_uv: np.ndarray
    indices_depth: np.ndarray
    indices_valid: np.ndarray
    pixel_provenance: np.ndarray
    point_provenance: np.ndarray


def _scene_to_sample(scene: Scene) -> tuple:
    sample = fmx.Sample(
        image=image_from_array(scene.image),
        points=cloud_from_arrays(scene.points, scene.point_labels),
        labels_2d=labels_from_array(scene.labels),
        camera=camera_from_arrays(
            scene.fx, scene.fy, scene.cx, scene.cy, scene.extrinsic
        ),
    )
    return sample, mask_pack_from_arrays(scene.mask_ids, scene.mask_classes)


def _mixed_to_arrays(mixed) -> Mixed:
    return Mixed(**to_arrays(mixed))


def mix(
    source: Scene, target: Scene, proportion: float = 3 / 5, seed: int = 0
) -> tuple[Mixed, Mixed]:
    """Bidirectional frustum mix; returns (source-to-target, target-to-source).

    Identical to the primary pipeline: the two directions draw their mask
    subsets from ``derive_seed(seed, 0)`` and ``derive_seed(seed, 1)``.
    """
    src_sample, src_masks = _scene_to_sample(source)
    trg_sample, trg_masks = _scene_to_sample(target)
    with mirrored():
        s2t, t2s = fmx.frustum_mix(
            src_sample, trg_sample, src_masks, trg_masks, proportion, seed
        )
    return _mixed_to_arrays(s2t), _mixed_to_arrays(t2s)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Stabilized softmax over the trailing class axis of a float32 array."""
    require_array("logits", logits, np.float32)
    if logits.ndim < 1 or logits.shape[-1] < 1:
        raise AdapterTypeError("logits need a trailing class axis")
    grid = logits.reshape(1, -1, logits.shape[-1])
    with mirrored():
        lm = fmx.LogitMap(1, grid.shape[1], grid.shape[2], grid)
        out = _fusion.softmax(lm)
    return out.data.reshape(logits.shape)


def load_mapping(path) -> fmx.ClassMapping:
    """Parse a class-mapping TSV (see docs/formats.md of the primary)."""
    with mirrored():
        return fmx.load_class_mapping(path)


def fuse_pl(
    net_probs: np.ndarray,
    vfm_probs: np.ndarray,
    mapping: Union[fmx.ClassMapping, str, os.PathLike, None] = None,
    unmapped_mass: Optional[np.ndarray] = None,
    tau: float = _fusion.DEFAULT_UNMAPPED_TAU,
) -> np.ndarray:
    """Refined pseudo-labels as a (H, W) uint16 array.

    With ``mapping`` given, ``vfm_probs`` lives in the VFM class space and
    is remapped first (its unmapped mass drives the ignore decision);
    otherwise both inputs must already share the semantic class space.
    """
    net = probs_from_array(require_array("net_probs", net_probs, np.float32, ndim=3))
    require_array("vfm_probs", vfm_probs, np.float32, ndim=3)
    with mirrored():
        if mapping is not None:
            if not isinstance(mapping, fmx.ClassMapping):
                mapping = fmx.load_class_mapping(mapping)
            vfm = fmx.remap_vfm_probs(probs_from_array(vfm_probs), mapping)
        else:
            vfm = vfm_probs
        labels = fmx.fuse_pl(net, vfm, unmapped_mass, tau=tau)
    return labels.data


def miou(pred: np.ndarray, gt: np.ndarray, num_classes: int) -> tuple[np.ndarray, float]:
    """Per-class IoU (NaN where unscored) and the mean over scored classes."""
    require_array("pred", pred, np.uint16)
    require_array("gt", gt, np.uint16)
    with mirrored():
        return fmx.miou(pred, gt, num_classes)


def encode(value) -> bytes:
    """Serialize a core value (see ``from_arrays``/``to_arrays``)."""
    with mirrored():
        return fmx.encode(value)


def decode(blob: bytes):
    """Decode one .fmx container to its core value."""
    with mirrored():
        return fmx.decode(blob)


def read(path):
    with mirrored():
        return fmx.read_file(path)


def write(path, value) -> None:
    with mirrored():
        fmx.write_file(path, value)
