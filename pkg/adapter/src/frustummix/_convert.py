"""Array <-> core-type conversion with strict dtype/shape checking.

Inputs must already carry the core types' dtypes and a C-contiguous
layout; nothing is cast silently (a dataloader handing over float64
images almost always indicates an upstream bug).  Conversions are
zero-copy views wherever the constructors allow it.
"""

from __future__ import annotations

import numpy as np

import fmx

from .errors import AdapterTypeError, mirrored

_KIND_BUILDERS = {}


def require_array(name: str, value, dtype, ndim=None) -> np.ndarray:
    if not isinstance(value, np.ndarray):
        raise AdapterTypeError(
            f"{name} must be a numpy array of dtype {np.dtype(dtype)}, "
            f"got {type(value).__name__}"
        )
    if value.dtype != np.dtype(dtype):
        raise AdapterTypeError(
            f"{name} has dtype {value.dtype}, expected {np.dtype(dtype)}"
        )
    if ndim is not None and value.ndim != ndim:
        raise AdapterTypeError(
            f"{name} has {value.ndim} dimensions, expected {ndim}"
        )
    if not value.flags.c_contiguous:
        raise AdapterTypeError(f"{name} must be C-contiguous (row-major)")
    return value


def _kind(name):
    def register(fn):
        _KIND_BUILDERS[name] = fn
        return fn

    return register


@_kind("image")
def image_from_array(data: np.ndarray) -> fmx.Image:
    require_array("image", data, np.float32, ndim=3)
    with mirrored():
        return fmx.Image(data.shape[0], data.shape[1], data.shape[2], data)


@_kind("labels")
def labels_from_array(data: np.ndarray) -> fmx.LabelMap:
    require_array("labels", data, np.uint16, ndim=2)
    with mirrored():
        return fmx.LabelMap(data.shape[0], data.shape[1], data)


@_kind("probs")
def probs_from_array(data: np.ndarray) -> fmx.ProbabilityMap:
    require_array("probs", data, np.float32, ndim=3)
    with mirrored():
        return fmx.ProbabilityMap(data.shape[0], data.shape[1], data.shape[2], data)


@_kind("logits")
def logits_from_array(data: np.ndarray) -> fmx.LogitMap:
    require_array("logits", data, np.float32, ndim=3)
    with mirrored():
        return fmx.LogitMap(data.shape[0], data.shape[1], data.shape[2], data)


@_kind("cloud")
def cloud_from_arrays(xyz: np.ndarray, labels=None) -> fmx.PointCloud:
    require_array("points", xyz, np.float32, ndim=2)
    if labels is not None:
        require_array("point labels", labels, np.uint16, ndim=1)
    with mirrored():
        return fmx.PointCloud(xyz.shape[0], xyz, labels)


@_kind("camera")
def camera_from_arrays(fx, fy, cx, cy, extrinsic: np.ndarray) -> fmx.CameraModel:
    require_array("extrinsic", extrinsic, np.float32, ndim=2)
    with mirrored():
        return fmx.CameraModel(float(fx), float(fy), float(cx), float(cy), extrinsic)


@_kind("mask_pack")
def mask_pack_from_arrays(
    id_matrix: np.ndarray, classes=None, confidences=None
) -> fmx.MaskPack:
    """Rebuild a MaskPack from an ID matrix; areas are recounted."""
    require_array("mask id matrix", id_matrix, np.uint32, ndim=2)
    if classes is not None:
        require_array("mask classes", classes, np.uint16, ndim=1)
    num_masks = int(id_matrix.max(initial=0))
    counts = np.bincount(id_matrix.ravel().astype(np.int64), minlength=num_masks + 1)
    if classes is not None and classes.shape[0] != num_masks:
        raise AdapterTypeError(
            f"{classes.shape[0]} mask classes for {num_masks} mask ids"
        )
    meta = tuple(
        (i + 1, int(counts[i + 1]), int(classes[i]) if classes is not None else 0xFFFF)
        for i in range(num_masks)
    )
    with mirrored():
        return fmx.MaskPack(
            id_matrix.shape[0], id_matrix.shape[1], num_masks,
            id_matrix, meta, confidences,
        )


@_kind("point_image")
def point_image_from_arrays(
    pixel_uv: np.ndarray, depth: np.ndarray, valid: np.ndarray,
    frame_height: int, frame_width: int,
) -> fmx.PointImage:
    require_array("pixel_uv", pixel_uv, np.int32, ndim=2)
    require_array("depth", depth, np.float32, ndim=1)
    require_array("valid", valid, np.bool_, ndim=1)
    with mirrored():
        return fmx.PointImage(
            pixel_uv.shape[0], pixel_uv, depth, valid, frame_height, frame_width
        )


@_kind("mixed_sample")
def mixed_sample_from_arrays(
    image, points, labels_2d, labels_3d, indices_uv, indices_depth,
    indices_valid, pixel_provenance, point_provenance,
) -> fmx.MixedSample:
    require_array("labels_3d", labels_3d, np.uint16, ndim=1)
    require_array("pixel_provenance", pixel_provenance, np.uint8, ndim=2)
    require_array("point_provenance", point_provenance, np.uint8, ndim=1)
    img = image_from_array(image)
    with mirrored():
        return fmx.MixedSample(
            img,
            cloud_from_arrays(points),
            labels_from_array(labels_2d),
            labels_3d,
            point_image_from_arrays(
                indices_uv, indices_depth, indices_valid, img.height, img.width
            ),
            pixel_provenance,
            point_provenance,
        )


def from_arrays(kind: str, *args, **kwargs):
    """Build the core value of ``kind`` from plain arrays."""
    try:
        builder = _KIND_BUILDERS[kind]
    except KeyError:
        raise AdapterTypeError(
            f"unknown kind {kind!r}; one of {sorted(_KIND_BUILDERS)}"
        ) from None
    return builder(*args, **kwargs)


def to_arrays(value) -> dict:
    """Flatten any core value into a dict of arrays/scalars."""
    if isinstance(value, fmx.Image):
        return {"image": value.data}
    if isinstance(value, fmx.PointCloud):
        out = {"points": value.xyz}
        if value.labels is not None:
            out["point_labels"] = value.labels
        return out
    if isinstance(value, fmx.LabelMap):
        return {"labels": value.data}
    if isinstance(value, (fmx.ProbabilityMap, fmx.LogitMap)):
        key = "probs" if isinstance(value, fmx.ProbabilityMap) else "logits"
        return {key: value.data}
    if isinstance(value, fmx.CameraModel):
        return {
            "fx": value.fx, "fy": value.fy, "cx": value.cx, "cy": value.cy,
            "extrinsic": value.extrinsic,
        }
    if isinstance(value, fmx.MaskPack):
        out = {
            "id_matrix": value.id_matrix,
            "classes": np.array(
                [m.semantic_class for m in value.mask_meta], dtype=np.uint16
            ),
            "areas": np.array([m.area for m in value.mask_meta], dtype=np.uint32),
        }
        if value.confidences is not None:
            out["confidences"] = value.confidences
        return out
    if isinstance(value, fmx.PointImage):
        return {
            "indices_uv": value.pixel_uv,
            "indices_depth": value.depth,
            "indices_valid": value.valid,
            "frame_height": value.frame_height,
            "frame_width": value.frame_width,
        }
    if isinstance(value, fmx.MixedSample):
        return {
            "image": value.image.data,
            "points": value.points.xyz,
            "labels_2d": value.labels_2d.data,
            "labels_3d": value.labels_3d,
            "indices_uv": value.indices.pixel_uv,
            "indices_depth": value.indices.depth,
            "indices_valid": value.indices.valid,
            "pixel_provenance": value.pixel_provenance,
            "point_provenance": value.point_provenance,
        }
    raise AdapterTypeError(f"to_arrays() does not know {type(value).__name__}")
