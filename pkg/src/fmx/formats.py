"""Bit-exact binary containers (.fmx) and the mask-pack ID matrix.

Every core type serializes to a little-endian stream laid out as::

    magic (4 ASCII bytes) | version (u8, 0x01) | shape header | payload | crc32(payload)

Layouts are documented field-by-field in docs/formats.md.  ``decode`` is
the exact inverse of ``encode``: for every valid value,
``decode(encode(x)) == x`` bit-exactly, on every platform.

The MaskPack stores a whole set of binary masks as one uint32 ID matrix
(0 = background, mask ids 1..=num_masks) so that thousands of per-image
masks cost one matrix instead of one layer each.  Overlaps are resolved by
painting masks in decreasing-area order, so fine-grained masks survive on
top of coarse ones.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .core import (
    CameraModel,
    Image,
    LabelMap,
    LogitMap,
    MixedSample,
    PointCloud,
    PointImage,
    ProbabilityMap,
    _check_array,
    _coerce,
    _Value,
)
from .errors import (
    BadMagicError,
    ChecksumError,
    DecodeError,
    DimensionMismatchError,
    EmptyInputError,
    TruncatedStreamError,
    UnknownMaskIdError,
    VersionMismatchError,
)

__all__ = [
    "FORMAT_VERSION",
    "MaskMeta",
    "MaskPack",
    "SemanticMaskPack",
    "pack_masks",
    "unpack_mask",
    "encode",
    "decode",
    "read_file",
    "write_file",
]

FORMAT_VERSION = 0x01
LABEL_FREE = 0xFFFF


class MaskMeta(NamedTuple):
    """Per-mask record: id, surviving pixel area, semantic class (or 0xFFFF)."""

    id: int
    area: int
    semantic_class: int


@dataclass(frozen=True, eq=False)
class MaskPack(_Value):
    """A set of binary masks encoded as a single per-pixel ID matrix."""

    height: int
    width: int
    num_masks: int
    id_matrix: np.ndarray
    mask_meta: tuple
    confidences: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(
            self,
            "id_matrix",
            _coerce(self.id_matrix, np.uint32, (self.height, self.width)),
        )
        object.__setattr__(
            self,
            "mask_meta",
            tuple(MaskMeta(int(i), int(a), int(s)) for i, a, s in self.mask_meta),
        )
        if self.confidences is not None:
            object.__setattr__(
                self,
                "confidences",
                _coerce(self.confidences, np.float32, (self.num_masks,)),
            )
        self._finish_init()

    def _violations(self):
        out = []
        if self.height < 1 or self.width < 1:
            out.append("frame dimensions must be at least 1x1")
        if self.num_masks < 0:
            out.append("num_masks must be nonnegative")
        if not _check_array(
            out, "id_matrix", self.id_matrix, np.uint32, (self.height, self.width)
        ):
            return out
        if len(self.mask_meta) != self.num_masks:
            out.append(
                f"mask_meta has {len(self.mask_meta)} entries, expected {self.num_masks}"
            )
            return out
        ids = [m.id for m in self.mask_meta]
        if ids != list(range(1, self.num_masks + 1)):
            out.append("mask ids must be contiguous 1..=num_masks in order")
            return out
        if self.id_matrix.size and int(self.id_matrix.max()) > self.num_masks:
            out.append("id_matrix contains ids missing from mask_meta")
            return out
        counts = np.bincount(
            self.id_matrix.ravel(), minlength=self.num_masks + 1
        )
        for m in self.mask_meta:
            if m.area != int(counts[m.id]):
                out.append(
                    f"mask {m.id} records area {m.area}, matrix has {int(counts[m.id])}"
                )
            if not 0 <= m.semantic_class <= 0xFFFF:
                out.append(f"mask {m.id} semantic_class out of u16 range")
        if self.confidences is not None:
            if _check_array(
                out, "confidences", self.confidences, np.float32, (self.num_masks,)
            ):
                if self.confidences.size and (
                    not np.all(np.isfinite(self.confidences))
                    or self.confidences.min() < 0.0
                    or self.confidences.max() > 1.0
                ):
                    out.append("confidences must lie within [0, 1]")
        return out


class SemanticMaskPack(MaskPack):
    """MaskPack whose every mask carries a semantic class.

    Class ids index the VFM side of the active class mapping; use
    ``validate_against(num_vfm_classes)`` to check them against it.
    """

    def _violations(self):
        out = super()._violations()
        if out:
            return out
        if any(m.semantic_class == LABEL_FREE for m in self.mask_meta):
            out.append("every mask of a SemanticMaskPack needs a semantic class")
        return out

    @classmethod
    def from_pack(cls, pack: MaskPack) -> "SemanticMaskPack":
        return cls(
            pack.height, pack.width, pack.num_masks,
            pack.id_matrix, pack.mask_meta, pack.confidences,
        )

    def validate_against(self, num_vfm_classes: int) -> list[str]:
        bad = [m.id for m in self.mask_meta if m.semantic_class >= num_vfm_classes]
        if bad:
            return [f"masks {bad} carry classes >= the mapping's {num_vfm_classes}"]
        return []


def pack_masks(
    masks: Sequence[np.ndarray],
    classes: Optional[Sequence[int]] = None,
    confidences: Optional[Sequence[float]] = None,
) -> MaskPack:
    """Merge binary masks into one ID matrix.

    Mask ``i`` of the input list gets id ``i + 1``.  Masks are painted in
    decreasing order of their original pixel area (ties keep input order),
    so smaller masks overwrite larger ones where they overlap; recorded
    areas are recounted from the final matrix.
    """
    if len(masks) == 0:
        raise EmptyInputError("pack_masks needs at least one mask")
    arrays = [np.asarray(m, dtype=bool) for m in masks]
    shape = arrays[0].shape
    if len(shape) != 2:
        raise DimensionMismatchError(f"masks must be 2-D, got shape {shape}")
    for i, arr in enumerate(arrays):
        if arr.shape != shape:
            raise DimensionMismatchError(
                f"mask {i} has shape {arr.shape}, expected {shape}"
            )
    if classes is not None and len(classes) != len(arrays):
        raise DimensionMismatchError(
            f"{len(classes)} classes for {len(arrays)} masks"
        )
    if confidences is not None and len(confidences) != len(arrays):
        raise DimensionMismatchError(
            f"{len(confidences)} confidences for {len(arrays)} masks"
        )

    original_areas = [int(arr.sum()) for arr in arrays]
    paint_order = sorted(range(len(arrays)), key=lambda i: (-original_areas[i], i))
    id_matrix = np.zeros(shape, dtype=np.uint32)
    for i in paint_order:
        id_matrix[arrays[i]] = i + 1

    counts = np.bincount(id_matrix.ravel(), minlength=len(arrays) + 1)
    meta = tuple(
        MaskMeta(
            i + 1,
            int(counts[i + 1]),
            int(classes[i]) if classes is not None else LABEL_FREE,
        )
        for i in range(len(arrays))
    )
    conf = None if confidences is None else np.asarray(confidences, dtype=np.float32)
    cls = MaskPack
    if classes is not None and all(m.semantic_class != LABEL_FREE for m in meta):
        cls = SemanticMaskPack
    return cls(shape[0], shape[1], len(arrays), id_matrix, meta, conf)


def unpack_mask(pack: MaskPack, mask_id: int) -> np.ndarray:
    """Recover mask ``mask_id`` restricted to the pixels it finally owns."""
    if not 1 <= mask_id <= pack.num_masks:
        raise UnknownMaskIdError(
            f"mask id {mask_id} not in 1..={pack.num_masks}"
        )
    return pack.id_matrix == np.uint32(mask_id)


# --- container encoding ----------------------------------------------------

_MAGIC_IMAGE = b"FMIM"
_MAGIC_POINTS = b"FPTS"
_MAGIC_LABELS = b"FLBL"
_MAGIC_PROBS = b"FPRB"
_MAGIC_CAMERA = b"FCAM"
_MAGIC_MASKPACK = b"FMKP"
_MAGIC_POINTIMAGE = b"FPIM"
_MAGIC_MIXED = b"FMXS"

_KNOWN_MAGICS = {
    _MAGIC_IMAGE, _MAGIC_POINTS, _MAGIC_LABELS, _MAGIC_PROBS,
    _MAGIC_CAMERA, _MAGIC_MASKPACK, _MAGIC_POINTIMAGE, _MAGIC_MIXED,
}


def _le(arr: np.ndarray, dtype: str) -> bytes:
    return np.ascontiguousarray(arr, dtype=np.dtype(dtype)).tobytes()


def _encode_image(x: Image):
    header = struct.pack("<IIB", x.height, x.width, x.channels)
    return _MAGIC_IMAGE, header, _le(x.data, "<f4")


def _encode_points(x: PointCloud):
    flags = 1 if x.labels is not None else 0
    header = struct.pack("<IB", x.count, flags)
    payload = _le(x.xyz, "<f4")
    if x.labels is not None:
        payload += _le(x.labels, "<u2")
    return _MAGIC_POINTS, header, payload


def _encode_labels(x: LabelMap):
    header = struct.pack("<IIH", x.height, x.width, x.ignore_id)
    return _MAGIC_LABELS, header, _le(x.data, "<u2")


def _encode_probs(x):
    kind = 0 if isinstance(x, ProbabilityMap) else 1
    header = struct.pack("<BIIH", kind, x.height, x.width, x.num_classes)
    return _MAGIC_PROBS, header, _le(x.data, "<f4")


def _encode_camera(x: CameraModel):
    payload = struct.pack(
        "<4f",
        np.float32(x.fx), np.float32(x.fy), np.float32(x.cx), np.float32(x.cy),
    )
    payload += _le(x.extrinsic, "<f4")
    return _MAGIC_CAMERA, b"", payload


def _encode_maskpack(x: MaskPack):
    flags = 1 if x.confidences is not None else 0
    header = struct.pack("<IIIB", x.height, x.width, x.num_masks, flags)
    payload = _le(x.id_matrix, "<u4")
    for m in x.mask_meta:
        payload += struct.pack("<IIH", m.id, m.area, m.semantic_class)
    if x.confidences is not None:
        payload += _le(x.confidences, "<f4")
    return _MAGIC_MASKPACK, header, payload


def _encode_pointimage(x: PointImage):
    header = struct.pack("<III", x.count, x.frame_height, x.frame_width)
    payload = _le(x.pixel_uv, "<i4") + _le(x.depth, "<f4") + _le(x.valid, "u1")
    return _MAGIC_POINTIMAGE, header, payload


def _encode_mixed(x: MixedSample):
    payload = (
        encode(x.image)
        + encode(x.points)
        + encode(x.labels_2d)
        + encode(x.indices)
        + _le(x.labels_3d, "<u2")
        + _le(x.pixel_provenance, "u1")
        + _le(x.point_provenance, "u1")
    )
    header = struct.pack("<Q", len(payload))
    return _MAGIC_MIXED, header, payload


_ENCODERS = [
    (SemanticMaskPack, _encode_maskpack),
    (MaskPack, _encode_maskpack),
    (Image, _encode_image),
    (PointCloud, _encode_points),
    (LabelMap, _encode_labels),
    (ProbabilityMap, _encode_probs),
    (LogitMap, _encode_probs),
    (CameraModel, _encode_camera),
    (PointImage, _encode_pointimage),
    (MixedSample, _encode_mixed),
]


def encode(value) -> bytes:
    """Serialize a core value or MaskPack to its .fmx byte stream."""
    for typ, fn in _ENCODERS:
        if type(value) is typ:
            magic, header, payload = fn(value)
            crc = zlib.crc32(payload) & 0xFFFFFFFF
            return magic + bytes([FORMAT_VERSION]) + header + payload + struct.pack("<I", crc)
    raise TypeError(f"encode() does not know type {type(value).__name__}")


# decoders: (header_format, payload_size_fn, build_fn)

def _need(data: bytes, offset: int, size: int, what: str) -> bytes:
    if offset + size > len(data):
        raise TruncatedStreamError(
            f"stream ends inside {what}: need {size} bytes at offset {offset}"
        )
    return data[offset : offset + size]


def _decode_from(data: bytes, offset: int):
    magic = _need(data, offset, 4, "magic")
    if magic not in _KNOWN_MAGICS:
        raise BadMagicError(f"unknown magic {magic!r}")
    offset += 4
    version = _need(data, offset, 1, "version")[0]
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"container version {version} unsupported (expected {FORMAT_VERSION})"
        )
    offset += 1

    if magic == _MAGIC_IMAGE:
        h, w, c = struct.unpack("<IIB", _need(data, offset, 9, "image header"))
        offset += 9
        payload_size = h * w * c * 4
    elif magic == _MAGIC_POINTS:
        n, flags = struct.unpack("<IB", _need(data, offset, 5, "point header"))
        offset += 5
        payload_size = n * 12 + (n * 2 if flags & 1 else 0)
    elif magic == _MAGIC_LABELS:
        h, w, ignore = struct.unpack("<IIH", _need(data, offset, 10, "label header"))
        offset += 10
        payload_size = h * w * 2
    elif magic == _MAGIC_PROBS:
        kind, h, w, c = struct.unpack("<BIIH", _need(data, offset, 11, "probability header"))
        offset += 11
        payload_size = h * w * c * 4
    elif magic == _MAGIC_CAMERA:
        payload_size = 16 * 4
    elif magic == _MAGIC_MASKPACK:
        h, w, k, flags = struct.unpack("<IIIB", _need(data, offset, 13, "mask-pack header"))
        offset += 13
        payload_size = h * w * 4 + k * 10 + (k * 4 if flags & 1 else 0)
    elif magic == _MAGIC_POINTIMAGE:
        n, fh, fw = struct.unpack("<III", _need(data, offset, 12, "point-image header"))
        offset += 12
        payload_size = n * 8 + n * 4 + n
    else:  # _MAGIC_MIXED
        (payload_size,) = struct.unpack("<Q", _need(data, offset, 8, "mixed header"))
        offset += 8

    payload = _need(data, offset, payload_size, "payload")
    offset += payload_size
    (stored_crc,) = struct.unpack("<I", _need(data, offset, 4, "checksum"))
    offset += 4
    actual_crc = zlib.crc32(payload) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise ChecksumError(
            f"payload CRC32 mismatch: stored 0x{stored_crc:08X}, computed 0x{actual_crc:08X}"
        )

    if magic == _MAGIC_IMAGE:
        arr = np.frombuffer(payload, dtype="<f4").reshape(h, w, c)
        return Image(h, w, c, arr), offset
    if magic == _MAGIC_POINTS:
        xyz = np.frombuffer(payload[: n * 12], dtype="<f4").reshape(n, 3)
        labels = (
            np.frombuffer(payload[n * 12 :], dtype="<u2") if flags & 1 else None
        )
        return PointCloud(n, xyz, labels), offset
    if magic == _MAGIC_LABELS:
        arr = np.frombuffer(payload, dtype="<u2").reshape(h, w)
        return LabelMap(h, w, arr, ignore), offset
    if magic == _MAGIC_PROBS:
        arr = np.frombuffer(payload, dtype="<f4").reshape(h, w, c)
        cls = ProbabilityMap if kind == 0 else LogitMap
        return cls(h, w, c, arr), offset
    if magic == _MAGIC_CAMERA:
        vals = np.frombuffer(payload, dtype="<f4")
        return (
            CameraModel(vals[0], vals[1], vals[2], vals[3], vals[4:].reshape(3, 4)),
            offset,
        )
    if magic == _MAGIC_MASKPACK:
        ids = np.frombuffer(payload[: h * w * 4], dtype="<u4").reshape(h, w)
        meta = []
        pos = h * w * 4
        for _ in range(k):
            mid, area, sem = struct.unpack("<IIH", payload[pos : pos + 10])
            meta.append(MaskMeta(mid, area, sem))
            pos += 10
        conf = np.frombuffer(payload[pos:], dtype="<f4") if flags & 1 else None
        return MaskPack(h, w, k, ids, tuple(meta), conf), offset
    if magic == _MAGIC_POINTIMAGE:
        uv = np.frombuffer(payload[: n * 8], dtype="<i4").reshape(n, 2)
        depth = np.frombuffer(payload[n * 8 : n * 12], dtype="<f4")
        valid = np.frombuffer(payload[n * 12 :], dtype="u1").astype(bool)
        return PointImage(n, uv, depth, valid, fh, fw), offset

    # _MAGIC_MIXED: the payload is a sequence of nested containers plus arrays.
    image, pos = _decode_from(payload, 0)
    points, pos = _decode_from(payload, pos)
    labels_2d, pos = _decode_from(payload, pos)
    indices, pos = _decode_from(payload, pos)
    n = points.count
    hw = image.height * image.width
    labels_3d = np.frombuffer(
        _need(payload, pos, n * 2, "mixed 3-D labels"), dtype="<u2"
    )
    pos += n * 2
    pixel_prov = np.frombuffer(
        _need(payload, pos, hw, "mixed pixel provenance"), dtype="u1"
    ).reshape(image.height, image.width)
    pos += hw
    point_prov = np.frombuffer(
        _need(payload, pos, n, "mixed point provenance"), dtype="u1"
    )
    pos += n
    if pos != len(payload):
        raise DecodeError(f"{len(payload) - pos} unexpected bytes in mixed payload")
    return (
        MixedSample(image, points, labels_2d, labels_3d, indices, pixel_prov, point_prov),
        offset,
    )


def decode(data: bytes):
    """Decode exactly one .fmx container from ``data``."""
    value, offset = _decode_from(bytes(data), 0)
    if offset != len(data):
        raise DecodeError(f"{len(data) - offset} trailing bytes after container")
    return value


def read_file(path):
    with open(path, "rb") as fh:
        return decode(fh.read())


def write_file(path, value) -> None:
    with open(path, "wb") as fh:
        fh.write(encode(value))
