"""Core tensor-shaped domain types and their invariants.

Every type is an immutable dataclass over numpy arrays.  Constructors
either return a fully valid value or raise :class:`ValidationError`; a
partially valid instance is never observable.  ``validate`` re-checks any
instance and returns the list of violated invariants (empty means valid),
which is the same list a failing constructor would raise with.

Fields are frozen; array contents are adopted without copying when the
dtype and layout already match, so callers hand over ownership and must
not mutate arrays afterwards.  Values are then safe to share across
threads (nothing in the package mutates them).

All label-carrying types share the fixed ignore sentinel ``IGNORE_ID``
(0xFFFF); positions labelled with it receive no supervision anywhere in
the pipeline.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional

import numpy as np

from .errors import ValidationError

__all__ = [
    "IGNORE_ID",
    "PROB_SUM_TOL",
    "Provenance",
    "Image",
    "PointCloud",
    "LabelMap",
    "ProbabilityMap",
    "LogitMap",
    "CameraModel",
    "PointImage",
    "MixedSample",
    "validate",
]

IGNORE_ID = 0xFFFF
# Per-pixel probability sums may drift from 1 by float32 serialization.
PROB_SUM_TOL = 1e-4
_ROTATION_TOL = 1e-5


class Provenance(IntEnum):
    """Which domain a mixed pixel or point was taken from."""

    SOURCE = 0
    TARGET = 1


def _coerce(value, dtype, shape=None):
    """Best-effort conversion to a contiguous array; validators re-check."""
    try:
        arr = np.ascontiguousarray(value, dtype=dtype)
    except (TypeError, ValueError):
        return np.asarray(value)
    if shape is not None and arr.shape != shape:
        if arr.size == int(np.prod(shape)):
            arr = arr.reshape(shape)
    return arr


def _check_array(out, name, arr, dtype, shape):
    if not isinstance(arr, np.ndarray):
        out.append(f"{name} is not an array")
        return False
    if arr.dtype != np.dtype(dtype):
        out.append(f"{name} has dtype {arr.dtype}, expected {np.dtype(dtype)}")
        return False
    if arr.shape != shape:
        out.append(f"{name} has shape {arr.shape}, expected {shape}")
        return False
    return True


class _Value:
    """Shared machinery: field-wise equality and checked construction."""

    def __eq__(self, other):
        if not (isinstance(other, type(self)) or isinstance(self, type(other))):
            return NotImplemented
        for f in dataclasses.fields(self):
            if not _field_equal(getattr(self, f.name), getattr(other, f.name)):
                return False
        return True

    __hash__ = None

    def _violations(self) -> list[str]:
        raise NotImplementedError

    def _finish_init(self):
        violations = self._violations()
        if violations:
            raise ValidationError(violations)

    @classmethod
    def _unchecked(cls, **fields):
        """Build an instance without running invariant checks.

        Only for diagnostics and tests of ``validate``; everything else in
        the package goes through the checked constructors.
        """
        obj = object.__new__(cls)
        for name, value in fields.items():
            object.__setattr__(obj, name, value)
        return obj


def _field_equal(a, b) -> bool:
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        if not (isinstance(a, np.ndarray) and isinstance(b, np.ndarray)):
            return False
        # Bit-exact comparison (also distinguishes NaN payloads).
        return a.shape == b.shape and a.dtype == b.dtype and a.tobytes() == b.tobytes()
    if isinstance(a, tuple) and isinstance(b, tuple):
        return len(a) == len(b) and all(_field_equal(x, y) for x, y in zip(a, b))
    return a == b


@dataclass(frozen=True, eq=False)
class Image(_Value):
    """Camera frame as float32 in [0, 1], shaped (height, width, channels)."""

    height: int
    width: int
    channels: int
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self,
            "data",
            _coerce(self.data, np.float32, (self.height, self.width, self.channels)),
        )
        self._finish_init()

    @classmethod
    def from_array(cls, data) -> "Image":
        arr = np.asarray(data, dtype=np.float32)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ValidationError([f"image array must be 2-D or 3-D, got ndim {arr.ndim}"])
        h, w, c = arr.shape
        return cls(h, w, c, arr)

    def _violations(self):
        out = []
        if self.height < 1 or self.width < 1:
            out.append("frame dimensions must be at least 1x1")
        if not 1 <= self.channels <= 4:
            out.append(f"channels must be in 1..=4, got {self.channels}")
        if not _check_array(
            out, "data", self.data, np.float32,
            (self.height, self.width, self.channels),
        ):
            return out
        if not np.all(np.isfinite(self.data)):
            out.append("data contains non-finite values")
        elif self.data.size and (self.data.min() < 0.0 or self.data.max() > 1.0):
            out.append("data values must lie within [0, 1]")
        return out


@dataclass(frozen=True, eq=False)
class PointCloud(_Value):
    """3D points in meters with optional per-point class labels."""

    count: int
    xyz: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "xyz", _coerce(self.xyz, np.float32, (self.count, 3)))
        if self.labels is not None:
            object.__setattr__(
                self, "labels", _coerce(self.labels, np.uint16, (self.count,))
            )
        self._finish_init()

    @classmethod
    def from_arrays(cls, xyz, labels=None) -> "PointCloud":
        arr = np.asarray(xyz, dtype=np.float32).reshape(-1, 3)
        return cls(arr.shape[0], arr, labels)

    def _violations(self):
        out = []
        if self.count < 0:
            out.append("count must be nonnegative")
        if not _check_array(out, "xyz", self.xyz, np.float32, (self.count, 3)):
            return out
        if not np.all(np.isfinite(self.xyz)):
            out.append("xyz contains non-finite coordinates")
        if self.labels is not None:
            _check_array(out, "labels", self.labels, np.uint16, (self.count,))
        return out


@dataclass(frozen=True, eq=False)
class LabelMap(_Value):
    """Per-pixel class ids; IGNORE_ID marks unsupervised pixels."""

    height: int
    width: int
    data: np.ndarray
    ignore_id: int = IGNORE_ID

    def __post_init__(self):
        object.__setattr__(
            self, "data", _coerce(self.data, np.uint16, (self.height, self.width))
        )
        self._finish_init()

    @classmethod
    def from_array(cls, data) -> "LabelMap":
        arr = np.asarray(data, dtype=np.uint16)
        return cls(arr.shape[0], arr.shape[1], arr)

    def _violations(self):
        out = []
        if self.height < 1 or self.width < 1:
            out.append("frame dimensions must be at least 1x1")
        if self.ignore_id != IGNORE_ID:
            out.append(f"ignore_id is fixed at 0x{IGNORE_ID:04X}")
        _check_array(out, "data", self.data, np.uint16, (self.height, self.width))
        return out

    def check_classes(self, num_classes: int) -> list[str]:
        """Report ids that are neither ignore nor below ``num_classes``."""
        bad = (self.data != self.ignore_id) & (self.data >= num_classes)
        if bad.any():
            return [
                f"{int(bad.sum())} pixel(s) carry ids >= num_classes ({num_classes})"
            ]
        return []


class _GridDistribution(_Value):
    """Common shape handling for probability and logit maps."""

    def __post_init__(self):
        object.__setattr__(
            self,
            "data",
            _coerce(
                self.data, np.float32, (self.height, self.width, self.num_classes)
            ),
        )
        self._finish_init()

    @classmethod
    def from_array(cls, data):
        arr = np.asarray(data, dtype=np.float32)
        if arr.ndim != 3:
            raise ValidationError([f"array must be 3-D, got ndim {arr.ndim}"])
        return cls(arr.shape[0], arr.shape[1], arr.shape[2], arr)

    def _shape_violations(self):
        out = []
        if self.height < 1 or self.width < 1:
            out.append("frame dimensions must be at least 1x1")
        if self.num_classes < 1:
            out.append("num_classes must be at least 1")
        _check_array(
            out, "data", self.data, np.float32,
            (self.height, self.width, self.num_classes),
        )
        return out


@dataclass(frozen=True, eq=False)
class ProbabilityMap(_GridDistribution):
    """Per-pixel class distribution; every pixel sums to 1 within PROB_SUM_TOL."""

    height: int
    width: int
    num_classes: int
    data: np.ndarray

    def _violations(self):
        out = self._shape_violations()
        if out:
            return out
        if not np.all(np.isfinite(self.data)):
            out.append("data contains non-finite values")
            return out
        if self.data.size and self.data.min() < 0.0:
            out.append("probabilities must be nonnegative")
        sums = self.data.sum(axis=2, dtype=np.float64)
        if sums.size and (
            sums.min() < 1.0 - PROB_SUM_TOL or sums.max() > 1.0 + PROB_SUM_TOL
        ):
            out.append(
                f"per-pixel sum must lie within 1 +/- {PROB_SUM_TOL:g}"
            )
        return out


@dataclass(frozen=True, eq=False)
class LogitMap(_GridDistribution):
    """Unnormalized per-pixel class scores (softmax input)."""

    height: int
    width: int
    num_classes: int
    data: np.ndarray

    def _violations(self):
        out = self._shape_violations()
        if out:
            return out
        if not np.all(np.isfinite(self.data)):
            out.append("data contains non-finite values")
        return out


@dataclass(frozen=True, eq=False)
class CameraModel(_Value):
    """Pinhole intrinsics plus a 3x4 world-to-camera extrinsic."""

    fx: float
    fy: float
    cx: float
    cy: float
    extrinsic: np.ndarray

    def __post_init__(self):
        # Scalars pass through float32 so encode/decode is lossless.
        for name in ("fx", "fy", "cx", "cy"):
            object.__setattr__(self, name, float(np.float32(getattr(self, name))))
        object.__setattr__(
            self, "extrinsic", _coerce(self.extrinsic, np.float32, (3, 4))
        )
        self._finish_init()

    @classmethod
    def identity(cls, fx: float, fy: float, cx: float, cy: float) -> "CameraModel":
        ext = np.zeros((3, 4), dtype=np.float32)
        ext[:, :3] = np.eye(3, dtype=np.float32)
        return cls(fx, fy, cx, cy, ext)

    @property
    def rotation(self) -> np.ndarray:
        return self.extrinsic[:, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.extrinsic[:, 3]

    def _violations(self):
        out = []
        for name in ("fx", "fy", "cx", "cy"):
            if not np.isfinite(getattr(self, name)):
                out.append(f"{name} must be finite")
        if np.isfinite(self.fx) and self.fx <= 0.0:
            out.append("fx must be positive")
        if np.isfinite(self.fy) and self.fy <= 0.0:
            out.append("fy must be positive")
        if not _check_array(out, "extrinsic", self.extrinsic, np.float32, (3, 4)):
            return out
        if not np.all(np.isfinite(self.extrinsic)):
            out.append("extrinsic contains non-finite values")
            return out
        r = self.extrinsic[:, :3].astype(np.float64)
        if np.abs(r @ r.T - np.eye(3)).max() > _ROTATION_TOL:
            out.append(
                f"rotation part must be orthonormal within {_ROTATION_TOL:g}"
            )
        return out


@dataclass(frozen=True, eq=False)
class PointImage(_Value):
    """Projection of a point cloud onto a camera frame.

    Arrays are index-aligned with the source cloud.  Invalid points (behind
    the camera or outside the frame) keep canonical placeholder entries
    ``uv = (-1, -1), depth = 0``; read per-point coordinates through
    ``uv_of``/``depth_of``, which reject invalid indices.
    """

    count: int
    pixel_uv: np.ndarray
    depth: np.ndarray
    valid: np.ndarray
    frame_height: int
    frame_width: int

    def __post_init__(self):
        uv = _coerce(self.pixel_uv, np.int32, (self.count, 2))
        depth = _coerce(self.depth, np.float32, (self.count,))
        valid = _coerce(self.valid, np.bool_, (self.count,))
        # Canonicalize undefined entries so equal values are byte-equal.
        if (
            isinstance(valid, np.ndarray)
            and valid.dtype == np.bool_
            and valid.shape == (self.count,)
            and uv.shape == (self.count, 2)
            and depth.shape == (self.count,)
        ):
            uv = uv.copy()
            depth = depth.copy()
            uv[~valid] = -1
            depth[~valid] = 0.0
        object.__setattr__(self, "pixel_uv", uv)
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "valid", valid)
        self._finish_init()

    def uv_of(self, index: int) -> tuple[int, int]:
        if not self.valid[index]:
            raise ValidationError([f"point {index} is not valid; uv is undefined"])
        return int(self.pixel_uv[index, 0]), int(self.pixel_uv[index, 1])

    def depth_of(self, index: int) -> float:
        if not self.valid[index]:
            raise ValidationError([f"point {index} is not valid; depth is undefined"])
        return float(self.depth[index])

    def _violations(self):
        out = []
        if self.frame_height < 1 or self.frame_width < 1:
            out.append("frame dimensions must be at least 1x1")
        ok = _check_array(out, "pixel_uv", self.pixel_uv, np.int32, (self.count, 2))
        ok &= _check_array(out, "depth", self.depth, np.float32, (self.count,))
        ok &= _check_array(out, "valid", self.valid, np.bool_, (self.count,))
        if not ok:
            return out
        u = self.pixel_uv[self.valid, 0]
        v = self.pixel_uv[self.valid, 1]
        if u.size and (
            u.min() < 0 or u.max() >= self.frame_width
            or v.min() < 0 or v.max() >= self.frame_height
        ):
            out.append("valid point lies outside the frame bounds")
        d = self.depth[self.valid]
        if d.size and (not np.all(np.isfinite(d)) or d.min() <= 0.0):
            out.append("valid point must have positive finite depth")
        return out


@dataclass(frozen=True, eq=False)
class MixedSample(_Value):
    """One direction of a cross-domain mix: frame, points, labels, indices.

    ``pixel_provenance``/``point_provenance`` tag each pixel and point with
    the domain it was taken from (Provenance.SOURCE or .TARGET).
    """

    image: Image
    points: PointCloud
    labels_2d: LabelMap
    labels_3d: np.ndarray
    indices: PointImage
    pixel_provenance: np.ndarray
    point_provenance: np.ndarray

    def __post_init__(self):
        n = self.points.count if isinstance(self.points, PointCloud) else 0
        object.__setattr__(
            self, "labels_3d", _coerce(self.labels_3d, np.uint16, (n,))
        )
        object.__setattr__(
            self,
            "pixel_provenance",
            _coerce(
                self.pixel_provenance, np.uint8,
                (self.image.height, self.image.width)
                if isinstance(self.image, Image) else None,
            ),
        )
        object.__setattr__(
            self, "point_provenance", _coerce(self.point_provenance, np.uint8, (n,))
        )
        self._finish_init()

    def _violations(self):
        out = []
        for name, typ in (
            ("image", Image), ("points", PointCloud),
            ("labels_2d", LabelMap), ("indices", PointImage),
        ):
            if not isinstance(getattr(self, name), typ):
                out.append(f"{name} must be a {typ.__name__}")
        if out:
            return out
        h, w = self.image.height, self.image.width
        n = self.points.count
        if (self.labels_2d.height, self.labels_2d.width) != (h, w):
            out.append("labels_2d frame does not match image frame")
        if (self.indices.frame_height, self.indices.frame_width) != (h, w):
            out.append("indices frame does not match image frame")
        if self.indices.count != n:
            out.append("indices count does not match point count")
        _check_array(out, "labels_3d", self.labels_3d, np.uint16, (n,))
        if _check_array(
            out, "pixel_provenance", self.pixel_provenance, np.uint8, (h, w)
        ):
            if self.pixel_provenance.size and self.pixel_provenance.max() > 1:
                out.append("pixel_provenance values must be SOURCE (0) or TARGET (1)")
        if _check_array(
            out, "point_provenance", self.point_provenance, np.uint8, (n,)
        ):
            if self.point_provenance.size and self.point_provenance.max() > 1:
                out.append("point_provenance values must be SOURCE (0) or TARGET (1)")
        return out


def validate(value, *, num_classes: Optional[int] = None) -> list[str]:
    """Return the list of invariant violations for any core-type value.

    An empty list means the value is valid; construction from the same raw
    fields succeeds exactly in that case.  For a :class:`LabelMap`, passing
    ``num_classes`` additionally checks non-ignore ids against the active
    class count.
    """
    if not isinstance(value, _Value):
        raise TypeError(f"validate() does not know type {type(value).__name__}")
    out = value._violations()
    if num_classes is not None and isinstance(value, LabelMap) and not out:
        out = value.check_classes(num_classes)
    return out
