"""Pinhole projection of point clouds onto camera frames.

``project`` maps every point through the world-to-camera extrinsic and
the pinhole intrinsics, quantizing to pixel centers with half-up
rounding.  Points behind the near plane (z <= Z_MIN) or outside the frame
are flagged invalid but never dropped, so all per-point arrays stay
index-aligned with the input cloud.

No occlusion or z-buffer filtering is applied: several points may share a
pixel, mirroring the projection artifacts inherent to LiDAR/camera data.
"""

from __future__ import annotations

import numpy as np

from .core import IGNORE_ID, CameraModel, LabelMap, PointCloud, PointImage
from .errors import DimensionMismatchError

__all__ = ["Z_MIN", "project", "unproject", "labels_to_points"]

# Near-plane cull in meters; avoids the division blow-up at z -> 0.
Z_MIN = 1e-3


def _to_camera_frame(points: PointCloud, camera: CameraModel) -> np.ndarray:
    xyz = points.xyz.astype(np.float64)
    ext = camera.extrinsic.astype(np.float64)
    # Written out elementwise (no BLAS) so results are bit-stable everywhere.
    cam = np.empty_like(xyz)
    for row in range(3):
        cam[:, row] = (
            xyz[:, 0] * ext[row, 0]
            + xyz[:, 1] * ext[row, 1]
            + xyz[:, 2] * ext[row, 2]
            + ext[row, 3]
        )
    return cam


def project(
    points: PointCloud,
    camera: CameraModel,
    frame_height: int,
    frame_width: int,
) -> PointImage:
    """Project a cloud onto a frame, producing an index-aligned PointImage."""
    cam = _to_camera_frame(points, camera)
    z = cam[:, 2]
    in_front = z > Z_MIN

    zf = np.where(in_front, z, 1.0)  # placeholder to keep the division finite
    # Half-up rounding to pixel centers; bounds are checked in float space so
    # out-of-range coordinates can never overflow the integer cast.
    u_r = np.floor(camera.fx * cam[:, 0] / zf + camera.cx + 0.5)
    v_r = np.floor(camera.fy * cam[:, 1] / zf + camera.cy + 0.5)
    valid = (
        in_front
        & (u_r >= 0) & (u_r < frame_width)
        & (v_r >= 0) & (v_r < frame_height)
    )
    uv = np.full((points.count, 2), -1, dtype=np.int32)
    uv[valid, 0] = u_r[valid].astype(np.int32)
    uv[valid, 1] = v_r[valid].astype(np.int32)
    depth = np.where(valid, z, 0.0).astype(np.float32)
    return PointImage(points.count, uv, depth, valid, frame_height, frame_width)


def unproject(
    pixel_uv: np.ndarray, depth: np.ndarray, camera: CameraModel
) -> tuple[np.ndarray, np.ndarray]:
    """Invert the pinhole model for (u, v, depth) triples.

    Returns (camera-frame xyz, world-frame xyz), both float64 with one row
    per input point.  Used by the reprojection-consistency checks.
    """
    uv = np.asarray(pixel_uv, dtype=np.float64).reshape(-1, 2)
    z = np.asarray(depth, dtype=np.float64).reshape(-1)
    if uv.shape[0] != z.shape[0]:
        raise DimensionMismatchError(
            f"{uv.shape[0]} pixel coordinates for {z.shape[0]} depths"
        )
    cam = np.empty((uv.shape[0], 3), dtype=np.float64)
    cam[:, 0] = (uv[:, 0] - camera.cx) * z / camera.fx
    cam[:, 1] = (uv[:, 1] - camera.cy) * z / camera.fy
    cam[:, 2] = z
    r = camera.extrinsic[:, :3].astype(np.float64)
    t = camera.extrinsic[:, 3].astype(np.float64)
    world = (cam - t) @ r  # (R^T (p - t))^T done row-wise
    return cam, world


def labels_to_points(point_image: PointImage, labels: LabelMap) -> np.ndarray:
    """Read each valid point's label off the map; invalid points get ignore."""
    if (labels.height, labels.width) != (
        point_image.frame_height,
        point_image.frame_width,
    ):
        raise DimensionMismatchError(
            f"label map is {labels.height}x{labels.width}, point image frame is "
            f"{point_image.frame_height}x{point_image.frame_width}"
        )
    out = np.full(point_image.count, IGNORE_ID, dtype=np.uint16)
    sel = point_image.valid
    out[sel] = labels.data[point_image.pixel_uv[sel, 1], point_image.pixel_uv[sel, 0]]
    return out
