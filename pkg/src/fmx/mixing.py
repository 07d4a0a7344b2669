"""Bidirectional mask-guided mixing of image/point-cloud sample pairs.

One call produces both directions: the source-to-target mix pastes the
source's sampled mask pixels (and the points projecting into them) onto
the target sample, and vice versa.  Labels and per-point indices travel
with their pixels/points, so the mixed sample is fully self-consistent:
every pixel, point, and label carries a provenance tag naming the domain
it came from.

Point transfer rule: a donor point moves iff it projects validly into the
merged mask; a base point stays iff it is invalid (out of frustum) or
projects outside the mask.  Out-of-frustum points therefore always remain
with the base domain.  The mixed cloud lists kept base points first, then
kept donor points, each group in original order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    CameraModel,
    Image,
    LabelMap,
    MixedSample,
    PointCloud,
    PointImage,
    Provenance,
)
from .errors import DimensionMismatchError
from .formats import MaskPack
from .mask_ops import MergedMask, sample_and_merge
from .projection import labels_to_points, project
from .rng import derive_seed

__all__ = ["Sample", "mix_images", "mix_labels", "mix_points", "frustum_mix"]


@dataclass(frozen=True)
class Sample:
    """One domain's ingredients for a mixing call.

    ``labels_2d`` holds ground truth for the source domain and fused
    pseudo-labels for the target domain.  Per-point labels are taken from
    ``points.labels`` when present, otherwise read off ``labels_2d``
    through the projection.
    """

    image: Image
    points: PointCloud
    labels_2d: LabelMap
    camera: CameraModel

    def __post_init__(self):
        if (self.labels_2d.height, self.labels_2d.width) != (
            self.image.height,
            self.image.width,
        ):
            raise DimensionMismatchError(
                f"labels are {self.labels_2d.height}x{self.labels_2d.width}, "
                f"image is {self.image.height}x{self.image.width}"
            )


def _check_frames(mask: MergedMask, *frames) -> None:
    for h, w, what in frames:
        if (h, w) != (mask.height, mask.width):
            raise DimensionMismatchError(
                f"{what} is {h}x{w}, merged mask is {mask.height}x{mask.width}"
            )


def mix_images(mask: MergedMask, donor: Image, base: Image) -> Image:
    """Per-pixel select: donor where the mask is set, base elsewhere."""
    _check_frames(
        mask,
        (donor.height, donor.width, "donor image"),
        (base.height, base.width, "base image"),
    )
    if donor.channels != base.channels:
        raise DimensionMismatchError(
            f"donor has {donor.channels} channels, base has {base.channels}"
        )
    data = np.where(mask.data[:, :, None], donor.data, base.data)
    return Image(base.height, base.width, base.channels, data)


def mix_labels(mask: MergedMask, donor: LabelMap, base: LabelMap) -> LabelMap:
    """Per-pixel select on label maps; ignore ids pass through unchanged."""
    _check_frames(
        mask,
        (donor.height, donor.width, "donor labels"),
        (base.height, base.width, "base labels"),
    )
    data = np.where(mask.data, donor.data, base.data)
    return LabelMap(base.height, base.width, data)


def _mask_membership(mask: MergedMask, pi: PointImage) -> np.ndarray:
    """True for points that project validly into the merged mask."""
    hit = np.zeros(pi.count, dtype=bool)
    sel = pi.valid
    hit[sel] = mask.data[pi.pixel_uv[sel, 1], pi.pixel_uv[sel, 0]]
    return hit


def mix_points(
    mask: MergedMask,
    donor: tuple[PointCloud, PointImage, np.ndarray],
    base: tuple[PointCloud, PointImage, np.ndarray],
    donor_tag: Provenance = Provenance.SOURCE,
) -> tuple[PointCloud, np.ndarray, PointImage, np.ndarray]:
    """Transfer donor points inside the mask into the base cloud.

    ``donor``/``base`` are (cloud, point image, per-point labels) triples
    built against the mask's frame.  Returns the mixed
    (cloud, labels, point image, provenance) with base points first.
    """
    base_tag = (
        Provenance.TARGET if donor_tag == Provenance.SOURCE else Provenance.SOURCE
    )
    for cloud, pi, labels, what in (donor + ("donor",), base + ("base",)):
        if (pi.frame_height, pi.frame_width) != (mask.height, mask.width):
            raise DimensionMismatchError(
                f"{what} point image frame is {pi.frame_height}x{pi.frame_width}, "
                f"merged mask is {mask.height}x{mask.width}"
            )
        if pi.count != cloud.count or len(labels) != cloud.count:
            raise DimensionMismatchError(
                f"{what} arrays are not index-aligned with its cloud"
            )

    donor_cloud, donor_pi, donor_labels = donor
    base_cloud, base_pi, base_labels = base
    take_donor = _mask_membership(mask, donor_pi)
    keep_base = ~_mask_membership(mask, base_pi)

    xyz = np.concatenate([base_cloud.xyz[keep_base], donor_cloud.xyz[take_donor]])
    labels = np.concatenate(
        [np.asarray(base_labels)[keep_base], np.asarray(donor_labels)[take_donor]]
    ).astype(np.uint16)
    uv = np.concatenate(
        [base_pi.pixel_uv[keep_base], donor_pi.pixel_uv[take_donor]]
    )
    depth = np.concatenate([base_pi.depth[keep_base], donor_pi.depth[take_donor]])
    valid = np.concatenate([base_pi.valid[keep_base], donor_pi.valid[take_donor]])
    provenance = np.concatenate(
        [
            np.full(int(keep_base.sum()), int(base_tag), dtype=np.uint8),
            np.full(int(take_donor.sum()), int(donor_tag), dtype=np.uint8),
        ]
    )
    count = xyz.shape[0]
    cloud = PointCloud(count, xyz)
    indices = PointImage(count, uv, depth, valid, mask.height, mask.width)
    return cloud, labels, indices, provenance


def _point_labels(sample: Sample, pi: PointImage) -> np.ndarray:
    if sample.points.labels is not None:
        return sample.points.labels
    return labels_to_points(pi, sample.labels_2d)


def _mix_direction(
    mask: MergedMask,
    donor: Sample,
    donor_pi: PointImage,
    donor_point_labels: np.ndarray,
    base: Sample,
    base_pi: PointImage,
    base_point_labels: np.ndarray,
    donor_tag: Provenance,
) -> MixedSample:
    image = mix_images(mask, donor.image, base.image)
    labels_2d = mix_labels(mask, donor.labels_2d, base.labels_2d)
    cloud, labels_3d, indices, point_prov = mix_points(
        mask,
        (donor.points, donor_pi, donor_point_labels),
        (base.points, base_pi, base_point_labels),
        donor_tag,
    )
    base_tag = (
        Provenance.TARGET if donor_tag == Provenance.SOURCE else Provenance.SOURCE
    )
    pixel_prov = np.where(
        mask.data, np.uint8(int(donor_tag)), np.uint8(int(base_tag))
    )
    return MixedSample(
        image, cloud, labels_2d, labels_3d, indices, pixel_prov, point_prov
    )


def frustum_mix(
    source: Sample,
    target: Sample,
    source_masks: MaskPack,
    target_masks: MaskPack,
    proportion: float,
    seed: int,
) -> tuple[MixedSample, MixedSample]:
    """Mix a source/target pair in both directions.

    The source-to-target mix samples the source pack's masks (substream
    ``derive_seed(seed, 0)``) and pastes source pixels/points onto the
    target sample; target-to-source mirrors it with the target pack and
    substream ``derive_seed(seed, 1)``.  Fixed inputs give bit-identical
    outputs.
    """
    frame = (source.image.height, source.image.width)
    if (target.image.height, target.image.width) != frame:
        raise DimensionMismatchError(
            f"source frame {frame} differs from target frame "
            f"{(target.image.height, target.image.width)}"
        )
    for pack, what in ((source_masks, "source"), (target_masks, "target")):
        if (pack.height, pack.width) != frame:
            raise DimensionMismatchError(
                f"{what} mask pack is {pack.height}x{pack.width}, frame is {frame}"
            )

    source_pi = project(source.points, source.camera, *frame)
    target_pi = project(target.points, target.camera, *frame)
    source_point_labels = _point_labels(source, source_pi)
    target_point_labels = _point_labels(target, target_pi)

    mask_s2t = sample_and_merge(source_masks, proportion, derive_seed(seed, 0))
    mask_t2s = sample_and_merge(target_masks, proportion, derive_seed(seed, 1))

    src_to_trg = _mix_direction(
        mask_s2t,
        source, source_pi, source_point_labels,
        target, target_pi, target_point_labels,
        Provenance.SOURCE,
    )
    trg_to_src = _mix_direction(
        mask_t2s,
        target, target_pi, target_point_labels,
        source, source_pi, source_point_labels,
        Provenance.TARGET,
    )
    return src_to_trg, trg_to_src
