"""Random mask-subset sampling and merging into a single selector layer.

``sample_and_merge`` draws a proportion of a pack's masks without
replacement and unions them into one boolean mask; ``remainder`` is its
per-pixel complement.  The merged mask is the donor/base selector used by
the mixing stage: donor pixels where true, base pixels where false.

Determinism contract: all draws come from :class:`~fmx.rng.Xoshiro256StarStar`
seeded with the given seed, so a fixed (pack, proportion, seed) triple
yields a byte-identical mask on every platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import _check_array, _coerce, _Value
from .errors import EmptyInputError, ParameterRangeError
from .formats import MaskPack
from .rng import Xoshiro256StarStar

__all__ = ["MergedMask", "sample_count", "sample_and_merge", "remainder"]


@dataclass(frozen=True, eq=False)
class MergedMask(_Value):
    """Union of a sampled subset of a pack's masks, plus how it was drawn."""

    height: int
    width: int
    data: np.ndarray
    selected_ids: tuple
    proportion: float
    seed: int

    def __post_init__(self):
        object.__setattr__(
            self, "data", _coerce(self.data, np.bool_, (self.height, self.width))
        )
        object.__setattr__(
            self, "selected_ids", tuple(int(i) for i in self.selected_ids)
        )
        self._finish_init()

    def _violations(self):
        out = []
        if self.height < 1 or self.width < 1:
            out.append("frame dimensions must be at least 1x1")
        _check_array(out, "data", self.data, np.bool_, (self.height, self.width))
        if list(self.selected_ids) != sorted(set(self.selected_ids)):
            out.append("selected_ids must be sorted and unique")
        if not 0.0 < self.proportion <= 1.0:
            out.append(f"proportion must lie in (0, 1], got {self.proportion}")
        return out


def sample_count(proportion: float, num_masks: int) -> int:
    """Number of masks to draw: max(1, round-half-up(proportion * num_masks))."""
    return max(1, math.floor(proportion * num_masks + 0.5))


def sample_and_merge(pack: MaskPack, proportion: float, seed: int) -> MergedMask:
    """Draw a proportion of the pack's masks and union them into one layer."""
    if not 0.0 < proportion <= 1.0:
        raise ParameterRangeError(
            f"proportion must lie in (0, 1], got {proportion}"
        )
    if pack.num_masks < 1:
        raise EmptyInputError("cannot sample from a pack with no masks")
    rng = Xoshiro256StarStar(seed)
    k = sample_count(proportion, pack.num_masks)
    ids = rng.sample_without_replacement(list(range(1, pack.num_masks + 1)), k)
    ids.sort()
    data = np.isin(pack.id_matrix, np.asarray(ids, dtype=np.uint32))
    return MergedMask(pack.height, pack.width, data, tuple(ids), proportion, seed)


def remainder(mask: MergedMask) -> MergedMask:
    """Per-pixel complement: the base-domain side of the selector."""
    return MergedMask(
        mask.height, mask.width, ~mask.data, (), mask.proportion, mask.seed
    )
