"""Pseudo-label refinement: softmax, VFM class remapping, and fusion.

The refinement rule takes the per-pixel class distribution of a
pre-trained network and the distribution of a vision foundation model,
sums them, and argmaxes; pixels whose VFM mass falls mostly on classes
outside the scenario's label set are ignored instead of guessed.

Class mappings translate VFM class ids to scenario label ids.  A scenario
class with no mapping rows counts as "not available" (the VFM has no
matching concept); all VFM mass on unlisted ids is tracked as unmapped.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np

from .core import (
    IGNORE_ID,
    LabelMap,
    LogitMap,
    ProbabilityMap,
    _check_array,
    _coerce,
    _Value,
)
from .errors import (
    DimensionMismatchError,
    MappingError,
    ParameterRangeError,
    ValidationError,
)

__all__ = [
    "DEFAULT_UNMAPPED_TAU",
    "MappingEntry",
    "ClassMapping",
    "load_class_mapping",
    "RemappedProbs",
    "softmax",
    "remap_vfm_probs",
    "fuse_pl",
    "hard_pl",
]

# A pixel is ignored when more than this share of VFM mass is unmappable.
DEFAULT_UNMAPPED_TAU = 0.5

_TSV_HEADER = "vfm_class\tvfm_id\tsemantic_id"


class MappingEntry(NamedTuple):
    vfm_class_name: str
    vfm_class_id: int
    semantic_id: int


@dataclass(frozen=True)
class ClassMapping:
    """VFM-class to scenario-label table; unmapped ids fall into ignore."""

    scenario_name: str
    num_semantic: int
    entries: tuple

    def __post_init__(self):
        object.__setattr__(
            self,
            "entries",
            tuple(MappingEntry(str(n), int(v), int(s)) for n, v, s in self.entries),
        )
        seen = set()
        for e in self.entries:
            if e.vfm_class_id in seen:
                raise MappingError(f"duplicate vfm_class_id {e.vfm_class_id}")
            seen.add(e.vfm_class_id)
            if e.vfm_class_id < 0:
                raise MappingError(f"negative vfm_class_id {e.vfm_class_id}")
            if not 0 <= e.semantic_id < self.num_semantic:
                raise MappingError(
                    f"semantic_id {e.semantic_id} outside 0..{self.num_semantic - 1}"
                )
        if self.num_semantic < 1:
            raise MappingError("num_semantic must be at least 1")

    @property
    def unmapped_semantic_ids(self) -> tuple:
        """Scenario classes with no VFM rows (declared not-available)."""
        covered = {e.semantic_id for e in self.entries}
        return tuple(s for s in range(self.num_semantic) if s not in covered)

    def semantic_of(self) -> dict:
        """vfm_class_id -> semantic_id lookup."""
        return {e.vfm_class_id: e.semantic_id for e in self.entries}


def load_class_mapping(
    path,
    scenario_name: Optional[str] = None,
    num_semantic: Optional[int] = None,
) -> ClassMapping:
    """Parse a mapping TSV: header ``vfm_class<TAB>vfm_id<TAB>semantic_id``.

    Lines starting with ``#`` and blank lines are skipped.  When
    ``num_semantic`` is not given it defaults to max(semantic_id) + 1.
    """
    entries = []
    header_seen = False
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            if not header_seen:
                if line != _TSV_HEADER:
                    raise MappingError(
                        f"{path}:{lineno}: expected header {_TSV_HEADER!r}"
                    )
                header_seen = True
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise MappingError(f"{path}:{lineno}: expected 3 tab-separated fields")
            try:
                entries.append(MappingEntry(parts[0], int(parts[1]), int(parts[2])))
            except ValueError as exc:
                raise MappingError(f"{path}:{lineno}: {exc}") from exc
    if not header_seen:
        raise MappingError(f"{path}: missing header line")
    if not entries:
        raise MappingError(f"{path}: no mapping rows")
    if num_semantic is None:
        num_semantic = max(e.semantic_id for e in entries) + 1
    if scenario_name is None:
        import os

        scenario_name = os.path.splitext(os.path.basename(str(path)))[0]
    return ClassMapping(scenario_name, num_semantic, tuple(entries))


@dataclass(frozen=True, eq=False)
class RemappedProbs(_Value):
    """VFM probabilities summed into scenario classes, plus unmapped mass.

    Rows are deliberately not renormalized: ``data`` sums plus ``unmapped``
    reproduce the input row total, keeping the VFM's uncertainty about
    unmappable classes observable for the ignore decision.
    """

    height: int
    width: int
    num_classes: int
    data: np.ndarray
    unmapped: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self,
            "data",
            _coerce(self.data, np.float32, (self.height, self.width, self.num_classes)),
        )
        object.__setattr__(
            self, "unmapped", _coerce(self.unmapped, np.float32, (self.height, self.width))
        )
        self._finish_init()

    def _violations(self):
        out = []
        if self.height < 1 or self.width < 1:
            out.append("frame dimensions must be at least 1x1")
        if self.num_classes < 1:
            out.append("num_classes must be at least 1")
        ok = _check_array(
            out, "data", self.data, np.float32,
            (self.height, self.width, self.num_classes),
        )
        ok &= _check_array(
            out, "unmapped", self.unmapped, np.float32, (self.height, self.width)
        )
        if not ok:
            return out
        if not (np.all(np.isfinite(self.data)) and np.all(np.isfinite(self.unmapped))):
            out.append("values must be finite")
        elif self.data.min(initial=0.0) < 0.0 or self.unmapped.min(initial=0.0) < 0.0:
            out.append("values must be nonnegative")
        return out


def softmax(logits: LogitMap) -> ProbabilityMap:
    """Per-pixel softmax with max-subtraction stabilization.

    Computed in float64 and stored as float32; after the cast, the largest
    entry of each pixel absorbs the rounding residual so every row sums to
    1 within one float32 ulp.
    """
    if not isinstance(logits, LogitMap):
        raise ValidationError(["softmax expects a LogitMap"])
    z = logits.data.astype(np.float64)
    z = z - z.max(axis=2, keepdims=True)
    e = np.exp(z)
    p64 = e / e.sum(axis=2, keepdims=True)
    p = p64.astype(np.float32)
    residual = 1.0 - p.sum(axis=2, dtype=np.float64)
    top = p.argmax(axis=2)[..., None]
    corrected = (
        np.take_along_axis(p, top, axis=2).astype(np.float64) + residual[..., None]
    ).astype(np.float32)
    np.put_along_axis(p, top, corrected, axis=2)
    return ProbabilityMap(logits.height, logits.width, logits.num_classes, p)


def remap_vfm_probs(vfm_probs: ProbabilityMap, mapping: ClassMapping) -> RemappedProbs:
    """Sum VFM class probabilities into scenario classes.

    Mass on VFM ids without a mapping row accumulates in ``unmapped``;
    scenario rows are not renormalized, so per pixel
    ``data.sum() + unmapped`` equals the input row total.
    """
    max_id = max(e.vfm_class_id for e in mapping.entries)
    if max_id >= vfm_probs.num_classes:
        raise MappingError(
            f"mapping references vfm_class_id {max_id} but probabilities "
            f"carry only {vfm_probs.num_classes} classes"
        )
    src = vfm_probs.data.astype(np.float64)
    out = np.zeros(
        (vfm_probs.height, vfm_probs.width, mapping.num_semantic), dtype=np.float64
    )
    mapped = np.zeros(vfm_probs.num_classes, dtype=bool)
    for e in mapping.entries:
        out[:, :, e.semantic_id] += src[:, :, e.vfm_class_id]
        mapped[e.vfm_class_id] = True
    unmapped = src[:, :, ~mapped].sum(axis=2)
    return RemappedProbs(
        vfm_probs.height,
        vfm_probs.width,
        mapping.num_semantic,
        out.astype(np.float32),
        unmapped.astype(np.float32),
    )


def _grid_data(probs) -> np.ndarray:
    if isinstance(probs, (ProbabilityMap, RemappedProbs)):
        return probs.data
    return np.asarray(probs)


def fuse_pl(
    net_probs: ProbabilityMap,
    vfm_semantic_probs: Union[ProbabilityMap, RemappedProbs, np.ndarray],
    unmapped_mass: Optional[np.ndarray] = None,
    tau: float = DEFAULT_UNMAPPED_TAU,
) -> LabelMap:
    """Refined pseudo-labels: per-pixel argmax of the summed distributions.

    Ties break toward the lowest class index.  Pixels whose unmapped VFM
    mass exceeds ``tau`` receive the ignore id.  When
    ``vfm_semantic_probs`` is a :class:`RemappedProbs` its own unmapped
    plane is used unless one is passed explicitly.
    """
    if not 0.0 <= tau <= 1.0:
        raise ParameterRangeError(f"tau must lie in [0, 1], got {tau}")
    if unmapped_mass is None and isinstance(vfm_semantic_probs, RemappedProbs):
        unmapped_mass = vfm_semantic_probs.unmapped
    a = _grid_data(net_probs)
    b = _grid_data(vfm_semantic_probs)
    if a.shape != b.shape:
        raise DimensionMismatchError(
            f"network probabilities {a.shape} vs VFM probabilities {b.shape}"
        )
    summed = a.astype(np.float64) + b.astype(np.float64)
    labels = summed.argmax(axis=2).astype(np.uint16)
    if unmapped_mass is not None:
        um = np.asarray(unmapped_mass)
        if um.shape != a.shape[:2]:
            raise DimensionMismatchError(
                f"unmapped mass {um.shape} vs frame {a.shape[:2]}"
            )
        labels[um.astype(np.float64) > tau] = IGNORE_ID
    return LabelMap(a.shape[0], a.shape[1], labels)


def hard_pl(probs):
    """Argmax labels (lowest index on ties).

    A :class:`ProbabilityMap` yields a :class:`LabelMap`; a raw
    ``(..., num_classes)`` array (e.g. per-point predictions) yields a
    uint16 array of the leading shape.
    """
    if isinstance(probs, ProbabilityMap):
        labels = probs.data.argmax(axis=2).astype(np.uint16)
        return LabelMap(probs.height, probs.width, labels)
    arr = np.asarray(probs)
    if arr.ndim < 1 or arr.shape[-1] < 1:
        raise ValidationError(["argmax needs a trailing class axis"])
    return arr.argmax(axis=-1).astype(np.uint16)
