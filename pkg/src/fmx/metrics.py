"""Loss and evaluation math as pure functions over prediction arrays.

Cross-entropy and KL divergence accept either grid-shaped maps or
flat per-point arrays; every reduction accumulates through
``math.fsum`` (an exactly rounded sum), so results are reproducible
bit-for-bit for fixed inputs regardless of platform or array layout.

The loss ledger mirrors the full training objective: eight cross-entropy
terms (source, target, and both mixed directions, for the 2D and 3D
heads) plus eight cross-modal KL terms weighted per domain.  No gradients
are involved; this is forward evaluation only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import IGNORE_ID, LabelMap, ProbabilityMap, _Value
from .errors import (
    DimensionMismatchError,
    EmptySupervisionError,
    ValidationError,
)
from .label_fusion import RemappedProbs

__all__ = [
    "LOG_CLAMP",
    "cross_entropy",
    "kl_divergence",
    "miou",
    "ensemble",
    "LossLambdas",
    "LossLedger",
    "LedgerInputs",
    "assemble_ledger",
    "ledger_total",
    "CE_KEYS",
    "KL_SRC_KEYS",
    "KL_TRG_KEYS",
    "KL_MIX_KEYS",
    "LEDGER_KEYS",
]

# Probabilities are clamped to at least this before any logarithm.
LOG_CLAMP = 1e-12


def _probs_array(x) -> np.ndarray:
    if isinstance(x, (ProbabilityMap, RemappedProbs)):
        return x.data
    arr = np.asarray(x)
    if arr.ndim < 2:
        raise ValidationError(["probabilities need a trailing class axis"])
    return arr


def _labels_array(x) -> np.ndarray:
    if isinstance(x, LabelMap):
        return x.data
    return np.asarray(x)


def cross_entropy(probs, labels) -> float:
    """Mean of -ln p[label] over non-ignore positions.

    Probabilities are clamped to ``LOG_CLAMP`` before the log.  Raises
    :class:`EmptySupervisionError` when every position is ignored.
    """
    p = _probs_array(probs).astype(np.float64)
    y = _labels_array(labels)
    if p.shape[:-1] != y.shape:
        raise DimensionMismatchError(
            f"probabilities {p.shape} do not match labels {y.shape}"
        )
    num_classes = p.shape[-1]
    flat_p = p.reshape(-1, num_classes)
    flat_y = y.reshape(-1).astype(np.int64)
    keep = flat_y != IGNORE_ID
    if not keep.any():
        raise EmptySupervisionError("every position carries the ignore id")
    kept_y = flat_y[keep]
    if kept_y.max() >= num_classes:
        raise ValidationError(
            [f"label {int(kept_y.max())} >= num_classes ({num_classes})"]
        )
    picked = flat_p[np.flatnonzero(keep), kept_y]
    losses = -np.log(np.maximum(picked, LOG_CLAMP))
    return math.fsum(losses.tolist()) / losses.size


def kl_divergence(p, q) -> float:
    """Mean over positions of sum_c p ln(p/q), both clamped to LOG_CLAMP."""
    pa = _probs_array(p).astype(np.float64)
    qa = _probs_array(q).astype(np.float64)
    if pa.shape != qa.shape:
        raise DimensionMismatchError(f"p has shape {pa.shape}, q has shape {qa.shape}")
    pc = np.maximum(pa, LOG_CLAMP)
    qc = np.maximum(qa, LOG_CLAMP)
    terms = pc * (np.log(pc) - np.log(qc))
    positions = int(np.prod(pa.shape[:-1]))
    return math.fsum(terms.ravel().tolist()) / positions


def miou(pred, gt, num_classes: int) -> tuple[np.ndarray, float]:
    """Per-class intersection-over-union and its mean.

    Positions whose ground truth is the ignore id never enter the
    confusion matrix; a predicted ignore at a supervised position counts
    as a miss of the true class (a false negative) but accuses no class.
    Classes whose TP+FP+FN is zero are NaN in the per-class vector and
    excluded from the mean.
    """
    p = _labels_array(pred)
    g = _labels_array(gt)
    if p.shape != g.shape:
        raise DimensionMismatchError(
            f"prediction {p.shape} does not match ground truth {g.shape}"
        )
    if num_classes < 1:
        raise ValidationError(["num_classes must be at least 1"])
    p = p.reshape(-1).astype(np.int64)
    g = g.reshape(-1).astype(np.int64)
    supervised = g != IGNORE_ID
    if supervised.any() and g[supervised].max() >= num_classes:
        raise ValidationError(
            [f"ground-truth label {int(g[supervised].max())} >= num_classes"]
        )
    scored = supervised & (p != IGNORE_ID)
    if scored.any() and p[scored].max() >= num_classes:
        raise ValidationError(
            [f"predicted label {int(p[scored].max())} >= num_classes"]
        )
    confusion = np.bincount(
        num_classes * g[scored] + p[scored], minlength=num_classes * num_classes
    ).reshape(num_classes, num_classes)
    missed = np.bincount(g[supervised & (p == IGNORE_ID)], minlength=num_classes)

    tp = np.diag(confusion).astype(np.float64)
    fp = confusion.sum(axis=0) - np.diag(confusion)
    fn = confusion.sum(axis=1) - np.diag(confusion) + missed
    denom = tp + fp + fn
    if not (denom > 0).any():
        raise EmptySupervisionError("no class has a nonzero IoU denominator")
    iou = np.full(num_classes, np.nan, dtype=np.float64)
    present = denom > 0
    iou[present] = tp[present] / denom[present]
    mean = math.fsum(iou[present].tolist()) / int(present.sum())
    return iou, mean


def _round_rows_to_one(p64: np.ndarray) -> np.ndarray:
    """float64 distributions -> float32 with rows summing to 1 within 1 ulp."""
    p = p64.astype(np.float32)
    residual = 1.0 - p.sum(axis=-1, dtype=np.float64)
    top = p.argmax(axis=-1)[..., None]
    corrected = (
        np.take_along_axis(p, top, axis=-1).astype(np.float64) + residual[..., None]
    ).astype(np.float32)
    np.put_along_axis(p, top, corrected, axis=-1)
    return p


def ensemble(probs_2d: ProbabilityMap, probs_3d: ProbabilityMap) -> ProbabilityMap:
    """Elementwise mean of two distributions, renormalized per position."""
    a = _probs_array(probs_2d)
    b = _probs_array(probs_3d)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"{a.shape} vs {b.shape}")
    mean = (a.astype(np.float64) + b.astype(np.float64)) / 2.0
    mean = mean / mean.sum(axis=-1, keepdims=True)
    data = _round_rows_to_one(mean)
    if isinstance(probs_2d, ProbabilityMap):
        return ProbabilityMap(
            probs_2d.height, probs_2d.width, probs_2d.num_classes, data
        )
    return data


# --- loss ledger -------------------------------------------------------------

CE_KEYS = (
    "ce_2d_src",
    "ce_3d_src",
    "ce_2d_trg",
    "ce_3d_trg",
    "ce_2d_mix_src_to_trg",
    "ce_3d_mix_src_to_trg",
    "ce_2d_mix_trg_to_src",
    "ce_3d_mix_trg_to_src",
)
KL_SRC_KEYS = ("kl_2d_to_3d_src", "kl_3d_to_2d_src")
KL_TRG_KEYS = ("kl_2d_to_3d_trg", "kl_3d_to_2d_trg")
KL_MIX_KEYS = (
    "kl_2d_to_3d_mix_src_to_trg",
    "kl_3d_to_2d_mix_src_to_trg",
    "kl_2d_to_3d_mix_trg_to_src",
    "kl_3d_to_2d_mix_trg_to_src",
)
LEDGER_KEYS = CE_KEYS + KL_SRC_KEYS + KL_TRG_KEYS + KL_MIX_KEYS


@dataclass(frozen=True)
class LossLambdas:
    """Cross-modal KL weights for the source, target, and mixed domains."""

    xm_src: float = 1.0
    xm_trg: float = 1.0
    xm_m: float = 1.0

    def __post_init__(self):
        for name in ("xm_src", "xm_trg", "xm_m"):
            value = float(getattr(self, name))
            object.__setattr__(self, name, value)
            if not (np.isfinite(value) and value >= 0.0):
                raise ValidationError([f"lambda {name} must be finite and >= 0"])


def ledger_total(entries: dict, lambdas: LossLambdas) -> float:
    """Weighted total: sum of CE terms plus lambda-weighted KL terms.

    Accumulated with ``math.fsum``, so the result is the correctly rounded
    float64 value of the exact sum of the (individually rounded) addends.
    """
    parts = [float(entries[k]) for k in CE_KEYS]
    parts += [lambdas.xm_src * float(entries[k]) for k in KL_SRC_KEYS]
    parts += [lambdas.xm_trg * float(entries[k]) for k in KL_TRG_KEYS]
    parts += [lambdas.xm_m * float(entries[k]) for k in KL_MIX_KEYS]
    return math.fsum(parts)


@dataclass(frozen=True, eq=False)
class LossLedger(_Value):
    """All sixteen loss terms of one evaluation plus weights and total."""

    entries: tuple  # ((key, value) in LEDGER_KEYS order)
    lambdas: LossLambdas
    total: float

    def __post_init__(self):
        object.__setattr__(
            self, "entries", tuple((str(k), float(v)) for k, v in self.entries)
        )
        object.__setattr__(self, "total", float(self.total))
        self._finish_init()

    def _violations(self):
        out = []
        keys = tuple(k for k, _ in self.entries)
        if keys != LEDGER_KEYS:
            out.append("entries must carry exactly the ledger keys, in order")
            return out
        for k, v in self.entries:
            if not (np.isfinite(v) and v >= 0.0):
                out.append(f"entry {k} must be finite and >= 0, got {v}")
        if not isinstance(self.lambdas, LossLambdas):
            out.append("lambdas must be a LossLambdas")
            return out
        if out:
            return out
        if self.total != ledger_total(dict(self.entries), self.lambdas):
            out.append("total is not the weighted sum of the entries")
        return out

    def entry(self, key: str) -> float:
        return dict(self.entries)[key]

    def to_tsv(self) -> str:
        lines = [f"{k}\t{v!r}" for k, v in self.entries]
        lines.append(f"lambda_xm_src\t{self.lambdas.xm_src!r}")
        lines.append(f"lambda_xm_trg\t{self.lambdas.xm_trg!r}")
        lines.append(f"lambda_xm_m\t{self.lambdas.xm_m!r}")
        lines.append(f"total\t{self.total!r}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class LedgerInputs:
    """Prediction and label arrays for one ledger evaluation.

    ``ph1_*`` are the main classification heads, ``ph2_*`` the cross-modal
    mimicry heads.  Per domain, all four prediction arrays and the label
    array must cover the same positions; the class count is shared by all.
    Labels: ground truth for src, pseudo-labels for trg and the mixes.
    """

    ph1_2d_src: object
    ph2_2d_src: object
    ph1_3d_src: object
    ph2_3d_src: object
    ph1_2d_trg: object
    ph2_2d_trg: object
    ph1_3d_trg: object
    ph2_3d_trg: object
    ph1_2d_mix_s2t: object
    ph2_2d_mix_s2t: object
    ph1_3d_mix_s2t: object
    ph2_3d_mix_s2t: object
    ph1_2d_mix_t2s: object
    ph2_2d_mix_t2s: object
    ph1_3d_mix_t2s: object
    ph2_3d_mix_t2s: object
    labels_src: object
    labels_trg: object
    labels_mix_s2t: object
    labels_mix_t2s: object

    _DOMAINS = ("src", "trg", "mix_s2t", "mix_t2s")

    def _group(self, domain: str):
        return (
            getattr(self, f"ph1_2d_{domain}"),
            getattr(self, f"ph2_2d_{domain}"),
            getattr(self, f"ph1_3d_{domain}"),
            getattr(self, f"ph2_3d_{domain}"),
            getattr(self, f"labels_{domain}" if domain != "src" else "labels_src"),
        )


def assemble_ledger(
    inputs: LedgerInputs, lambdas: Optional[LossLambdas] = None
) -> LossLedger:
    """Evaluate every loss term of the training objective, without training.

    KL values are floored at zero before entering the ledger: the true
    divergence is nonnegative, and the clamp inside :func:`kl_divergence`
    can only produce negligible negative artifacts.
    """
    lambdas = lambdas if lambdas is not None else LossLambdas()

    classes = {
        _probs_array(getattr(inputs, f"ph{h}_{m}_{d}")).shape[-1]
        for h in (1, 2)
        for m in ("2d", "3d")
        for d in LedgerInputs._DOMAINS
    }
    if len(classes) != 1:
        raise DimensionMismatchError(
            f"all prediction arrays must share one class count, got {sorted(classes)}"
        )
    for d in LedgerInputs._DOMAINS:
        ph1_2d, ph2_2d, ph1_3d, ph2_3d, labels = inputs._group(d)
        shapes = {
            _probs_array(x).shape for x in (ph1_2d, ph2_2d, ph1_3d, ph2_3d)
        }
        if len(shapes) != 1:
            raise DimensionMismatchError(
                f"{d}: prediction arrays disagree on shape: {sorted(shapes)}"
            )
        if _labels_array(labels).shape != next(iter(shapes))[:-1]:
            raise DimensionMismatchError(f"{d}: labels do not match predictions")

    values = {
        "ce_2d_src": cross_entropy(inputs.ph1_2d_src, inputs.labels_src),
        "ce_3d_src": cross_entropy(inputs.ph1_3d_src, inputs.labels_src),
        "ce_2d_trg": cross_entropy(inputs.ph1_2d_trg, inputs.labels_trg),
        "ce_3d_trg": cross_entropy(inputs.ph1_3d_trg, inputs.labels_trg),
        "ce_2d_mix_src_to_trg": cross_entropy(
            inputs.ph1_2d_mix_s2t, inputs.labels_mix_s2t
        ),
        "ce_3d_mix_src_to_trg": cross_entropy(
            inputs.ph1_3d_mix_s2t, inputs.labels_mix_s2t
        ),
        "ce_2d_mix_trg_to_src": cross_entropy(
            inputs.ph1_2d_mix_t2s, inputs.labels_mix_t2s
        ),
        "ce_3d_mix_trg_to_src": cross_entropy(
            inputs.ph1_3d_mix_t2s, inputs.labels_mix_t2s
        ),
    }
    kl_pairs = {
        "kl_2d_to_3d_src": (inputs.ph1_3d_src, inputs.ph2_2d_src),
        "kl_3d_to_2d_src": (inputs.ph1_2d_src, inputs.ph2_3d_src),
        "kl_2d_to_3d_trg": (inputs.ph1_3d_trg, inputs.ph2_2d_trg),
        "kl_3d_to_2d_trg": (inputs.ph1_2d_trg, inputs.ph2_3d_trg),
        "kl_2d_to_3d_mix_src_to_trg": (inputs.ph1_3d_mix_s2t, inputs.ph2_2d_mix_s2t),
        "kl_3d_to_2d_mix_src_to_trg": (inputs.ph1_2d_mix_s2t, inputs.ph2_3d_mix_s2t),
        "kl_2d_to_3d_mix_trg_to_src": (inputs.ph1_3d_mix_t2s, inputs.ph2_2d_mix_t2s),
        "kl_3d_to_2d_mix_trg_to_src": (inputs.ph1_2d_mix_t2s, inputs.ph2_3d_mix_t2s),
    }
    for key, (p, q) in kl_pairs.items():
        values[key] = max(0.0, kl_divergence(p, q))
    # CE can dip microscopically below zero when a clamped probability
    # slightly exceeds 1; floor it like the KL terms.
    for key in CE_KEYS:
        values[key] = max(0.0, values[key])

    entries = tuple((k, values[k]) for k in LEDGER_KEYS)
    total = ledger_total(values, lambdas)
    return LossLedger(entries, lambdas, total)
