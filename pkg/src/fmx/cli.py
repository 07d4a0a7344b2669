"""Command-line batch driver over .fmx files.

Subcommands
-----------
pack    merge a directory of single-layer mask files into one MaskPack
mix     mix paired source/target samples in both directions
fuse    refine pseudo-labels from network + VFM probability maps
eval    per-class IoU and mIoU between two label maps
losses  evaluate the full loss ledger from a key/path manifest

Exit codes: 0 success, 1 runtime failure (e.g. a pair failed mid-batch),
2 usage or validation error.  All randomness flows from ``--seed``; a
repeated invocation writes byte-identical outputs.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .core import IGNORE_ID, LabelMap, LogitMap, ProbabilityMap, Provenance
from .errors import FmxError, MappingError
from .formats import MaskPack, pack_masks, read_file, unpack_mask, write_file
from .label_fusion import (
    DEFAULT_UNMAPPED_TAU,
    fuse_pl,
    load_class_mapping,
    remap_vfm_probs,
    softmax,
)
from .mask_ops import sample_and_merge
from .metrics import LedgerInputs, LossLambdas, assemble_ledger, miou
from .mixing import Sample, frustum_mix
from .rng import Xoshiro256StarStar, derive_seed

# Mask-subset proportions; medium is the default throughout.
PROPORTION_PRESETS = {"large": 4 / 5, "medium": 3 / 5, "small": 1 / 3}
DEFAULT_PROPORTION = "medium"

# Substream tag for the manifest-pairing shuffle (distinct from pair indices).
_PAIRING_STREAM = 0x70616972  # "pair"


def _parse_proportion(text: str) -> float:
    if text in PROPORTION_PRESETS:
        return PROPORTION_PRESETS[text]
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected a number or one of {sorted(PROPORTION_PRESETS)}, got {text!r}"
        )
    if not 0.0 < value <= 1.0:
        raise argparse.ArgumentTypeError(
            f"proportion must lie in (0, 1], got {value}"
        )
    return value


def _parse_lambdas(text: str) -> LossLambdas:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(
            "expected three comma-separated weights: xm_src,xm_trg,xm_m"
        )
    try:
        return LossLambdas(*(float(p) for p in parts))
    except (ValueError, FmxError) as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _read_tsv_rows(path) -> list[list[str]]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            rows.append(line.split("\t"))
    return rows


def _as_probabilities(value, what: str) -> ProbabilityMap:
    if isinstance(value, LogitMap):
        return softmax(value)
    if isinstance(value, ProbabilityMap):
        return value
    raise MappingError(f"{what} must be a probability or logit container")


# --- pack --------------------------------------------------------------------

def _cmd_pack(args) -> int:
    names = sorted(
        n for n in os.listdir(args.masks_dir) if n.endswith(".fmx")
    )
    if not names:
        print(f"error: no .fmx mask files in {args.masks_dir}", file=sys.stderr)
        return 2
    class_by_file = {}
    if args.classes:
        for row in _read_tsv_rows(args.classes):
            if len(row) != 2:
                print("error: --classes rows must be filename<TAB>class", file=sys.stderr)
                return 2
            class_by_file[row[0]] = int(row[1])

    masks, classes, labelled = [], [], False
    for name in names:
        pack = read_file(os.path.join(args.masks_dir, name))
        if not isinstance(pack, MaskPack):
            print(f"error: {name} is not a mask container", file=sys.stderr)
            return 2
        for mask_id in range(1, pack.num_masks + 1):
            masks.append(unpack_mask(pack, mask_id))
            cls = class_by_file.get(name)
            if cls is None and pack.mask_meta[mask_id - 1].semantic_class != 0xFFFF:
                cls = pack.mask_meta[mask_id - 1].semantic_class
            classes.append(0xFFFF if cls is None else cls)
            labelled |= cls is not None

    pack = pack_masks(masks, classes if labelled else None)
    write_file(args.out, pack)
    coverage = float((pack.id_matrix != 0).mean())
    print(f"num_masks\t{pack.num_masks}")
    print(f"coverage\t{coverage!r}")
    return 0


# --- mix ---------------------------------------------------------------------

_MANIFEST_COLUMNS = ["image", "points", "labels", "camera", "masks"]


def _load_manifest(path) -> list[dict]:
    rows = _read_tsv_rows(path)
    if not rows or rows[0] != _MANIFEST_COLUMNS:
        raise MappingError(
            f"{path}: first row must be the header "
            f"{chr(9).join(_MANIFEST_COLUMNS)!r}"
        )
    base = os.path.dirname(os.path.abspath(path))
    out = []
    for row in rows[1:]:
        if len(row) != len(_MANIFEST_COLUMNS):
            raise MappingError(f"{path}: row has {len(row)} fields, expected 5")
        out.append(
            {
                col: os.path.join(base, cell)
                for col, cell in zip(_MANIFEST_COLUMNS, row)
            }
        )
    return out


def _load_sample(row: dict) -> tuple[Sample, MaskPack]:
    sample = Sample(
        image=read_file(row["image"]),
        points=read_file(row["points"]),
        labels_2d=read_file(row["labels"]),
        camera=read_file(row["camera"]),
    )
    return sample, read_file(row["masks"])


def _pair_rows(source_rows, target_rows, seed):
    """Row-aligned pairing; the longer manifest is shuffled with the seed."""
    rng = Xoshiro256StarStar(derive_seed(seed, _PAIRING_STREAM))
    if len(source_rows) > len(target_rows):
        source_rows = list(source_rows)
        rng.shuffle(source_rows)
    elif len(target_rows) > len(source_rows):
        target_rows = list(target_rows)
        rng.shuffle(target_rows)
    n = min(len(source_rows), len(target_rows))
    return list(zip(source_rows[:n], target_rows[:n]))


def _process_pair(index, source_row, target_row, proportion, seed, out_dir):
    source, source_masks = _load_sample(source_row)
    target, target_masks = _load_sample(target_row)
    pair_seed = derive_seed(seed, index)
    s2t, t2s = frustum_mix(
        source, target, source_masks, target_masks, proportion, pair_seed
    )
    stem = os.path.join(out_dir, f"pair{index:05d}")
    write_file(stem + "_src_to_trg.fmx", s2t)
    write_file(stem + "_trg_to_src.fmx", t2s)

    lines = [
        f"pair\t{index}",
        f"pair_seed\t{pair_seed}",
        f"proportion\t{proportion!r}",
        f"source_image\t{os.path.basename(source_row['image'])}",
        f"target_image\t{os.path.basename(target_row['image'])}",
    ]
    s2t_mask = sample_and_merge(source_masks, proportion, derive_seed(pair_seed, 0))
    t2s_mask = sample_and_merge(target_masks, proportion, derive_seed(pair_seed, 1))
    for tag, mask, mixed, donor in (
        ("src_to_trg", s2t_mask, s2t, Provenance.SOURCE),
        ("trg_to_src", t2s_mask, t2s, Provenance.TARGET),
    ):
        lines += [
            f"{tag}_selected_ids\t{','.join(str(i) for i in mask.selected_ids)}",
            f"{tag}_mask_pixels\t{int(mask.data.sum())}",
            f"{tag}_points\t{mixed.points.count}",
            f"{tag}_donor_points\t{int((mixed.point_provenance == int(donor)).sum())}",
        ]
    with open(stem + "_provenance.tsv", "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _cmd_mix(args) -> int:
    try:
        source_rows = _load_manifest(args.source_manifest)
        target_rows = _load_manifest(args.target_manifest)
    except (FmxError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if not source_rows or not target_rows:
        print("error: manifests must list at least one sample", file=sys.stderr)
        return 2
    os.makedirs(args.out_dir, exist_ok=True)
    pairs = _pair_rows(source_rows, target_rows, args.seed)

    threads = int(os.environ.get("FMX_THREADS", "0")) or (os.cpu_count() or 1)
    failures = []

    def run(index_pair):
        index, (src, trg) = index_pair
        try:
            _process_pair(index, src, trg, args.proportion, args.seed, args.out_dir)
        except Exception as exc:  # report per-sample, keep the batch going
            failures.append((index, f"{type(exc).__name__}: {exc}"))

    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(run, enumerate(pairs)))

    for index, message in sorted(failures):
        print(f"error: pair {index}: {message}", file=sys.stderr)
    if failures:
        return 1
    print(f"pairs\t{len(pairs)}")
    print(f"samples\t{2 * len(pairs)}")
    return 0


# --- fuse --------------------------------------------------------------------

def _cmd_fuse(args) -> int:
    net = _as_probabilities(read_file(args.net_probs), "--net-probs")
    vfm = _as_probabilities(read_file(args.vfm_probs), "--vfm-probs")
    mapping = load_class_mapping(args.mapping)
    remapped = remap_vfm_probs(vfm, mapping)
    labels = fuse_pl(net, remapped, tau=args.tau)
    write_file(args.out, labels)

    total = labels.data.size
    ignored = int((labels.data == IGNORE_ID).sum())
    print(f"pixels\t{total}")
    print(f"ignored\t{ignored}")
    print(f"ignore_fraction\t{ignored / total!r}")
    counts = np.bincount(
        labels.data[labels.data != IGNORE_ID].astype(np.int64),
        minlength=mapping.num_semantic,
    )
    for cls in range(mapping.num_semantic):
        print(f"class_{cls}\t{int(counts[cls])}")
    return 0


# --- eval / losses -----------------------------------------------------------

def _cmd_eval(args) -> int:
    pred = read_file(args.pred)
    gt = read_file(args.gt)
    if not (isinstance(pred, LabelMap) and isinstance(gt, LabelMap)):
        print("error: --pred and --gt must be label containers", file=sys.stderr)
        return 2
    per_class, mean = miou(pred, gt, args.num_classes)
    for cls, value in enumerate(per_class):
        print(f"iou_class_{cls}\t{float(value)!r}")
    print(f"miou\t{mean!r}")
    return 0


def _cmd_losses(args) -> int:
    paths = {}
    base = os.path.dirname(os.path.abspath(args.inputs))
    for row in _read_tsv_rows(args.inputs):
        if len(row) != 2:
            print("error: --inputs rows must be key<TAB>path", file=sys.stderr)
            return 2
        paths[row[0]] = os.path.join(base, row[1])
    field_names = [f.name for f in LedgerInputs.__dataclass_fields__.values()]
    missing = [k for k in field_names if k not in paths]
    if missing:
        print(f"error: --inputs manifest is missing keys: {missing}", file=sys.stderr)
        return 2
    values = {}
    for key in field_names:
        loaded = read_file(paths[key])
        if key.startswith("labels"):
            if not isinstance(loaded, LabelMap):
                print(f"error: {key} must be a label container", file=sys.stderr)
                return 2
            values[key] = loaded
        else:
            values[key] = _as_probabilities(loaded, key)
    ledger = assemble_ledger(LedgerInputs(**values), args.lambdas)
    sys.stdout.write(ledger.to_tsv())
    return 0


# --- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fmx",
        description="Mask packing, cross-domain sample mixing, pseudo-label "
        "fusion, and segmentation metrics over .fmx containers.",
    )
    parser.add_argument("--version", action="version", version=f"fmx {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pack", help="merge mask files into one ID-matrix pack")
    p.add_argument("--masks-dir", required=True)
    p.add_argument("--classes", help="optional TSV: filename<TAB>semantic class id")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_pack)

    p = sub.add_parser("mix", help="mix paired source/target samples both ways")
    p.add_argument("--source-manifest", required=True)
    p.add_argument("--target-manifest", required=True)
    p.add_argument(
        "--proportion",
        type=_parse_proportion,
        default=DEFAULT_PROPORTION,
        help="mask sample proportion: a number in (0,1] or a preset "
        "(large=4/5, medium=3/5, small=1/3); default medium",
    )
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=_cmd_mix)

    p = sub.add_parser("fuse", help="fuse network and VFM probabilities into pseudo-labels")
    p.add_argument("--net-probs", required=True)
    p.add_argument("--vfm-probs", required=True)
    p.add_argument("--mapping", required=True)
    p.add_argument("--tau", type=float, default=DEFAULT_UNMAPPED_TAU)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_fuse)

    p = sub.add_parser("eval", help="per-class IoU and mIoU of two label maps")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--num-classes", type=int, required=True)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("losses", help="evaluate the loss ledger from a manifest")
    p.add_argument("--inputs", required=True, help="TSV: key<TAB>path per ledger input")
    p.add_argument(
        "--lambdas",
        type=_parse_lambdas,
        default=LossLambdas(),
        help="xm_src,xm_trg,xm_m (default 1,1,1)",
    )
    p.set_defaults(fn=_cmd_losses)
    return parser


def main(argv=None) -> int:
    # argparse applies _parse_proportion to the string default, so presets
    # are already resolved to floats here.
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (FmxError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # unexpected: runtime failure
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
