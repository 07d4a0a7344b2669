#!/usr/bin/env python3
"""End-to-end demo on synthetic data.

Builds a tiny two-domain dataset (images, clouds, labels, cameras, masks),
then drives the full CLI pipeline: pack -> mix -> fuse -> eval -> losses.
Everything is seeded, so repeated runs print identical output.

Usage: python scripts/demo_pipeline.py [workdir]
"""

import pathlib
import sys
import tempfile

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "tests"))

from builders import (  # noqa: E402
    make_camera,
    make_image,
    make_labelmap,
    make_pointcloud,
)
from fmx import LogitMap, ProbabilityMap, pack_masks, write_file  # noqa: E402
from fmx.cli import main  # noqa: E402
from fmx.metrics import LedgerInputs  # noqa: E402

ROOT = pathlib.Path(__file__).resolve().parent.parent
H, W, CLASSES, VFM_CLASSES = 24, 32, 6, 16


def build_dataset(rng, root):
    for side in ("src", "trg"):
        d = root / side
        (d / "mask_layers").mkdir(parents=True)
        for i in range(5):
            layer = rng.random((H, W)) < rng.uniform(0.15, 0.5)
            write_file(d / "mask_layers" / f"m{i}.fmx", pack_masks([layer]))
        write_file(d / "image.fmx", make_image(rng, H, W))
        write_file(d / "points.fmx", make_pointcloud(rng, 200, extent=3.0, z_range=(0.5, 12.0)))
        write_file(d / "labels.fmx", make_labelmap(rng, H, W, CLASSES))
        write_file(d / "camera.fmx", make_camera(rng, H, W, rotated=True))
        (root / f"{side}.tsv").write_text(
            "image\tpoints\tlabels\tcamera\tmasks\n"
            f"{side}/image.fmx\t{side}/points.fmx\t{side}/labels.fmx"
            f"\t{side}/camera.fmx\t{side}/pack.fmx\n"
        )
    write_file(
        root / "net_logits.fmx",
        LogitMap(H, W, CLASSES, (rng.standard_normal((H, W, CLASSES)) * 2).astype(np.float32)),
    )
    write_file(
        root / "vfm_logits.fmx",
        LogitMap(H, W, VFM_CLASSES, (rng.standard_normal((H, W, VFM_CLASSES)) * 2).astype(np.float32)),
    )
    (root / "ledger").mkdir()
    rows = []
    for field in LedgerInputs.__dataclass_fields__:
        if field.startswith("labels"):
            value = make_labelmap(rng, 1, 64, CLASSES)
        else:
            raw = rng.random((1, 64, CLASSES)) + 1e-3
            raw /= raw.sum(axis=2, keepdims=True)
            value = ProbabilityMap(1, 64, CLASSES, raw.astype(np.float32))
        write_file(root / "ledger" / f"{field}.fmx", value)
        rows.append(f"{field}\tledger/{field}.fmx")
    (root / "losses.tsv").write_text("\n".join(rows) + "\n")


def step(title, argv):
    print(f"\n$ fmx {' '.join(argv)}")
    rc = main(argv)
    if rc != 0:
        sys.exit(rc)


if __name__ == "__main__":
    workdir = pathlib.Path(sys.argv[1]) if len(sys.argv) > 1 else pathlib.Path(
        tempfile.mkdtemp(prefix="fmx-demo-")
    )
    workdir.mkdir(parents=True, exist_ok=True)
    print(f"demo workdir: {workdir}")
    build_dataset(np.random.default_rng(7), workdir)

    for side in ("src", "trg"):
        step("pack", [
            "pack", "--masks-dir", str(workdir / side / "mask_layers"),
            "--out", str(workdir / side / "pack.fmx"),
        ])
    step("mix", [
        "mix", "--source-manifest", str(workdir / "src.tsv"),
        "--target-manifest", str(workdir / "trg.tsv"),
        "--proportion", "medium", "--seed", "2024",
        "--out-dir", str(workdir / "mixed"),
    ])
    step("fuse", [
        "fuse", "--net-probs", str(workdir / "net_logits.fmx"),
        "--vfm-probs", str(workdir / "vfm_logits.fmx"),
        "--mapping", str(ROOT / "mappings" / "virtualkitti_semantickitti.tsv"),
        "--out", str(workdir / "pl.fmx"),
    ])
    step("eval", [
        "eval", "--pred", str(workdir / "pl.fmx"),
        "--gt", str(workdir / "trg" / "labels.fmx"),
        "--num-classes", str(CLASSES),
    ])
    step("losses", ["losses", "--inputs", str(workdir / "losses.tsv")])
    print(f"\nartifacts left in {workdir}")
