#!/usr/bin/env python3
"""Regenerate the golden fixtures under tests/golden/.

Inputs are drawn from a fixed seed and every output is produced by the
CLI, so rerunning this script must reproduce the checked-in bytes
exactly.  The mix/fuse/eval outputs are byte-pinned by tests; the loss
ledger is value-pinned (its entries pass through libm transcendentals).
"""

import contextlib
import io
import pathlib
import shutil
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "tests"))

from builders import (  # noqa: E402
    make_camera,
    make_image,
    make_labelmap,
    make_maskpack,
    make_pointcloud,
)
from fmx import LogitMap, ProbabilityMap, write_file  # noqa: E402
from fmx.cli import main  # noqa: E402
from fmx.metrics import LedgerInputs  # noqa: E402

ROOT = pathlib.Path(__file__).resolve().parent.parent
GOLDEN = ROOT / "tests" / "golden"
SEED = 424242
MIX_SEED = 777
FRAME = (16, 20)
NUM_SEMANTIC = 6  # virtualkitti_semantickitti label set
NUM_VFM = 16


def build_inputs(rng, inputs_dir):
    h, w = FRAME
    for side in ("src", "trg"):
        for i in range(2):
            d = inputs_dir / f"{side}{i}"
            d.mkdir(parents=True)
            write_file(d / "image.fmx", make_image(rng, h, w))
            write_file(
                d / "points.fmx",
                make_pointcloud(rng, 80, extent=2.5, z_range=(0.4, 9.0)),
            )
            write_file(d / "labels.fmx", make_labelmap(rng, h, w, NUM_SEMANTIC))
            write_file(d / "camera.fmx", make_camera(rng, h, w, rotated=True))
            write_file(d / "masks.fmx", make_maskpack(rng, h, w, 6))
    for side in ("src", "trg"):
        rows = ["image\tpoints\tlabels\tcamera\tmasks"]
        for i in range(2):
            rows.append(
                "\t".join(
                    f"{side}{i}/{name}.fmx"
                    for name in ("image", "points", "labels", "camera", "masks")
                )
            )
        (inputs_dir / f"{side}.tsv").write_text("\n".join(rows) + "\n")

    write_file(
        inputs_dir / "net_logits.fmx",
        LogitMap(
            h, w, NUM_SEMANTIC,
            (rng.standard_normal((h, w, NUM_SEMANTIC)) * 3).astype(np.float32),
        ),
    )
    write_file(
        inputs_dir / "vfm_logits.fmx",
        LogitMap(
            h, w, NUM_VFM,
            (rng.standard_normal((h, w, NUM_VFM)) * 3).astype(np.float32),
        ),
    )

    # loss-ledger inputs: label maps plus one probability map per
    # head/modality/domain, stored as 1 x N grids
    positions = 40
    (inputs_dir / "ledger").mkdir()
    rows = []
    for field in LedgerInputs.__dataclass_fields__:
        name = f"{field}.fmx"
        if field.startswith("labels"):
            value = make_labelmap(rng, 1, positions, NUM_SEMANTIC)
        else:
            raw = rng.random((1, positions, NUM_SEMANTIC)) + 1e-3
            raw /= raw.sum(axis=2, keepdims=True)
            value = ProbabilityMap(1, positions, NUM_SEMANTIC, raw.astype(np.float32))
        write_file(inputs_dir / "ledger" / name, value)
        rows.append(f"{field}\tledger/{name}")
    (inputs_dir / "losses.tsv").write_text("\n".join(rows) + "\n")


def run(argv) -> str:
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        rc = main(argv)
    assert rc == 0, argv
    return buf.getvalue()


def build_expected(inputs_dir, expected_dir):
    mapping = ROOT / "mappings" / "virtualkitti_semantickitti.tsv"
    expected_dir.mkdir(parents=True)
    (expected_dir / "mix_summary.tsv").write_text(run([
        "mix",
        "--source-manifest", str(inputs_dir / "src.tsv"),
        "--target-manifest", str(inputs_dir / "trg.tsv"),
        "--seed", str(MIX_SEED),
        "--out-dir", str(expected_dir / "mixed"),
    ]))
    (expected_dir / "fuse_summary.tsv").write_text(run([
        "fuse",
        "--net-probs", str(inputs_dir / "net_logits.fmx"),
        "--vfm-probs", str(inputs_dir / "vfm_logits.fmx"),
        "--mapping", str(mapping),
        "--out", str(expected_dir / "pl.fmx"),
    ]))
    (expected_dir / "eval.tsv").write_text(run([
        "eval",
        "--pred", str(expected_dir / "pl.fmx"),
        "--gt", str(inputs_dir / "trg0" / "labels.fmx"),
        "--num-classes", str(NUM_SEMANTIC),
    ]))
    (expected_dir / "losses.tsv").write_text(
        run(["losses", "--inputs", str(inputs_dir / "losses.tsv")])
    )


if __name__ == "__main__":
    if GOLDEN.exists():
        shutil.rmtree(GOLDEN)
    build_inputs(np.random.default_rng(SEED), GOLDEN / "inputs")
    build_expected(GOLDEN / "inputs", GOLDEN / "expected")
    n_files = sum(1 for p in GOLDEN.rglob("*") if p.is_file())
    print(f"wrote {n_files} golden files under {GOLDEN}")
