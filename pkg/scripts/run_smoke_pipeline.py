#!/usr/bin/env python3
"""End-to-end demo on a synthetic record: ingest -> preprocess -> fit-shape ->
train -> generate -> evaluate -> augmentation experiment -> plot.

Runs the same CLI entry points a user would, against a generated format-212
record, and leaves all artifacts in the output directory. Training defaults
are kept tiny so the whole run takes well under a minute; raise --steps for a
more serious model.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from ecgshapegan import cli, record_ingest, synthetic


def write_record(root: Path, seed: int) -> tuple[Path, Path, Path]:
    signal, annotations = synthetic.make_synthetic_record(
        {"N": 30, "V": 20, "F": 14}, seed=seed
    )
    counts = np.clip(np.round(signal * 200.0 + 1024.0), -2048, 2047).astype(int)
    header = root / "demo.hea"
    dat = root / "demo.dat"
    csv = root / "demo.csv"
    header.write_text(
        f"demo 1 360 {counts.size}\ndemo.dat 212 200 11 1024 0 0 0 MLII\n"
    )
    dat.write_bytes(record_ingest.encode_format212(counts[None, :]))
    csv.write_text("".join(f"{i},{s}\n" for i, s in annotations))
    return header, dat, csv


def run(argv: list[str]) -> None:
    print("$ ecgshapegan " + " ".join(argv))
    code = cli.main(argv)
    if code != 0:
        raise SystemExit(f"step failed with exit code {code}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="smoke_output")
    parser.add_argument("--steps", type=int, default=20)
    parser.add_argument("--batch", type=int, default=8)
    parser.add_argument("--k", type=int, default=2)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    root = Path(args.out_dir)
    root.mkdir(parents=True, exist_ok=True)
    header, dat, csv = write_record(root, args.seed)

    record = root / "record.json"
    train = root / "train.json"
    test = root / "test.json"
    model = root / "model.json"
    ckpt = root / "checkpoint.json"
    log = root / "train_log.csv"
    fake = root / "fake_N.json"
    report = root / "metrics.json"
    experiment = root / "experiment.json"
    svg = root / "overlay.svg"

    run(["ingest", "--header", str(header), "--signal", str(dat),
         "--annotations", str(csv), "--out", str(record)])
    run(["preprocess", "--in", str(record), "--cutoff-hz", "40",
         "--split-ratio", "0.7", "--seed", str(args.seed),
         "--out-train", str(train), "--out-test", str(test)])
    run(["fit-shape", "--train", str(train), "--k", str(args.k),
         "--seed", str(args.seed), "--out-model", str(model)])
    run(["train", "--train", str(train), "--model", str(model),
         "--steps", str(args.steps), "--batch", str(args.batch),
         "--seed", str(args.seed), "--out-checkpoint", str(ckpt),
         "--log", str(log)])
    run(["generate", "--checkpoint", str(ckpt), "--model", str(model),
         "--class", "N", "--count", "10", "--seed", str(args.seed),
         "--out", str(fake)])
    run(["evaluate", "--real", str(test), "--fake", str(fake),
         "--out-report", str(report)])
    run(["augment-experiment", "--train", str(train), "--test", str(test),
         "--checkpoint", str(ckpt), "--model", str(model),
         "--counts", "balance", "--seed", str(args.seed),
         "--out-report", str(experiment)])
    run(["plot", "--beats", str(fake), "--model", str(model),
         "--out-svg", str(svg)])

    metrics = json.loads(report.read_text())["classes"]["N"]
    print("\nSynthetic-vs-real metrics for class N:")
    for name in ("rmse", "mae", "mse", "emd", "dtw"):
        print(f"  {name:>4}: {metrics[name]:.6f}")
    print(f"\nAll artifacts in {root}/")


if __name__ == "__main__":
    sys.exit(main())
