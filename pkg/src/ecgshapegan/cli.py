"""Command-line interface binding the pipeline stages together.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import gan, metrics, preprocess, record_ingest, shape_model
from .classifier import default_counts, run_experiment
from .errors import DataError, NumericError
from .preprocess import BeatDataset, CLASS_SYMBOLS, LABEL_OF_SYMBOL

RECORD_JSON_VERSION = 1


def _write(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def cmd_ingest(args) -> None:
    record = record_ingest.load_record(args.header, args.signal, args.annotations)
    payload = {
        "version": RECORD_JSON_VERSION,
        "record": record.header.record_name,
        "fs": record.header.sampling_rate_hz,
        "channel": args.channel,
        "signal": [repr(v) for v in record.signals[args.channel].tolist()],
        "annotations": [[a.sample_index, a.symbol] for a in record.annotations],
    }
    _write(args.out, json.dumps(payload, sort_keys=True))


def _load_record_json(path) -> record_ingest.Record:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("version") != RECORD_JSON_VERSION:
        raise DataError(f"unsupported record version {payload.get('version')}")
    signal = np.array([float(v) for v in payload["signal"]])
    header = record_ingest.RecordHeader(
        record_name=payload["record"],
        num_signals=1,
        sampling_rate_hz=float(payload["fs"]),
        samples_per_signal=signal.size,
        signals=(record_ingest.SignalSpec(212, 1.0, 0),),
    )
    annotations = [
        record_ingest.Annotation(sample_index=int(i), symbol=s)
        for i, s in payload["annotations"]
    ]
    return record_ingest.Record(header=header, signals=signal[None, :], annotations=annotations)


def cmd_preprocess(args) -> None:
    record = _load_record_json(args.infile)
    filtered = preprocess.lowpass_filter(
        record.signals[0], record.header.sampling_rate_hz, args.cutoff_hz
    )
    record.signals = filtered[None, :]
    dataset = preprocess.segment_heartbeats(record, channel=0)
    train, test = preprocess.split_train_test(dataset, args.split_ratio, args.seed)
    train, stats = preprocess.normalize_amplitudes(train)
    test, _ = preprocess.normalize_amplitudes(test, stats)
    preprocess.save_dataset(train, args.out_train)
    preprocess.save_dataset(test, args.out_test)


def cmd_fit_shape(args) -> None:
    dataset = preprocess.load_dataset(args.train)
    model_set = shape_model.build_shape_models(
        dataset, k=args.k, seed=args.seed, variance=args.variance
    )
    shape_model.save_model_set(model_set, args.out_model)


def cmd_train(args) -> None:
    dataset = preprocess.load_dataset(args.train)
    model_set = shape_model.load_model_set(args.model)
    config = gan.TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch,
        z_dim=args.z_dim,
        gp_lambda=args.gp_lambda,
        n_critic=args.n_critic,
        total_steps=args.steps,
        seed=args.seed,
    )
    gan.train(config, dataset, model_set, log_path=args.log, checkpoint_path=args.out_checkpoint)


def cmd_generate(args) -> None:
    model_set = shape_model.load_model_set(args.model)
    state = gan.load_checkpoint(args.checkpoint, model_set)
    label = LABEL_OF_SYMBOL[args.beat_class]
    if label not in model_set.class_labels:
        raise DataError(f"class {args.beat_class} absent from the shape model")
    rows = gan.generate_beats(state, label, args.count, seed=args.seed)
    t_len = model_set.t_len
    beats = BeatDataset(
        beats=[
            preprocess.Heartbeat(
                shape=row.reshape(2, t_len), label=label,
                source_record="synthetic", r_peak_index=-1,
            )
            for row in rows
        ]
    )
    preprocess.save_dataset(beats, args.out)


def cmd_evaluate(args) -> None:
    real = preprocess.load_dataset(args.real)
    fake = preprocess.load_dataset(args.fake)
    report = metrics.evaluate_sets(real, fake)
    base = args.out_report.removesuffix(".csv").removesuffix(".json")
    _write(base + ".csv", metrics.report_to_csv(report))
    _write(base + ".json", metrics.report_to_json(report))


def _parse_counts(text: str, train_set: BeatDataset) -> dict[int, int]:
    if text == "balance":
        return default_counts(train_set)
    counts = {}
    for part in text.split(","):
        symbol, _, value = part.partition("=")
        if symbol not in LABEL_OF_SYMBOL or not value.isdigit():
            raise DataError(f"bad counts entry {part!r} (want e.g. 'F=50' or 'balance')")
        counts[LABEL_OF_SYMBOL[symbol]] = int(value)
    return counts


def cmd_augment_experiment(args) -> None:
    train_set = preprocess.load_dataset(args.train)
    test_set = preprocess.load_dataset(args.test)
    model_set = shape_model.load_model_set(args.model)
    state = gan.load_checkpoint(args.checkpoint, model_set)
    counts = _parse_counts(args.counts, train_set)
    report = run_experiment(train_set, test_set, state, counts, seed=args.seed)
    _write(args.out_report, report.to_json())


def cmd_plot(args) -> None:
    from .plotting import plot_overlay  # matplotlib import deferred

    beats = preprocess.load_dataset(args.beats)
    model_set = shape_model.load_model_set(args.model)
    csv_path = args.out_svg.removesuffix(".svg") + ".csv"
    plot_overlay(beats, model_set, args.out_svg, csv_path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ecgshapegan")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse a record triple into a record JSON")
    p.add_argument("--header", required=True)
    p.add_argument("--signal", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--channel", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("preprocess", help="filter, segment, normalize, split")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--cutoff-hz", type=float, default=40.0)
    p.add_argument("--split-ratio", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-test", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("fit-shape", help="build per-class/per-cluster PCA shape models")
    p.add_argument("--train", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--variance", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-model", required=True)
    p.set_defaults(func=cmd_fit_shape)

    p = sub.add_parser("train", help="train the conditional WGAN-GP")
    p.add_argument("--train", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-5)
    p.add_argument("--lambda", dest="gp_lambda", type=float, default=10.0)
    p.add_argument("--n-critic", type=int, default=5)
    p.add_argument("--z-dim", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-checkpoint", required=True)
    p.add_argument("--log", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="sample synthetic beats from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--class", dest="beat_class", choices=CLASS_SYMBOLS, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="metric report for real vs synthetic beats")
    p.add_argument("--real", required=True)
    p.add_argument("--fake", required=True)
    p.add_argument("--out-report", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("augment-experiment", help="classifier settings 1 vs 4")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--counts", default="balance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-report", required=True)
    p.set_defaults(func=cmd_augment_experiment)

    p = sub.add_parser("plot", help="overlay synthetic beats over cluster bands")
    p.add_argument("--beats", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out-svg", required=True)
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
