"""Command-line front end tying the pipeline together.

Subcommands: evaluate, calibrate, apply, train, ood, longtail, reliability.
Exit codes: 0 on success, 2 on input or validation errors, 1 on internal
errors.  Commands never mutate their input files, and identical inputs and
seeds reproduce identical outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io as gio
from .calibrate import AtsConfig, Calibrator, fit_ats, fit_global_temperature
from .datagen import (
    GaussianMixtureSpec,
    LabeledDataset,
    Split,
    carve_validation,
    circle_means,
    longtail_counts,
    make_longtail,
    make_mixture_dataset,
    sample_class_balanced,
    sample_mixture,
)
from .errors import InvalidInputError
from .losses import LossKind, LossSpec
from .metrics import auroc, ece, evaluate, evaluate_probabilities
from .numerics import row_entropy, softmax
from .trainer import TrainConfig, forward, train

CONFIG_SCHEMA_VERSION = 1


def _check_keys(d: dict, allowed: set, required: set, where: str) -> None:
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise InvalidInputError(f"{where}: unknown keys {unknown}")
    missing = sorted(required - set(d))
    if missing:
        raise InvalidInputError(f"{where}: missing required keys {missing}")


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: invalid JSON ({exc})") from None


def _parse_loss(d: dict) -> LossSpec:
    _check_keys(d, {"kind", "alpha", "gamma"}, {"kind"}, "loss")
    try:
        kind = LossKind(d["kind"])
    except ValueError:
        valid = ", ".join(k.value for k in LossKind)
        raise InvalidInputError(f"unknown loss kind {d['kind']!r}; valid kinds: {valid}") from None
    return LossSpec(kind, d.get("alpha", 0.0), d.get("gamma", 0.0))


def _parse_data_spec(d: dict, default_seed: int) -> tuple[GaussianMixtureSpec, int, int, int]:
    allowed = {"k", "d", "layout", "radius", "means", "variance", "priors", "n_train", "n_val", "n_test", "seed"}
    _check_keys(d, allowed, {"n_train", "n_val", "n_test"}, "data")
    if "means" in d:
        means = np.asarray(d["means"], dtype=np.float64)
    else:
        k = int(d.get("k", 2))
        layout = d.get("layout", "circle")
        if layout != "circle":
            raise InvalidInputError(f"data.layout must be 'circle' (or give explicit means), got {layout!r}")
        means = circle_means(k, float(d.get("radius", 2.0)))
    k = means.shape[0]
    priors = np.asarray(d["priors"], dtype=np.float64) if "priors" in d else np.full(k, 1.0 / k)
    spec = GaussianMixtureSpec(
        means=means,
        variance=float(d.get("variance", 1.0)),
        priors=priors,
        seed=int(d.get("seed", default_seed)),
    )
    return spec, int(d["n_train"]), int(d["n_val"]), int(d["n_test"])


def _load_train_config(path) -> tuple[TrainConfig, dict]:
    doc = _load_json(path)
    allowed = {
        "schema_version", "loss", "epochs", "batch_size", "lr_schedule",
        "momentum", "weight_decay", "seed", "hidden", "data",
    }
    _check_keys(doc, allowed, {"schema_version", "loss", "epochs", "data"}, str(path))
    if doc["schema_version"] != CONFIG_SCHEMA_VERSION:
        raise InvalidInputError(f"{path}: unsupported schema_version {doc['schema_version']}")
    cfg = TrainConfig(
        loss=_parse_loss(doc["loss"]),
        epochs=int(doc["epochs"]),
        batch_size=int(doc.get("batch_size", 128)),
        lr_schedule=tuple((int(e), float(lr)) for e, lr in doc.get("lr_schedule", [[0, 0.1]])),
        momentum=float(doc.get("momentum", 0.9)),
        weight_decay=float(doc.get("weight_decay", 5e-4)),
        seed=int(doc.get("seed", 1)),
        hidden=tuple(int(h) for h in doc.get("hidden", [64])),
    )
    return cfg, doc["data"]


def _print_report(report) -> None:
    print(f"n={report.n} k={report.k} bins={report.m}")
    print(f"error_rate    {report.error_rate:.4f}")
    print(f"nll           {report.nll:.4f}")
    print(f"ece           {report.ece:.4f}")
    print(f"ada_ece       {report.ada_ece:.4f}")
    print(f"classwise_ece {report.classwise_ece:.4f}")


def cmd_evaluate(args) -> int:
    z, y = gio.load_logits(args.logits)
    report = evaluate(z, y, args.bins)
    _print_report(report)
    if args.out:
        gio.save_report(args.out, report, input_path=args.logits)
    return 0


def cmd_calibrate(args) -> int:
    z, y = gio.load_logits(args.val_logits)
    before = ece(softmax(z), y, args.selection_bins)[0]
    if args.method == "ts":
        t_star = fit_global_temperature(z, y)
        cal = Calibrator(method="ts", temperatures=np.array([t_star]))
        print(f"t_star {t_star:.4f}")
    else:
        cfg = AtsConfig(
            bins=args.bins,
            alpha=args.alpha,
            t_min=args.t_min,
            t_max=args.t_max,
            rounds=args.rounds,
            delta_clip=args.delta_clip,
            selection_bins=args.selection_bins,
        )
        temps, partition = fit_ats(z, y, cfg)
        cal = Calibrator(
            method="ats", temperatures=temps.temps, thresholds=partition.thresholds, config=cfg
        )
    after = ece(cal.apply(z), y, args.selection_bins)[0]
    print(f"ece before {before:.4f}")
    print(f"ece after  {after:.4f}")
    gio.save_calibrator(args.out, cal)
    return 0


def cmd_apply(args) -> int:
    z, y = gio.load_logits(args.logits)
    cal = gio.load_calibrator(args.calib)
    raw = softmax(z)
    probs = cal.apply(z)
    if not np.array_equal(raw.argmax(axis=1), probs.argmax(axis=1)):
        raise AssertionError("calibration changed a prediction; this is a bug")
    before = evaluate(z, y, args.bins)
    report = evaluate_probabilities(probs, y, args.bins)
    _print_report(report)
    print(f"ece uncalibrated {before.ece:.4f}")
    gio.save_report(
        args.out,
        report,
        input_path=args.logits,
        calibrator=cal.describe(),
        extras={"ece_uncalibrated": before.ece, "error_rate_uncalibrated": before.error_rate},
    )
    return 0


def _write_training_outputs(out_dir: Path, params, cfg: TrainConfig, history, ds: LabeledDataset) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    gio.save_checkpoint(out_dir / "checkpoint.bin", params, cfg)
    gio.save_history_csv(out_dir / "history.csv", history)
    for split, name in ((Split.TRAIN, "train"), (Split.VAL, "val"), (Split.TEST, "test")):
        x, y = ds.split(split)
        if x.shape[0]:
            gio.save_logits(out_dir / f"logits_{name}.csv", forward(params, x), y)


def cmd_train(args) -> int:
    cfg, data_doc = _load_train_config(args.config)
    spec, n_train, n_val, n_test = _parse_data_spec(data_doc, cfg.seed)
    ds = make_mixture_dataset(spec, n_train, n_val, n_test)
    params, history = train(ds, cfg)
    out_dir = Path(args.out)
    _write_training_outputs(out_dir, params, cfg, history, ds)
    x_test, y_test = ds.split(Split.TEST)
    report = evaluate(forward(params, x_test), y_test)
    _print_report(report)
    gio.save_report(out_dir / "report.json", report, input_path=str(args.config))
    return 0


def cmd_ood(args) -> int:
    z_in, _ = gio.load_logits(args.in_logits)
    z_out, _ = gio.load_logits(args.out_logits)
    value = auroc(row_entropy(softmax(z_in)), row_entropy(softmax(z_out)))
    print(f"auroc {value:.4f}")
    return 0


def cmd_longtail(args) -> int:
    cfg, data_doc = _load_train_config(args.config)
    spec, _, n_val, n_test = _parse_data_spec(data_doc, cfg.seed)
    pool = sample_class_balanced(spec, args.n_max, Split.TRAIN)
    tail = make_longtail(pool, args.rho, args.n_max, spec.seed)
    counts = longtail_counts(args.n_max, spec.k, args.rho)
    test = sample_mixture(spec, n_test, Split.TEST)
    ds = LabeledDataset(
        np.vstack([tail.features, test.features]),
        np.concatenate([tail.labels, test.labels]),
        np.concatenate([tail.splits, test.splits]),
    )
    ds = carve_validation(ds, n_val, spec.seed)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    counts_doc = {
        "schema_version": CONFIG_SCHEMA_VERSION,
        "rho": args.rho,
        "n_max": args.n_max,
        "counts": [int(c) for c in counts],
    }
    (out_dir / "class_counts.json").write_text(json.dumps(counts_doc, indent=2) + "\n")
    print("class_counts", " ".join(str(int(c)) for c in counts))

    params, history = train(ds, cfg)
    _write_training_outputs(out_dir, params, cfg, history, ds)
    x_test, y_test = ds.split(Split.TEST)
    report = evaluate(forward(params, x_test), y_test)
    _print_report(report)
    gio.save_report(out_dir / "report.json", report, input_path=str(args.config))
    return 0


def cmd_reliability(args) -> int:
    z, y = gio.load_logits(args.logits)
    _, bins = ece(softmax(z), y, args.bins)
    gio.save_reliability_csv(args.out, bins)
    print(f"wrote {args.bins} bins to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gcecal",
        description="Classifier calibration toolkit: losses, metrics, temperature scaling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="error rate, NLL, and calibration errors of a logits file")
    p.add_argument("--logits", required=True)
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--out", default=None, help="optional report JSON path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("calibrate", help="fit a temperature calibrator on validation logits")
    p.add_argument("--val-logits", required=True)
    p.add_argument("--method", choices=["ts", "ats"], required=True)
    p.add_argument("--bins", type=int, default=15, help="quantile bins of the adaptive fit")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--t-min", type=float, default=0.1)
    p.add_argument("--t-max", type=float, default=10.0)
    p.add_argument("--rounds", type=int, default=200)
    p.add_argument("--delta-clip", type=float, default=0.1)
    p.add_argument("--selection-bins", type=int, default=20)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("apply", help="apply a fitted calibrator and report both ECEs")
    p.add_argument("--logits", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_apply)

    p = sub.add_parser("train", help="train the classifier per a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ood", help="entropy AUROC of out-of-distribution vs in-distribution logits")
    p.add_argument("--in-logits", required=True)
    p.add_argument("--out-logits", required=True)
    p.set_defaults(func=cmd_ood)

    p = sub.add_parser("longtail", help="train on an exponentially imbalanced split")
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--n-max", type=int, default=5000, help="head-class size")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_longtail)

    p = sub.add_parser("reliability", help="per-bin reliability statistics as CSV")
    p.add_argument("--logits", required=True)
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reliability)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code is None else int(exc.code)
    try:
        return args.func(args)
    except (InvalidInputError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # internal failures must not masquerade as bad input
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
