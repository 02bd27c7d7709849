"""Command-line front end: ``swarmdensity gen|train|eval|compare|bias-study``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import plotting
from .baselines import bias_rows_to_csv, bias_study, build_bbox_table, ideal_detector_histogram
from .config import RunConfig
from .errors import DatasetError, GenerationError, NumericalError
from .geometry import GridSpec
from .labeling import MODES, cell_sum, make_labels
from .metrics import (
    cells_export,
    compare_reports,
    compare_to_csv,
    evaluate,
    quartiles_export,
    report_export,
    report_import,
)
from .regressor import (
    default_weights,
    load_checkpoint,
    param_count,
    predict,
    save_checkpoint,
    train,
    write_history_csv,
)
from .scenegen import bucket_histogram, generate_dataset, read_dataset, write_dataset

log = logging.getLogger("swarmdensity")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_common(p, *names):
    if "config" in names:
        p.add_argument("--config", help="INI file or preset name (full, desk)")
    if "seed" in names:
        p.add_argument("--seed", type=int)
    if "grid" in names:
        p.add_argument("--grid", choices=["1x1", "3x3"], help="output grid")
    if "out" in names:
        p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="swarmdensity", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a balanced, split dataset")
    _add_common(p, "config", "seed", "grid", "out")
    p.add_argument("--n", type=int, help="number of samples")
    p.add_argument("--balance-cap", type=int)
    p.add_argument("--high-density", action="store_true")

    p = sub.add_parser("train", help="train the regressor on a dataset")
    _add_common(p, "config", "seed", "grid", "out")
    p.add_argument("--data", required=True)
    p.add_argument("--labels", choices=MODES)
    p.add_argument("--tail", choices=["1x1", "fc"])
    p.add_argument("--epochs", type=int)

    p = sub.add_parser("eval", help="evaluate a checkpoint or the ideal detector")
    _add_common(p, "config", "out")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--ideal-detector", action="store_true")
    p.add_argument("--split", default="test", choices=["train", "val", "test"])

    p = sub.add_parser("compare", help="join metric reports into one table")
    p.add_argument("reports", nargs="+")
    p.add_argument("--names", nargs="+")
    p.add_argument("--out", required=True)

    p = sub.add_parser("bias-study", help="box-size distance error versus relative tilt")
    _add_common(p, "config", "out")
    p.add_argument("--distance", type=float, default=5.5, help="target distance in meters")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_(seed=args.seed)
    if getattr(args, "grid", None):
        cfg = cfg.with_(grid=GridSpec.parse(args.grid))
    if getattr(args, "n", None) is not None:
        cfg = cfg.with_(n=args.n)
    if getattr(args, "balance_cap", None) is not None:
        cfg = cfg.with_(gen=replace(cfg.gen, balance_cap=args.balance_cap))
    if getattr(args, "high_density", False):
        cfg = cfg.with_(gen=cfg.gen.with_high_density())
    if getattr(args, "labels", None):
        cfg = cfg.with_(mode=args.labels)
    if getattr(args, "tail", None):
        cfg = cfg.with_(tail=args.tail)
    if getattr(args, "epochs", None) is not None:
        cfg = cfg.with_(train=replace(cfg.train, epochs=args.epochs))
    return cfg


def _outdir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DatasetError(f"cannot create {out}: {exc}") from exc
    return out


def _write_rows(path: Path, header, rows) -> str:
    with open(path, "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(header)
        wr.writerows(rows)
    return path.read_text()


def _relabel(samples, grid, spec):
    """Labels for another output grid, recomputed from the stored poses."""
    return [replace(s, labels=make_labels(s.scene, s.camera, grid, spec)) for s in samples]


def cmd_gen(args) -> int:
    cfg = resolve_config(args)
    out = _outdir(args.out)
    ds = generate_dataset(cfg.n, cfg.gen, cfg.camera, cfg.grid, cfg.labels)
    write_dataset(ds, out / "dataset")
    cfg.write(out)
    hist = bucket_histogram(s.count for s in ds.samples)
    text = _write_rows(out / "bucket_histogram.csv", ["uavs_per_image", "images"], sorted(hist.items()))
    mass = np.sum([cell_sum(s.labels["raw"]) for s in ds.samples], axis=0)
    dd = cfg.labels.delta_d
    rows = [[d, format(d * dd, "g"), format((d + 1) * dd, "g"), int(m)] for d, m in enumerate(mass)]
    text2 = _write_rows(out / "bin_distribution.csv", ["bin_index", "bin_lo_m", "bin_hi_m", "uavs"], rows)
    plotting.bucket_histogram(hist, out / "bucket_histogram.png")
    plotting.bin_distribution(mass, out / "bin_distribution.png", dd)
    sys.stdout.write(text + "\n" + text2)
    return EXIT_OK


def _config_near(args):
    """Default ``--config`` to the one written by ``gen`` next to the dataset."""
    if getattr(args, "config", None) is None:
        beside = Path(args.data).resolve().parent / "config.ini"
        if beside.is_file():
            args.config = str(beside)
    return resolve_config(args)


def cmd_train(args) -> int:
    cfg = _config_near(args)
    ds = read_dataset(args.data)
    out = _outdir(args.out)
    if ds.camera.width != cfg.camera.width or ds.camera.height != cfg.camera.height:
        cfg = cfg.with_(camera=ds.camera)
    cfg = cfg.with_(labels=ds.spec)
    tr, va = ds.subset("train"), ds.subset("val")
    if cfg.grid != ds.grid:
        tr, va = _relabel(tr, cfg.grid, ds.spec), _relabel(va, cfg.grid, ds.spec)
    arch = cfg.arch
    w = default_weights(arch.n_bin, cfg.loss_beta, cfg.loss_d_near)
    rp, hist = train(tr, va, cfg.train, arch, cfg.mode, w)
    cfg.write(out)
    save_checkpoint(out / "model.ckpt", rp, hist, {"config": cfg.to_ini(), "mode": cfg.mode})
    write_history_csv(out / "history.csv", hist)
    plotting.loss_curves(hist, out / "loss_curves.png")
    print(f"params {param_count(arch)}")
    print(f"grid {arch.grid} tail {arch.tail} labels {cfg.mode}")
    print(f"val_loss initial {hist.initial_val:.6g} best {min(hist.val_loss):.6g} "
          f"at epoch {hist.best_epoch}; lr decays {hist.decays}")
    return EXIT_OK


def cmd_eval(args) -> int:
    if bool(args.checkpoint) == bool(args.ideal_detector):
        raise UsageError("eval needs exactly one of --checkpoint or --ideal-detector")
    ds = read_dataset(args.data)
    out = _outdir(args.out)
    samples = ds.subset(args.split)
    window = _config_near(args).window
    if args.ideal_detector:
        cfg = _config_near(args).with_(labels=ds.spec, grid=ds.grid, camera=ds.camera)
        table = build_bbox_table(ds.subset("train"), ds.spec)
        table.to_csv(out / "bbox_table.csv")
        preds = np.stack([ideal_detector_histogram(s, table, ds.grid) for s in samples])
        gts = np.stack([s.labels["raw"] for s in samples])
        params = None
        (out / "config.ini").write_text(cfg.to_ini())
    else:
        rp, _, extra = load_checkpoint(args.checkpoint)
        arch = rp.arch
        if (arch.w_in, arch.h_in) != (ds.camera.width, ds.camera.height) or arch.n_bin != ds.spec.n_bin:
            raise DatasetError(f"checkpoint expects {arch.w_in}x{arch.h_in} images with {arch.n_bin} bins; "
                               f"dataset has {ds.camera.width}x{ds.camera.height} with {ds.spec.n_bin}")
        if arch.grid != ds.grid:
            samples = _relabel(samples, arch.grid, ds.spec)
        preds = predict(rp, [s.image for s in samples]).astype(float)
        gts = np.stack([s.labels["raw"] for s in samples])
        params = param_count(arch)
        cfg_text = extra.get("config")
        if cfg_text:
            (out / "config.ini").write_text(cfg_text)
            window = RunConfig.from_ini(cfg_text).window
    report = evaluate(preds, gts, window, ds.spec.delta_d, params)
    report_export(report, out / "report.csv")
    quartiles_export(report, out / "quartiles.csv")
    cells_export(report, out / "cells.csv")
    plotting.e_bar_comparison([report], ["ideal detector" if args.ideal_detector else "regressor"],
                              out / "e_bar.png")
    plotting.error_boxplot(report.per_image_e, out / "error_boxplot.png", ds.spec.delta_d)
    summed_pred = np.maximum(preds, 0).sum(axis=(0, 1, 2))
    summed_gt = gts.sum(axis=(0, 1, 2))
    plotting.correlation_plot(summed_pred, summed_gt, out / "correlation.png", ds.spec.delta_d)
    print(f"T_bar {report.T_bar:.6g} E_bar {report.E_bar:.6g} E_bar_prime {report.E_bar_prime:.6g} "
          f"n_images {report.n_images}")
    return EXIT_OK


def cmd_compare(args) -> int:
    names = args.names or [Path(p).parent.name or Path(p).stem for p in args.reports]
    if len(names) != len(args.reports):
        raise UsageError("--names must match the number of reports")
    try:
        reports = [report_import(p) for p in args.reports]
    except (OSError, KeyError, ValueError) as exc:
        raise DatasetError(str(exc)) from exc
    try:
        rows = compare_reports(reports, names)
    except ValueError as exc:
        raise DatasetError(str(exc)) from exc
    out = _outdir(args.out)
    text = compare_to_csv(rows)
    (out / "compare.csv").write_text(text)
    plotting.e_bar_comparison(reports, names, out / "e_bar_comparison.png")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_bias_study(args) -> int:
    cfg = resolve_config(args)
    out = _outdir(args.out)
    rows = bias_study(cfg.camera, cfg.labels, distance=args.distance)
    cfg.write(out)
    bias_rows_to_csv(rows, out / "bias_study.csv")
    plotting.bias_study(rows, out / "bias_study.png")
    sys.stdout.write((out / "bias_study.csv").read_text())
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "compare": cmd_compare,
            "bias-study": cmd_bias_study}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DatasetError, GenerationError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
