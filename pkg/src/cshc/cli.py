"""Command-line front end: train, select, evaluate, compare, export-viz."""

import argparse
import csv
import os
import sys

import numpy as np

from . import harness
from .config import load_config
from .data import DataError, export_assignments_csv, load_csv


def _apply_overrides(cfg, args):
    for attr in ("protocol", "test_fraction", "seed", "gamma", "rho", "outdir"):
        value = getattr(args, attr, None)
        if value is not None:
            setattr(cfg, attr, value)
    if getattr(args, "methods", None):
        cfg.methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if getattr(args, "reference", None):
        cfg.reference = args.reference
    return cfg


def _single_dataset_config(args):
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    if args.data:
        name = args.name or os.path.splitext(os.path.basename(args.data))[0]
        cfg.datasets = [(name, args.data, args.label or cfg.label_column)]
    if not cfg.datasets:
        raise DataError("no dataset given (use --data or a config [data] section)")
    return cfg


def _add_common(p, with_data=True):
    p.add_argument("--config", help="INI experiment file")
    p.add_argument("--seed", type=int)
    p.add_argument("--protocol", choices=["split50", "cv3"])
    p.add_argument("--test-fraction", dest="test_fraction", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--out", dest="outdir")
    if with_data:
        p.add_argument("--data", help="dataset CSV path")
        p.add_argument("--name", help="dataset name in reports")
        p.add_argument("--label", help="label column name")


def cmd_train(args):
    cfg = _single_dataset_config(args)
    name, path, label = cfg.datasets[0]
    ds = load_csv(path, label)
    prep = harness.prepare_dataset(name, ds, cfg)
    os.makedirs(cfg.outdir, exist_ok=True)
    harness.save_bundle(prep, cfg, cfg.outdir)
    export_assignments_csv(os.path.join(cfg.outdir, "assignments.csv"),
                           prep.plan, prep.fold)
    print("bundle written to %s (%d trees, %d classifiers, oracle %.2f%%)"
          % (cfg.outdir, prep.forest.n_trees, len(prep.models),
             harness.oracle_accuracy(prep.test_cm)))
    return 0


def cmd_select(args):
    meta, models, forest, cm = harness.load_bundle(args.model)
    feature_names = meta["dataset"]["feature_names"]
    rows = []
    with open(args.input, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if header != feature_names:
            raise DataError("input columns %s do not match the bundle's %s"
                            % (header, feature_names))
        for rec in reader:
            if rec:
                rows.append([float(v) for v in rec])
    X = np.asarray(rows)
    mcfg = meta["config"]
    outcomes = harness.select_rows(
        meta, models, forest, cm, X, args.method,
        gamma=args.gamma if args.gamma is not None else mcfg["gamma"],
        rho=args.rho if args.rho is not None else mcfg["rho"],
        seed=args.seed if args.seed is not None else meta["seed"])
    class_names = meta["dataset"]["class_names"]

    def emit(fh):
        writer = csv.writer(fh)
        writer.writerow(["row", "chosen_classifier", "predicted_class",
                         "predicted_class_name", "method_used"])
        for q, out in enumerate(outcomes):
            writer.writerow([q, out.chosen_classifier, out.predicted_class,
                             class_names[out.predicted_class], out.method_used])

    if args.output is None:
        emit(sys.stdout)
    else:
        with open(args.output, "w", newline="") as fh:
            emit(fh)
    return 0


def _run_and_report(cfg):
    result = harness.run_experiment(cfg, keep_preps=True)
    os.makedirs(cfg.outdir, exist_ok=True)
    harness.write_results_csv(result, os.path.join(cfg.outdir, "results.csv"))
    for name in result.dataset_names:
        prep = result.preps.get(name)
        if prep is None:
            continue
        for method in cfg.methods:
            cell = result.cells.get((name, method))
            if cell and method in harness.SELECTION_METHODS:
                harness.write_trace_csv(
                    prep, cell,
                    os.path.join(cfg.outdir, "trace_%s_%s.csv" % (name, method)))
    harness.append_run_record(result, os.path.join(cfg.outdir, "runs.jsonl"))
    for key in sorted(result.errors):
        print("warning: %s failed: %s" % (key, result.errors[key]),
              file=sys.stderr)
    return result


def cmd_evaluate(args):
    cfg = _single_dataset_config(args)
    result = _run_and_report(cfg)
    name = result.dataset_names[0]
    if name in result.errors:
        print("dataset failed: %s" % result.errors[name], file=sys.stderr)
        return 1
    print("dataset %s (oracle %.2f%%)" % (name, result.oracle[name]))
    for method in cfg.methods:
        cell = result.cells.get((name, method))
        if cell:
            extra = ("  recourse=%.4f" % cell.recourse_rate
                     if cell.recourse_rate is not None else "")
            print("  %-8s %7.3f%%%s" % (method, cell.accuracy, extra))
    return 0


def cmd_compare(args):
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    if not cfg.datasets:
        raise DataError("compare needs a config file with a [data] section")
    result = _run_and_report(cfg)
    rows, kept = harness.comparison_rows(result)
    print("compared %d methods on %d dataset(s); reference=%s"
          % (len(cfg.methods), len(kept), cfg.reference))
    print("%-10s %5s %7s %5s %9s %9s %9s"
          % ("method", "wins", "losses", "ties", "MGI%", "rank", "p"))
    for row in rows:
        print("%-10s %5s %7s %5s %9s %9s %9s" % tuple(row))
    return 0


def cmd_export_viz(args):
    cfg = _single_dataset_config(args)
    cfg.methods = [args.method]
    cfg.reference = args.method
    result = harness.run_experiment(cfg, keep_preps=True)
    name = result.dataset_names[0]
    if name in result.errors or (name, args.method) in result.errors:
        msg = result.errors.get(name) or result.errors.get((name, args.method))
        print("failed: %s" % msg, file=sys.stderr)
        return 1
    prep = result.preps[name]
    out = args.output or os.path.join(cfg.outdir, "viz_%s_%s.csv"
                                      % (name, args.method))
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    harness.export_viz(prep.ds, prep.plan,
                       result.cells[(name, args.method)].outcomes, out)
    print("projection written to %s" % out)
    return 0


def main(argv=None):
    ap = argparse.ArgumentParser(
        prog="cshc",
        description="Cost-sensitive hierarchical clustering for dynamic "
                    "classifier selection")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="build and serialize forest + classifiers")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("select", help="classify a feature-vector CSV")
    p.add_argument("--model", required=True, help="bundle directory from train")
    p.add_argument("--input", required=True, help="CSV of feature rows")
    p.add_argument("--output", help="output CSV (default: stdout)")
    p.add_argument("--method", default="lpr",
                   choices=list(harness.SELECTION_METHODS))
    p.add_argument("--gamma", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("evaluate", help="one dataset, all methods")
    _add_common(p)
    p.add_argument("--methods", help="comma-separated method list")
    p.add_argument("--reference")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="dataset sweep with comparison stats")
    _add_common(p, with_data=False)
    p.add_argument("--methods", help="comma-separated method list")
    p.add_argument("--reference")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("export-viz", help="PCA plot data for one method")
    _add_common(p)
    p.add_argument("--method", default="lpr")
    p.add_argument("--output")
    p.set_defaults(func=cmd_export_viz)

    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
