"""Command-line front end: ``cardiorad <subcommand> ...``.

Subcommands: phantom, extract, select, train, classify, evaluate. Every
output is plain CSV/JSON written deterministically (sorted keys, repr
floats), so identical inputs give byte-identical files for any --threads.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import CardioradError, TableFormatError
from .features import ExtractionParams, extract_table, read_table, write_table
from .io import read_manifest
from .phantom import PhantomSpec, generate_dataset
from .selection import (DEFAULT_MAX_K, DEFAULT_PATIENCE, EvaluationReport, ablation_report,
                        loo_accuracy, metrics_from_confusion, nested_loo, read_trace,
                        sfs_select, write_curve_csv, write_trace)
from .svm import (SvmParams, class_order, load_model, predict_multiclass, save_model,
                  train_multiclass)

log = logging.getLogger("cardiorad")


def _dump_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _svm_params(args, fallback: dict | None = None) -> SvmParams:
    base = dict(fallback or {})
    base = {k: base[k] for k in ("kernel", "C", "gamma", "tol", "max_iter", "seed") if k in base}
    for key, attr in (("kernel", "kernel"), ("C", "C"), ("seed", "seed")):
        value = getattr(args, attr, None)
        if value is not None:
            base[key] = value
    gamma = getattr(args, "gamma", None)
    if gamma is not None:
        base["gamma"] = None if gamma == "auto" else float(gamma)
    return SvmParams(**base)


def plot_curve_svg(trace, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "cardiorad"
    ks, accs = zip(*trace.curve())
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(ks, accs, marker="o")
    ax.axvline(trace.chosen_k, color="grey", linestyle=":")
    ax.set_xlabel("number of selected features")
    ax.set_ylabel("leave-one-out accuracy")
    ax.set_ylim(0, 1.02)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# ---------------------------------------------------------------------------
# subcommands

def cmd_phantom(args) -> None:
    spec = PhantomSpec(per_class=args.per_class, grid=args.grid, noise=args.noise, seed=args.seed)
    manifest = generate_dataset(spec, args.out)
    log.info("wrote %d phantom subjects to %s", len(manifest.subjects), args.out)


def cmd_extract(args) -> None:
    manifest = read_manifest(args.manifest)
    params = ExtractionParams(n_bins=None if args.bin_width else args.bins, bin_width=args.bin_width)
    table = extract_table(manifest, params, threads=args.threads)
    write_table(table, args.out)
    sidecar = Path(str(args.out) + ".exclusions.json")
    if table.exclusions:
        _dump_json({"excluded": table.exclusions}, sidecar)
        log.warning("%d subjects excluded, see %s", len(table.exclusions), sidecar)
    elif sidecar.exists():
        sidecar.unlink()
    log.info("extracted %d subjects x %d features", len(table.subjects), len(table.names))


def cmd_select(args) -> None:
    table = read_table(args.table)
    params = _svm_params(args)
    trace = sfs_select(table, params, max_k=args.max_k, patience=args.patience,
                       threads=args.threads)
    write_trace(trace, args.out)
    write_curve_csv(trace, Path(args.out).with_suffix(".csv"))
    if args.plot:
        plot_curve_svg(trace, args.plot)
    log.info("selected %d features (stop: %s)", trace.chosen_k, trace.stop_reason)


def cmd_train(args) -> None:
    table = read_table(args.table)
    if table.labels is None:
        raise TableFormatError(f"{args.table}: training needs a 'class' column")
    trace = read_trace(args.trace) if args.trace else None
    features = trace.selected() if trace else table.names
    params = _svm_params(args, trace.params if trace else None)
    model = train_multiclass(table.columns(features), table.labels, features, params)
    save_model(model, args.out)


def cmd_classify(args) -> None:
    model = load_model(args.model)
    table = read_table(args.table, registry=None)
    missing = [f for f in model.feature_names if f not in table.names]
    if missing:
        raise TableFormatError(f"table lacks the model's features: {', '.join(missing)}")
    X = table.columns(model.feature_names)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(["subject_id", "predicted"] + [f"votes_{c}" for c in model.classes]) + "\n")
        for sid, row in zip(table.subjects, X):
            label, votes = predict_multiclass(model, row)
            fh.write(",".join([sid, label] + [str(int(v)) for v in votes]) + "\n")


def cmd_evaluate(args) -> None:
    table = read_table(args.table)
    if args.nested:
        params = _svm_params(args)
        acc, cm, chosen = nested_loo(table, params, args.max_k, args.patience, args.threads)
        report = metrics_from_confusion(cm)
        out = report.to_dict()
        out["protocol"] = "nested"
        out["selected_per_fold"] = chosen
    else:
        if not args.trace:
            raise CardioradError("evaluate needs --trace unless --nested is given")
        trace = read_trace(args.trace)
        params = _svm_params(args, trace.params)
        features = trace.selected()
        acc, cm = loo_accuracy(table, features, params)
        base = metrics_from_confusion(cm)
        ablation = ablation_report(table, trace, params) if args.ablation else None
        report = EvaluationReport(base.accuracy, base.precision, base.recall, cm,
                                  curve=trace.curve(), features=features, ablation=ablation)
        out = report.to_dict()
        out["protocol"] = "loo-on-selection-table"
    out["params"] = params.as_dict()
    out["classes"] = list(class_order(table.labels))
    _dump_json(out, args.out)
    log.info("LOO accuracy %.4f", out["accuracy"])


# ---------------------------------------------------------------------------
# parser

def _add_svm_flags(p) -> None:
    p.add_argument("--kernel", choices=("linear", "rbf"), default=None,
                   help="SVM kernel (default linear)")
    p.add_argument("--C", type=float, default=None, help="soft-margin penalty (default 1.0)")
    p.add_argument("--gamma", default=None, help="RBF width or 'auto' (default auto)")
    p.add_argument("--seed", type=int, default=None, help="seed for SMO fallback (default 42)")


def _add_selection_flags(p) -> None:
    p.add_argument("--max-k", type=int, default=DEFAULT_MAX_K)
    p.add_argument("--patience", type=int, default=DEFAULT_PATIENCE)
    p.add_argument("--threads", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cardiorad", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a synthetic labelled dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", type=int, default=20)
    p.add_argument("--grid", type=int, default=32)
    p.add_argument("--noise", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("extract", help="compute the radiomics feature table")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--bins", type=int, default=32)
    g.add_argument("--bin-width", type=float, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("select", help="sequential forward selection on LOO accuracy")
    p.add_argument("--table", required=True)
    p.add_argument("--out", required=True, help="trace JSON; the curve CSV is written alongside")
    p.add_argument("--plot", default=None, help="optional SVG accuracy curve")
    _add_svm_flags(p)
    _add_selection_flags(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("train", help="fit the one-vs-one SVM on selected features")
    p.add_argument("--table", required=True)
    p.add_argument("--trace", default=None)
    p.add_argument("--out", required=True)
    _add_svm_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="predict classes for a feature table")
    p.add_argument("--table", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("evaluate", help="LOO report: accuracy, precision/recall, confusion")
    p.add_argument("--table", required=True)
    p.add_argument("--trace", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--ablation", action="store_true", help="add without/alone accuracies")
    p.add_argument("--nested", action="store_true", help="repeat selection inside each fold")
    _add_svm_flags(p)
    _add_selection_flags(p)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (CardioradError, ValueError, OSError) as exc:
        report = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        if isinstance(exc, CardioradError):
            report.update(exc.context())
        print(json.dumps(report, sort_keys=True), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
