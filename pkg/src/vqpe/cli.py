"""Command-line driver for the V/Q pipeline.

Stages run in order generate, preprocess, align, features, train, predict,
evaluate, each reading the previous stage's files under ``out_dir``.
``sweep`` runs the features-to-evaluation stages over a hyperparameter grid
and ``bench-table1`` runs the Shepp-Logan registration benchmark.
"""
from __future__ import annotations

import argparse
import ast
import logging
import os
import sys
from dataclasses import fields

import numpy as np

from . import bayesnet, evaluation, pipeline
from .dataset import (ManifestError, load_case, load_masks, read_manifest, save_case,
                      write_manifest)
from .imaging import (DegenerateImageError, ImageFormatError, SegmentationError, fshs,
                      read_image, segment_lung)
from .phantom import CLASSES, LABEL_TOKENS, TOKEN_LABELS, VIEWS, PhantomError, generate_dataset
from .pipeline import PipelineConfig, derive_seed
from .registration import binarize, ga_align

log = logging.getLogger("vqpe")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, code, kind, message):
        super().__init__(message)
        self.code = code
        self.kind = kind


def usage_error(msg):
    return CliError(EXIT_USAGE, "usage", msg)


def data_error(msg):
    return CliError(EXIT_DATA, "data", msg)


# ---------------------------------------------------------------------------
# configuration

def _parse_value(key, raw, default):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            value = ast.literal_eval(raw if raw.startswith("(") else f"({raw},)")
            return tuple(tuple(v) if isinstance(v, (list, tuple)) else v for v in value)
        return raw
    except (ValueError, SyntaxError):
        raise usage_error(f"bad value for key {key}: {raw!r}") from None


def parse_config_text(text, source="<config>"):
    """``key = value`` lines with ``#`` comments; returns raw string values."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise usage_error(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def build_config(config_path=None, overrides=()):
    defaults = PipelineConfig()
    raw = {}
    if config_path:
        if not os.path.exists(config_path):
            raise data_error(f"missing input file: {config_path}")
        with open(config_path, encoding="utf-8") as fh:
            raw.update(parse_config_text(fh.read(), config_path))
    for item in overrides:
        if "=" not in item:
            raise usage_error(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        raw[k.strip()] = v
    known = {f.name for f in fields(PipelineConfig)}
    values = {}
    for key, value in raw.items():
        if key not in known:
            raise usage_error(f"unknown key: {key}")
        values[key] = _parse_value(key, value, getattr(defaults, key))
    try:
        return PipelineConfig(**values)
    except (ValueError, TypeError) as exc:
        raise usage_error(f"invalid configuration: {exc}") from None


def config_help():
    cfg = PipelineConfig()
    return "configuration keys (defaults):\n" + "\n".join(
        f"  {f.name} = {getattr(cfg, f.name)!r}" for f in fields(cfg))


# ---------------------------------------------------------------------------
# helpers

def _out(cfg, *parts):
    return os.path.join(cfg.out_dir, *parts)


def _require(path):
    if not os.path.exists(path):
        raise data_error(f"missing input file: {path}")
    return path


def _read_entries(path):
    _require(path)
    try:
        return read_manifest(path)
    except ManifestError as exc:
        raise data_error(str(exc)) from None


def _load(entry):
    try:
        return load_case(entry)
    except FileNotFoundError as exc:
        raise data_error(f"missing input file: {exc}") from None


def _write_text(path, text):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _fmt(x):
    # shortest string that parses back to the same double
    return repr(float(x))


OUTPUT_HEADER = ["case_id", "label", "mean", "std", "ci_low", "ci_high", "predicted"]


def outputs_tsv(ids, labels, outs):
    lines = ["\t".join(OUTPUT_HEADER)]
    for cid, lab, o in zip(ids, labels, outs):
        lines.append("\t".join([cid, LABEL_TOKENS[lab], _fmt(o.mean), _fmt(o.std),
                                _fmt(o.ci95[0]), _fmt(o.ci95[1]), LABEL_TOKENS[o.predicted_class]]))
    return "\n".join(lines) + "\n"


def read_table(path):
    _require(path)
    with open(path, encoding="utf-8") as fh:
        rows = [line.rstrip("\n").split("\t") for line in fh if line.strip()]
    if not rows:
        raise data_error(f"empty table: {path}")
    return rows[0], rows[1:]


def read_features(path):
    header, rows = read_table(path)
    if header[:2] != ["case_id", "label"]:
        raise data_error(f"{path}: not a feature table")
    try:
        ids = [r[0] for r in rows]
        labels = [TOKEN_LABELS[r[1]] for r in rows]
        x = np.array([[float(v) for v in r[2:]] for r in rows], dtype=np.float64)
    except (KeyError, ValueError) as exc:
        raise data_error(f"{path}: malformed row ({exc})") from None
    return ids, labels, x.reshape(len(rows), len(header) - 2)


def features_tsv(ids, labels, x):
    header = ["case_id", "label"] + [f"f{i}" for i in range(x.shape[1])]
    lines = ["\t".join(header)]
    for cid, lab, row in zip(ids, labels, x):
        lines.append("\t".join([cid, LABEL_TOKENS[lab]] + [_fmt(v) for v in row]))
    return "\n".join(lines) + "\n"


def _load_aligned(cfg):
    entries = _read_entries(_out(cfg, "aligned", "manifest.txt"))
    cases = []
    for e in entries:
        c = _load(e)
        cases.append(pipeline.AlignedCase(c.ventilation, c.perfusion, (), (), c.label, e.case_id))
    return cases


# ---------------------------------------------------------------------------
# subcommands

def cmd_generate(cfg, args):
    try:
        cases = generate_dataset(cfg.class_specs(), cfg.class_counts,
                                 derive_seed(cfg.master_seed, "generate"))
    except PhantomError as exc:
        raise data_error(str(exc)) from None
    entries = [save_case(_out(cfg, "cases"), f"case{i:04d}", c.ventilation, c.perfusion, c.label)
               for i, c in enumerate(cases)]
    path = _out(cfg, "manifest.txt")
    write_manifest(path, entries)
    print(f"wrote {len(entries)} cases to {path}")


def cmd_preprocess(cfg, args):
    entries = _read_entries(cfg.manifest or _out(cfg, "manifest.txt"))
    out = []
    for e in entries:
        case = _load(e)
        try:
            prep = pipeline.preprocess_case(case, cfg)
        except (SegmentationError, DegenerateImageError) as exc:
            raise data_error(f"case {e.case_id}: {exc}") from None
        out.append(save_case(_out(cfg, "preprocessed"), e.case_id, prep.ventilation,
                             prep.perfusion, prep.label, prep.ventilation_masks,
                             prep.perfusion_masks))
    write_manifest(_out(cfg, "preprocessed", "manifest.txt"), out)
    print(f"preprocessed {len(out)} cases")


def _single_mask(img, cfg):
    return segment_lung(fshs(img), cfg.segment_level)


def cmd_align(cfg, args):
    if args.reference or args.target:
        if not (args.reference and args.target):
            raise usage_error("--reference and --target must be given together")
        try:
            ref = read_image(_require(args.reference))
            tgt = read_image(_require(args.target))
            result = ga_align(binarize(ref, _single_mask(ref, cfg)),
                              binarize(tgt, _single_mask(tgt, cfg)),
                              cfg.ga_config(derive_seed(cfg.master_seed, "align")))
        except (ImageFormatError, SegmentationError, DegenerateImageError) as exc:
            raise data_error(str(exc)) from None
        t = result.params
        print("\t".join(_fmt(v) for v in (t.scale, t.rotation, t.tx, t.ty, result.fitness)))
        return
    entries = _read_entries(_out(cfg, "preprocessed", "manifest.txt"))
    out, lines = [], ["case_id\tview\tscale\trotation_deg\ttx\tty\tfitness"]
    for i, e in enumerate(entries):
        case = _load(e)
        try:
            vm, qm = load_masks(e)
        except FileNotFoundError as exc:
            raise data_error(f"missing input file: {exc}") from None
        prep = pipeline.PreparedCase(case.ventilation, case.perfusion, vm, qm, case.label, e.case_id)
        al = pipeline.align_case(prep, cfg, i)
        for view, t, f in zip(VIEWS, al.transforms, al.fitness):
            lines.append("\t".join([e.case_id, view] + [_fmt(v) for v in (t.scale, t.rotation,
                                                                          t.tx, t.ty, f)]))
        out.append(save_case(_out(cfg, "aligned"), e.case_id, al.ventilation, al.perfusion,
                             al.label))
    write_manifest(_out(cfg, "aligned", "manifest.txt"), out)
    _write_text(_out(cfg, "alignment.tsv"), "\n".join(lines) + "\n")
    print(f"aligned {len(out)} cases")


def _split(cfg, cases):
    try:
        return evaluation.split_dataset(cases, cfg.train_fraction,
                                        derive_seed(cfg.master_seed, "split"))
    except ValueError as exc:
        raise data_error(str(exc)) from None


def cmd_features(cfg, args):
    cases = _load_aligned(cfg)
    train, val = _split(cfg, cases)
    xtr = pipeline.case_vectors(train, cfg.image_size)
    xva = pipeline.case_vectors(val, cfg.image_size)
    try:
        fm = pipeline.fit_features(xtr, [c.label for c in train], cfg.image_size, cfg.vr,
                                   cfg.n_inputs)
    except ValueError as exc:
        raise CliError(EXIT_NUMERIC, "numeric", str(exc)) from None
    d = _out(cfg, "features")
    _write_text(os.path.join(d, "pca.txt"), fm.pca.dumps())
    _write_text(os.path.join(d, "sof.txt"), fm.sof.dumps())
    _write_text(os.path.join(d, "scaler.txt"), fm.scaler.dumps())
    for name, part, x in (("train.tsv", train, xtr), ("validation.tsv", val, xva)):
        _write_text(os.path.join(d, name), features_tsv([c.case_id for c in part],
                                                        [c.label for c in part], fm.transform(x)))
    print(f"features: {fm.pca.n_components} components, {len(fm.sof.chosen)} inputs, "
          f"{len(train)} train / {len(val)} validation")


def cmd_train(cfg, args):
    ids, labels, x = read_features(args.features or _out(cfg, "features", "train.tsv"))
    try:
        committee = bayesnet.hmc_sample(x, pipeline.targets_for(labels),
                                        cfg.hmc_config(derive_seed(cfg.master_seed, "train")))
    except bayesnet.HmcAbort as exc:
        raise CliError(EXIT_NUMERIC, "numeric", str(exc)) from None
    _write_text(_out(cfg, "model", "committee.txt"), committee.dumps())
    outs = bayesnet.committee_predict_many(committee, x)
    _write_text(_out(cfg, "model", "train_outputs.tsv"), outputs_tsv(ids, labels, outs))
    print(f"committee of {len(committee)} networks, acceptance rate "
          f"{committee.acceptance_rate:.3f}")


def cmd_predict(cfg, args):
    path = _require(args.committee or _out(cfg, "model", "committee.txt"))
    with open(path, encoding="utf-8") as fh:
        try:
            committee = bayesnet.Committee.loads(fh.read())
        except (ValueError, IndexError) as exc:
            raise data_error(f"{path}: {exc}") from None
    ids, labels, x = read_features(args.features or _out(cfg, "features", "validation.tsv"))
    if x.shape[1] != committee.n_in:
        raise data_error(f"feature width {x.shape[1]} does not match committee n_in {committee.n_in}")
    outs = bayesnet.committee_predict_many(committee, x)
    dest = args.output or _out(cfg, "predictions.tsv")
    _write_text(dest, outputs_tsv(ids, labels, outs))
    print(f"wrote {len(outs)} predictions to {dest}")


def read_predictions(path):
    header, rows = read_table(path)
    if header[:len(OUTPUT_HEADER)] != OUTPUT_HEADER:
        raise data_error(f"{path}: not a predictions table")
    try:
        labels = [TOKEN_LABELS[r[1]] for r in rows]
        scores = [float(r[2]) for r in rows]
        preds = [TOKEN_LABELS[r[6]] for r in rows]
    except (KeyError, ValueError, IndexError) as exc:
        raise data_error(f"{path}: malformed row ({exc})") from None
    return labels, scores, preds


METRICS_HEADER = ["class", "sensitivity", "specificity", "ppv", "npv", "accuracy"]


def evaluate_predictions(labels, scores, preds):
    """Per-class metrics table and grouped-positive ROC."""
    lines = ["\t".join(METRICS_HEADER)]
    acc = evaluation.per_class_accuracy(preds, labels, CLASSES)
    for c in CLASSES:
        m = evaluation.metrics(preds, labels, c)
        lines.append("\t".join([LABEL_TOKENS[c]] + [_fmt(v) for v in
                                                    (m.sensitivity, m.specificity, m.ppv, m.npv, acc[c])]))
    positive = [l in pipeline.POSITIVE_CLASSES for l in labels]
    curve = evaluation.roc(scores, positive) if 0 < sum(positive) < len(positive) else None
    return "\n".join(lines) + "\n", curve


def cmd_evaluate(cfg, args):
    labels, scores, preds = read_predictions(args.predictions or _out(cfg, "predictions.tsv"))
    table, curve = evaluate_predictions(labels, scores, preds)
    _write_text(_out(cfg, "metrics.tsv"), table)
    sys.stdout.write(table)
    if curve is None:
        print("auc\tnan")
        return
    _write_text(_out(cfg, "roc.tsv"), curve.to_tsv())
    print(f"auc\t{_fmt(curve.auc)}")


def cmd_sweep(cfg, args):
    cases = _load_aligned(cfg)
    train, val = _split(cfg, cases)
    try:
        results = pipeline.sweep_report(train, val, cfg.sweep_image_sizes, cfg.sweep_n_inputs,
                                        cfg.sweep_vrs, cfg)
    except bayesnet.HmcAbort as exc:
        raise CliError(EXIT_NUMERIC, "numeric", str(exc)) from None
    table = pipeline.format_table([pipeline.result_row(r) for r in results])
    _write_text(_out(cfg, "sweep.tsv"), table)
    summary = pipeline.format_table(pipeline.summarize(results),
                                    ["metric", "stat"] + list(CLASSES))
    _write_text(_out(cfg, "sweep_summary.tsv"), summary)
    sys.stdout.write(table)
    sys.stdout.write(summary)


def cmd_bench_table1(cfg, args):
    lines = ["seed\tparameter\tactual\tfound\terror_pct"]
    worst = 0.0
    for seed in range(args.seeds):
        rows, fit = pipeline.table1_benchmark(seed=derive_seed(cfg.master_seed, "table1", seed))
        for name, actual, found, err in rows:
            lines.append(f"{seed}\t{name}\t{actual:g}\t{found:.4f}\t{err:.2f}")
            worst = max(worst, err)
    text = "\n".join(lines) + "\n"
    _write_text(_out(cfg, "table1.tsv"), text)
    sys.stdout.write(text)
    print(f"worst relative error: {worst:.2f}%")


COMMANDS = {
    "generate": (cmd_generate, "render the synthetic V/Q dataset as P5 files + manifest"),
    "preprocess": (cmd_preprocess, "stretch, de-spike, smooth, segment and clean every view"),
    "align": (cmd_align, "GA-align ventilation onto perfusion (or one --reference/--target pair)"),
    "features": (cmd_features, "split, subtract, PCA + SoF + scaling"),
    "train": (cmd_train, "sample the Bayesian MLP committee with HMC"),
    "predict": (cmd_predict, "committee mean, std and 95 percent interval per case"),
    "evaluate": (cmd_evaluate, "per-class metrics and grouped-positive ROC/AUC"),
    "sweep": (cmd_sweep, "image size x inputs x VR grid with min/max/mean summary"),
    "bench-table1": (cmd_bench_table1, "Shepp-Logan registration benchmark"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise usage_error(message)


def make_parser():
    parser = _Parser(prog="vqpe", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter, epilog=config_help())
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name, (_, helptext) in COMMANDS.items():
        p = sub.add_parser(name, help=helptext, description=helptext, epilog=config_help(),
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("-c", "--config", help="key = value configuration file")
        p.add_argument("-s", "--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one configuration key (wins over the file)")
        p.add_argument("-o", "--out-dir", help="shorthand for --set out_dir=...")
        p.add_argument("--seed", type=int, help="shorthand for --set master_seed=...")
        if name == "align":
            p.add_argument("--reference", help="single-pair mode: image to move")
            p.add_argument("--target", help="single-pair mode: fixed image")
        if name in ("train", "predict"):
            p.add_argument("--features", help="feature table to read")
        if name == "predict":
            p.add_argument("--committee", help="committee file to read")
            p.add_argument("--output", help="predictions file to write")
        if name == "evaluate":
            p.add_argument("--predictions", help="predictions file to read")
        if name == "bench-table1":
            p.add_argument("--seeds", type=int, default=5, help="number of GA seeds")
    return parser


def main(argv=None):
    try:
        parser = make_parser()
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_help()
            return EXIT_USAGE
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        overrides = list(args.set)
        if args.out_dir:
            overrides.append(f"out_dir={args.out_dir}")
        if args.seed is not None:
            overrides.append(f"master_seed={args.seed}")
        cfg = build_config(args.config, overrides)
        COMMANDS[args.command][0](cfg, args)
        return EXIT_OK
    except CliError as exc:
        print(f"vqpe: error[{exc.kind}]: {exc}", file=sys.stderr)
        return exc.code
    except (FileNotFoundError, ImageFormatError, SegmentationError, PhantomError) as exc:
        print(f"vqpe: error[data]: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DegenerateImageError, bayesnet.HmcAbort, FloatingPointError) as exc:
        print(f"vqpe: error[numeric]: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
