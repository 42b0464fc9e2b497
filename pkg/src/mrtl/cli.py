"""Command line: train on corpora, synthesize problems, score, sweep.

Exit codes: 0 success, 2 configuration error (bad flags, unreadable paths,
invalid hyperparameters), 3 parse error in an input file, 4 numeric failure
while fitting. Every output file is written to a temporary name and renamed
into place, so a failed run leaves no partial outputs.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import replace

import numpy as np

from .baselines import (
    logreg_predict_proba,
    logreg_train,
    nmf_fit,
    nmf_predict_labels,
)
from .data import (
    CorpusFormatError,
    SynthSpec,
    accuracy,
    generate_synthetic,
    load_corpus,
    normalize_input,
    serialize_corpus,
)
from .engine import (
    Hyperparams,
    InvalidConfigError,
    NumericalDivergenceError,
    ProblemData,
    TraceRecord,
    fit,
    predict,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARSE = 3
EXIT_NUMERIC = 4


def _write_text(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _check_readable(paths) -> None:
    for path in paths:
        if not (os.path.isfile(path) and os.access(path, os.R_OK)):
            raise InvalidConfigError(f"cannot read input file {path}")


def _read_labels(path: str) -> np.ndarray:
    labels = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            s = raw.strip()
            if not s:
                continue
            try:
                labels.append(int(s))
            except ValueError:
                raise CorpusFormatError(
                    lineno, f"malformed label {s!r}, expected an integer"
                ) from None
    if not labels:
        raise CorpusFormatError(1, f"no labels in {path}")
    return np.asarray(labels, dtype=np.int64)


def _manifest(command: str, pairs: dict) -> str:
    lines = [f"command={command}"]
    for key in sorted(pairs):
        lines.append(f"{key}={pairs[key]}")
    return "\n".join(lines) + "\n"


def _run_manifest_pairs(args) -> dict:
    pairs = {
        "source": args.source,
        "targets": ",".join(args.targets),
        "truth": ",".join(args.truths) if args.truths else "",
        "lambda": repr(float(args.lam)),
        "k1": args.k1,
        "k2": args.k2,
        "maxiter": args.maxiter,
        "epsilon": repr(float(args.epsilon)),
        "seed": args.seed,
        "tol": repr(float(args.tol)),
        "verbatim_v_update": args.verbatim_v_update,
        "out": args.out,
    }
    return pairs


def _load_problem(args) -> tuple:
    """Read, validate and normalize all corpora; resolve truth labels.

    Returns (ProblemData, truth) where truth is one label array per target
    (from --truth files, or from labeled target corpora) or None when any
    target lacks labels.
    """
    paths = [args.source] + list(args.targets) + list(args.truths or [])
    _check_readable(paths)
    if args.truths and len(args.truths) != len(args.targets):
        raise InvalidConfigError(
            f"{len(args.truths)} --truth files for {len(args.targets)} targets"
        )

    X_s, Y_s = load_corpus(args.source)
    if Y_s is None:
        raise InvalidConfigError(
            f"source corpus {args.source} must be fully labeled"
        )
    targets = []
    truth = []
    for p, path in enumerate(args.targets):
        X_t, Y_t = load_corpus(path)
        targets.append(normalize_input(X_t))
        if args.truths:
            truth.append(_read_labels(args.truths[p]))
        elif Y_t is not None:
            truth.append(np.argmax(Y_t, axis=1) + 1)
        else:
            truth.append(None)
    if any(t is None for t in truth):
        truth = None
    data = ProblemData(
        X_s=normalize_input(X_s), Y_s=Y_s, targets=tuple(targets)
    )
    if truth is not None:
        for p, t in enumerate(truth):
            if t.shape[0] != data.targets[p].shape[1]:
                raise InvalidConfigError(
                    f"truth for target {p + 1} has {t.shape[0]} labels for "
                    f"{data.targets[p].shape[1]} instances"
                )
    return data, truth


def _hyperparams(args) -> Hyperparams:
    hp = Hyperparams(
        k1=args.k1,
        k2=args.k2,
        lam=args.lam,
        maxiter=args.maxiter,
        epsilon=args.epsilon,
        seed=args.seed,
        convergence_tol=args.tol,
        verbatim_v_update=args.verbatim_v_update,
    )
    hp.validate()
    return hp


def _trace_csv(rows, acc_count: int) -> str:
    header = "iter,objective,log10_objective"
    if acc_count:
        header += "," + ",".join(f"acc_{i + 1}" for i in range(acc_count))
    lines = [header]
    for r in rows:
        log10 = math.log10(r.objective) if r.objective > 0 else float("-inf")
        cells = [str(r.iteration), repr(float(r.objective)), repr(float(log10))]
        if acc_count:
            cells.extend(repr(float(a)) for a in r.per_target_accuracy)
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _predictions_text(labels) -> str:
    return "\n".join(str(int(v)) for v in labels) + "\n"


def _metrics_text(baseline: str, rows, preds, truth) -> str:
    lines = [f"baseline={baseline}", f"iterations={len(rows)}"]
    if rows and rows[-1].objective is not None:
        lines.append(f"final_objective={float(rows[-1].objective)!r}")
    if truth is not None:
        accs = [accuracy(pred, t) for pred, t in zip(preds, truth)]
        for i, a in enumerate(accs):
            lines.append(f"accuracy_{i + 1}={a!r}")
        lines.append(f"average_accuracy={float(np.mean(accs))!r}")
    return "\n".join(lines) + "\n"


def _logreg_init(data, collect_loss=None):
    model = logreg_train(data.X_s, data.Y_s, on_step=collect_loss)
    return model, [logreg_predict_proba(model, X_t) for X_t in data.targets]


def cmd_train(args) -> int:
    if args.k1 >= args.k2:
        raise InvalidConfigError(
            f"k1 must be smaller than k2, got k1={args.k1}, k2={args.k2}"
        )
    hp = _hyperparams(args)
    data, truth = _load_problem(args)
    os.makedirs(args.out, exist_ok=True)
    pairs = _run_manifest_pairs(args)
    pairs["baseline"] = args.baseline
    _write_text(os.path.join(args.out, "manifest.txt"), _manifest("train", pairs))

    if args.baseline == "mrtl":
        _, v_init = _logreg_init(data)
        factors, _, rows = fit(data, hp, v_init, truth=truth)
        preds = [predict(f) for f in factors]
    elif args.baseline == "nmf":
        preds = []
        per_target_err = []
        for X_t in data.targets:
            errs = []
            _, H = nmf_fit(
                X_t,
                k=data.c,
                iters=hp.maxiter,
                seed=hp.seed,
                on_iteration=lambda i, e, errs=errs: errs.append(e),
            )
            preds.append(nmf_predict_labels(H))
            per_target_err.append(errs)
        rows = [
            TraceRecord(iteration=i + 1, objective=float(sum(e[i] for e in per_target_err)))
            for i in range(hp.maxiter)
        ]
    else:  # logreg
        losses = []
        _, v_init = _logreg_init(
            data, collect_loss=lambda i, v, losses=losses: losses.append((i, v))
        )
        preds = [np.argmax(v, axis=1) + 1 for v in v_init]
        rows = [TraceRecord(iteration=i, objective=float(v)) for i, v in losses]

    acc_count = data.P if (truth is not None and args.baseline == "mrtl") else 0
    _write_text(os.path.join(args.out, "trace.csv"), _trace_csv(rows, acc_count))
    for p, labels in enumerate(preds):
        _write_text(
            os.path.join(args.out, f"predictions_{p + 1}.txt"),
            _predictions_text(labels),
        )
    _write_text(
        os.path.join(args.out, "metrics.txt"),
        _metrics_text(args.baseline, rows, preds, truth),
    )
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = SynthSpec(
        M=args.features,
        c=args.classes,
        P=args.num_targets,
        n_s=args.n_source,
        n_t=args.n_target,
        k1=args.k1,
        k2=args.k2,
        noise=args.noise,
        domain_shift=args.domain_shift,
        seed=args.seed,
    )
    data, truth = generate_synthetic(spec)
    os.makedirs(args.out, exist_ok=True)
    pairs = {
        "features": spec.M,
        "classes": spec.c,
        "num_targets": spec.P,
        "n_source": spec.n_s,
        "n_target": spec.n_t,
        "k1": spec.k1,
        "k2": spec.k2,
        "noise": repr(float(spec.noise)),
        "domain_shift": repr(float(spec.domain_shift)),
        "seed": spec.seed,
        "out": args.out,
    }
    _write_text(os.path.join(args.out, "manifest.txt"), _manifest("synth", pairs))
    source_labels = np.argmax(data.Y_s, axis=1) + 1
    _write_text(
        os.path.join(args.out, "source.txt"),
        serialize_corpus(data.X_s, spec.c, labels=source_labels),
    )
    for p in range(spec.P):
        _write_text(
            os.path.join(args.out, f"target_{p + 1}.txt"),
            serialize_corpus(data.targets[p], spec.c),
        )
        _write_text(
            os.path.join(args.out, f"truth_{p + 1}.txt"),
            _predictions_text(truth[p]),
        )
    return EXIT_OK


def cmd_eval(args) -> int:
    _check_readable([args.predictions, args.truth])
    pred = _read_labels(args.predictions)
    true = _read_labels(args.truth)
    if pred.shape[0] != true.shape[0]:
        print(
            f"error: {pred.shape[0]} predictions vs {true.shape[0]} truth labels",
            file=sys.stderr,
        )
        return EXIT_PARSE
    print(f"{100.0 * accuracy(pred, true):.2f}")
    return EXIT_OK


def _parse_sweep_values(text: str, kind: str):
    tokens = [t.strip() for t in text.split(",") if t.strip()]
    if not tokens:
        raise InvalidConfigError(f"empty {kind} sweep list")
    try:
        if kind == "k1":
            return [int(t) for t in tokens]
        return [float(t) for t in tokens]
    except ValueError:
        raise InvalidConfigError(
            f"malformed {kind} sweep list {text!r}"
        ) from None


def cmd_sweep(args) -> int:
    if args.sweep_k1 is not None:
        axis, values = "k1", _parse_sweep_values(args.sweep_k1, "k1")
        for v in values:
            if v < 1 or v > args.k2:
                raise InvalidConfigError(
                    f"swept k1={v} must lie in [1, k2={args.k2}]"
                )
    else:
        axis, values = "lambda", _parse_sweep_values(args.sweep_lambda, "lambda")
        for v in values:
            if v < 0:
                raise InvalidConfigError(f"swept lambda={v} must be nonnegative")
        if args.k1 >= args.k2:
            raise InvalidConfigError(
                f"k1 must be smaller than k2, got k1={args.k1}, k2={args.k2}"
            )

    base = _hyperparams(args) if axis == "lambda" else Hyperparams(
        k1=min(args.k1, args.k2),
        k2=args.k2,
        lam=args.lam,
        maxiter=args.maxiter,
        epsilon=args.epsilon,
        seed=args.seed,
        convergence_tol=args.tol,
        verbatim_v_update=args.verbatim_v_update,
    )
    base.validate()
    data, truth = _load_problem(args)
    if truth is None:
        raise InvalidConfigError(
            "sweep needs true target labels (labeled targets or --truth)"
        )
    os.makedirs(args.out, exist_ok=True)
    pairs = _run_manifest_pairs(args)
    pairs["sweep_axis"] = axis
    pairs["sweep_values"] = ",".join(repr(float(v)) for v in values)
    _write_text(os.path.join(args.out, "manifest.txt"), _manifest("sweep", pairs))

    _, v_init = _logreg_init(data)
    header = (
        "value,"
        + ",".join(f"acc_{p + 1}" for p in range(data.P))
        + ",avg_acc"
    )
    lines = [header]
    for v in values:
        hp = replace(base, lam=float(v)) if axis == "lambda" else replace(base, k1=int(v))
        factors, _, _ = fit(data, hp, v_init, truth=truth)
        accs = [accuracy(predict(f), t) for f, t in zip(factors, truth)]
        cells = [repr(float(v))]
        cells.extend(repr(float(a)) for a in accs)
        cells.append(repr(float(np.mean(accs))))
        lines.append(",".join(cells))
    _write_text(os.path.join(args.out, "sweep.csv"), "\n".join(lines) + "\n")
    return EXIT_OK


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--source", required=True, metavar="PATH",
                   help="labeled source corpus")
    p.add_argument("--target", dest="targets", action="append", required=True,
                   metavar="PATH", help="target corpus (repeat per target)")
    p.add_argument("--truth", dest="truths", action="append", metavar="PATH",
                   help="true target labels, one integer per line "
                        "(repeat per target, evaluation only)")
    p.add_argument("--lambda", dest="lam", type=float, default=10.0,
                   help="weight of the shared-association term (default 10)")
    p.add_argument("--k1", type=int, default=10,
                   help="common feature clusters (default 10)")
    p.add_argument("--k2", type=int, default=50,
                   help="total feature clusters per pair (default 50)")
    p.add_argument("--maxiter", type=int, default=100,
                   help="fitting iterations (default 100)")
    p.add_argument("--epsilon", type=float, default=1e-12,
                   help="denominator floor in the updates (default 1e-12)")
    p.add_argument("--seed", type=int, default=0,
                   help="random seed (default 0)")
    p.add_argument("--tol", type=float, default=0.0,
                   help="early stop on relative objective change (0 disables)")
    p.add_argument("--verbatim-v-update", action="store_true",
                   help="assignment update variant with an unweighted shared "
                        "numerator term")
    p.add_argument("--out", required=True, metavar="DIR",
                   help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mrtl",
        description="Transfer labels from one labeled source corpus to "
                    "multiple unlabeled target corpora by joint nonnegative "
                    "matrix tri-factorization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="fit and write predictions")
    _add_run_flags(p_train)
    p_train.add_argument("--baseline", choices=("mrtl", "nmf", "logreg"),
                         default="mrtl",
                         help="model to run (default mrtl)")
    p_train.set_defaults(func=cmd_train)

    p_synth = sub.add_parser("synth", help="write a synthetic problem")
    p_synth.add_argument("--features", type=int, default=200,
                         help="vocabulary size (default 200)")
    p_synth.add_argument("--classes", type=int, default=2,
                         help="number of classes (default 2)")
    p_synth.add_argument("--num-targets", type=int, default=3,
                         help="number of target corpora (default 3)")
    p_synth.add_argument("--n-source", type=int, default=200,
                         help="source instances (default 200)")
    p_synth.add_argument("--n-target", type=int, default=150,
                         help="instances per target (default 150)")
    p_synth.add_argument("--k1", type=int, default=10,
                         help="true common clusters (default 10)")
    p_synth.add_argument("--k2", type=int, default=50,
                         help="true total clusters (default 50)")
    p_synth.add_argument("--noise", type=float, default=0.0,
                         help="relative noise level (default 0)")
    p_synth.add_argument("--domain-shift", type=float, default=0.0,
                         help="how far the specific clusters' class meaning "
                              "rotates in the targets, in [0, 1] (default 0)")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out", required=True, metavar="DIR")
    p_synth.set_defaults(func=cmd_synth)

    p_eval = sub.add_parser("eval", help="score a predictions file")
    p_eval.add_argument("--predictions", required=True, metavar="PATH")
    p_eval.add_argument("--truth", required=True, metavar="PATH")
    p_eval.set_defaults(func=cmd_eval)

    p_sweep = sub.add_parser("sweep", help="accuracy across one hyperparameter")
    _add_run_flags(p_sweep)
    axis = p_sweep.add_mutually_exclusive_group(required=True)
    axis.add_argument("--sweep-lambda", metavar="V1,V2,...",
                      help="comma-separated lambda values")
    axis.add_argument("--sweep-k1", metavar="V1,V2,...",
                      help="comma-separated k1 values (k1 = k2 allowed)")
    p_sweep.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CorpusFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except NumericalDivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InvalidConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
