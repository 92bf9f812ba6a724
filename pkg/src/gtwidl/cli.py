"""Command-line interface: ``gtwidl <train|classify|cluster|baseline|align|repro>``.

Exit codes: 0 success, 2 I/O or parse failure, 3 shape/configuration error,
4 lookup failure (unknown sample id or class), 5 numerical failure.  Errors
are reported as one JSON object on standard error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__, baselines, io, tasks
from .core import WarpModel
from .exceptions import InvalidArgumentError, NumericalFailureError, ParseError
from .optimizer import TrainConfig, encode, fit
from .warping import make_basis

logger = logging.getLogger("gtwidl")

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_LOOKUP, EXIT_NUMERIC = 0, 2, 3, 4, 5

REPRO_UCR = ("Trace", "ArrowHead", "DiatomSizeReduction")


class LookupFailure(LookupError):
    pass


# ---------------------------------------------------------------------------
# configuration


def _add_config_flags(p, lam_default=None):
    p.add_argument("--config", help="JSON file with TrainConfig fields (flags take precedence)")
    p.add_argument("--lambda", dest="lam", type=float, default=lam_default, help="l1 weight on the codes")
    p.add_argument("--zeta", type=float, help="eigenvalue proportion for the adaptive atom count")
    p.add_argument("--gamma", type=float, help="boundary slack of the warping paths")
    p.add_argument("--basis", help="semicolon-separated basis families, e.g. 'constant;linear;poly:2'")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--threads", type=int, help="worker threads for per-sample updates")
    p.add_argument("--t1", type=int, help="outer iteration cap (5..50)")
    p.add_argument("--t2", type=int, help="coefficient iteration cap (5..20)")
    p.add_argument("--atom-length", type=int, help="atom length (default: mean training length)")


def _effective_config(args, base: Optional[dict] = None) -> TrainConfig:
    """Built-in defaults < config file < model/base values < flags."""
    values = TrainConfig().to_dict()
    if getattr(args, "config", None):
        with open(args.config) as fh:
            values.update(json.load(fh))
    if base:
        values.update(base)
    flag_map = {"lam": "lam", "gamma": "gamma", "seed": "seed", "t1": "t1", "t2": "t2",
                "threads": "n_jobs", "atom_length": "atom_length"}
    for flag, field in flag_map.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[field] = v
    if getattr(args, "basis", None):
        values["basis"] = [b.strip() for b in args.basis.split(";") if b.strip()]
    return TrainConfig.from_dict(values)


def _emit(doc: dict, fmt: str, path: Optional[str] = None):
    if fmt == "json":
        text = json.dumps(doc, indent=1, sort_keys=True)
    else:
        flat = {k: v for k, v in doc.items() if not isinstance(v, (dict, list))}
        if fmt == "csv":
            text = ",".join(flat) + "\n" + ",".join("" if v is None else str(v) for v in flat.values())
        else:
            text = "\n".join(f"{k}: {v}" for k, v in flat.items())
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


def _labels_of(series):
    return [s.label for s in series]


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args) -> int:
    path = io.resolve_dataset(args.dataset, "TRAIN", args.data_dir)
    data = io.load_dataset(path)
    cfg = _effective_config(args)
    labels = _labels_of(data)
    X = [s.channels for s in data]
    zeta = 0.7 if args.zeta is None else args.zeta
    if args.cv:
        cv = tasks.cross_validate(X, labels, config=cfg, seed=cfg.seed)
        cfg = replace(cfg, lam=cv.lam)
        zeta = cv.zeta
    if args.unsupervised or any(lbl is None for lbl in labels):
        res = fit(X, replace(cfg, n_atoms=args.k or cfg.n_atoms))
        classes = [(None, res.dictionary)]
        reports = [(None, res.report)]
    else:
        models = tasks.train_classifier(X, labels, cfg.lam, zeta, cfg, n_atoms=args.k)
        classes = [(m.label, m.dictionary) for m in models]
        reports = [(m.label, m.report) for m in models]
    meta = {
        "dataset": str(path),
        "zeta": zeta,
        "outer_iterations": {str(l): r.outer_iterations for l, r in reports},
        "final_objective": {str(l): r.objective[-1] for l, r in reports},
        "version": __version__,
    }
    io.save_model(args.out, classes, cfg.to_dict(), meta)
    report_path = args.report or str(Path(args.out).with_suffix(".report.csv"))
    rows = []
    for lbl, rep in reports:
        for it, (obj, mse) in enumerate(zip(rep.objective, rep.mse)):
            rows.append([lbl, it, obj, mse])
    io.write_csv(report_path, ["class", "iteration", "objective", "mse"], rows)
    _emit({"model": args.out, "report": report_path, "classes": len(classes), "config": cfg.to_dict()}, args.format)
    return EXIT_OK


def _load_model_config(path):
    classes, cfg, meta = io.load_model(path)
    return classes, cfg, meta


def cmd_classify(args) -> int:
    classes, cfg_dict, _ = _load_model_config(args.model)
    cfg = _effective_config(args, cfg_dict)
    path = io.resolve_dataset(args.dataset, "TEST", args.data_dir)
    try:
        data = io.load_dataset(path)
    except InvalidArgumentError:
        if Path(path).stat().st_size and Path(path).read_text().strip():
            raise
        data = []
    p = classes[0][1].n_channels
    for s in data:
        if s.n_channels != p:
            raise InvalidArgumentError(f"series {s.id!r} has {s.n_channels} channels, model expects {p}")
    models = [tasks.ClassDictionary(lbl, d, 0) for lbl, d in classes]
    records, correct, scored = [], 0, 0
    labels = [str(l) for l, _ in classes]
    confusion = {t: {q: 0 for q in labels} for t in labels}
    for s in data:
        pred, errs = tasks.classify(s.channels, models, cfg)
        rec = {"id": s.id, "label": s.label, "predicted": pred,
               "errors": {str(l): (None if not np.isfinite(e) else float(e)) for l, e in zip(labels, errs)}}
        records.append(rec)
        if s.label is not None:
            scored += 1
            correct += s.label == pred
            confusion.setdefault(s.label, {q: 0 for q in labels})[str(pred)] += 1
    io.write_jsonl(args.out, records)
    accuracy = correct / scored if scored else None
    if not data:
        logger.warning("test set is empty; accuracy is undefined")
    summary = {"accuracy": accuracy, "n": len(data), "confusion": confusion, "config": cfg.to_dict(),
               "predictions": args.out}
    if args.summary:
        io.write_json(args.summary, summary)
    _emit(summary, args.format)
    return EXIT_OK


def cmd_cluster(args) -> int:
    path = io.resolve_dataset(args.dataset, "TRAIN", args.data_dir)
    data = io.load_dataset(path)
    cfg = _effective_config(args)
    cfg = replace(cfg, n_atoms=args.atoms)
    X = [s.channels for s in data]
    res = tasks.cluster(X, args.k, cfg, max_rounds=args.max_rounds, seed=cfg.seed)
    io.write_jsonl(args.out, [{"id": s.id, "label": s.label, "cluster": int(c)} for s, c in zip(data, res.assignment)])
    labels = _labels_of(data)
    acc = None if any(l is None for l in labels) else baselines.clustering_accuracy(labels, res.assignment)
    _emit({"accuracy": acc, "rounds": res.rounds, "converged": res.converged, "assignments": args.out,
           "config": cfg.to_dict()}, args.format)
    return EXIT_OK


def _univariate(data):
    return [s.channels.reshape(-1) for s in io.splice_channels(data)] if data[0].n_channels > 1 else \
        [s.channels[0] for s in data]


def cmd_baseline(args) -> int:
    train = io.load_dataset(io.resolve_dataset(args.train, "TRAIN", args.data_dir))
    out = {"method": args.method, "task": args.task, "g": args.g, "normalization": "raw"}
    if args.task == "classify":
        test_name = args.test or args.train
        test = io.load_dataset(io.resolve_dataset(test_name, "TEST", args.data_dir))
        Xtr, Xte = _univariate(train), _univariate(test)
        pred = baselines.nn1_classify(Xtr, _labels_of(train), Xte, args.method, args.g)
        out["accuracy"] = float(np.mean([p == s.label for p, s in zip(pred, test)]))
        out["n"] = len(test)
    else:
        X = _univariate(train)
        k = args.k or len(set(_labels_of(train)))
        D = baselines.pairwise_distances(X, args.method, args.g)
        assign = baselines.spectral_cluster(baselines.similarity_matrix(D, args.sigma), k, seed=args.seed or 0)
        out["accuracy"] = baselines.clustering_accuracy(_labels_of(train), assign)
        out["n"] = len(train)
        out["sigma"] = args.sigma
    _emit(out, args.format)
    return EXIT_OK


def cmd_align(args) -> int:
    classes, cfg_dict, _ = _load_model_config(args.model)
    cfg = _effective_config(args, cfg_dict)
    data = io.load_dataset(io.resolve_dataset(args.dataset, args.split, args.data_dir))
    match = [s for s in data if s.id == args.id]
    if not match:
        raise LookupFailure(f"no sample with id {args.id!r}")
    sample = match[0]
    if args.cls is not None:
        pick = [d for l, d in classes if str(l) == args.cls]
        if not pick:
            raise LookupFailure(f"model has no class {args.cls!r}")
        dictionary = pick[0]
    else:
        models = [tasks.ClassDictionary(l, d, 0) for l, d in classes]
        label, _ = tasks.classify(sample.channels, models, cfg)
        dictionary = next(d for l, d in classes if l == label)
    if sample.n_channels != dictionary.n_channels:
        raise InvalidArgumentError("sample and model differ in channel count")
    res = encode(sample.channels, dictionary, cfg, seed=cfg.seed)
    Q = make_basis(len(sample), dictionary.atom_length, cfg.basis)
    path = Q @ res.beta
    recon = WarpModel(Q, res.beta, cfg.gamma).matrix(dictionary.atom_length).apply(dictionary.combine(res.alpha))
    p = sample.n_channels
    header = ["frame", "path"]
    if p == 1:
        header += ["warped_sample", "reconstruction"]
    else:
        header += [f"warped_sample_{j + 1}" for j in range(p)] + [f"reconstruction_{j + 1}" for j in range(p)]
    rows = []
    for t in range(len(sample)):
        rows.append([t + 1, float(path[t])] + [float(v) for v in sample.channels[:, t]] + [float(v) for v in recon[:, t]])
    io.write_csv(args.out, header, rows)
    _emit({"alignment": args.out, "rows": len(rows), "alpha": res.alpha.tolist()}, args.format)
    return EXIT_OK


def cmd_repro(args) -> int:
    """Run the benchmark experiments available under the data root."""
    rows = []
    for name in args.datasets.split(","):
        try:
            tr = io.load_dataset(io.resolve_dataset(name, "TRAIN", args.data_dir))
        except FileNotFoundError:
            rows.append([name, "all", "", "", "missing train split"])
            continue
        try:
            te = io.load_dataset(io.resolve_dataset(name, "TEST", args.data_dir))
        except FileNotFoundError:
            te = None
        Xtr = _univariate(tr)
        ytr = _labels_of(tr)
        if te is not None:
            for method in ("dtw", "ddtw"):
                pred = baselines.nn1_classify(Xtr, ytr, _univariate(te), method)
                rows.append([name, f"{method}-1nn", float(np.mean([p == s.label for p, s in zip(pred, te)])), len(te), ""])
            cfg = _effective_config(args)
            X = [s.channels for s in tr]
            if args.cv:
                cv = tasks.cross_validate(X, ytr, config=cfg, seed=cfg.seed)
                lam, zeta = cv.lam, cv.zeta
            else:
                lam, zeta = cfg.lam, args.zeta or 0.7
            run = replace(cfg, lam=lam)
            models = tasks.train_classifier(X, ytr, lam, zeta, run)
            pred, _ = tasks.predict([s.channels for s in te], models, run)
            acc = float(np.mean([p == s.label for p, s in zip(pred, te)]))
            rows.append([name, "gtwidl-classify", acc, len(te), f"lambda={lam} zeta={zeta}"])
        else:
            rows.append([name, "classify", "", "", "test split unavailable"])
        k = len(set(ytr))
        D = baselines.pairwise_distances(Xtr, "dtw")
        assign = baselines.spectral_cluster(baselines.similarity_matrix(D), k, seed=args.seed or 0)
        rows.append([name, "dtw-spectral", baselines.clustering_accuracy(ytr, assign), len(tr), ""])
        if not args.skip_cluster:
            res = tasks.cluster([s.channels for s in tr], k, _effective_config(args), seed=args.seed or 0)
            rows.append([name, "gtwidl-cluster", baselines.clustering_accuracy(ytr, res.assignment), len(tr),
                         f"rounds={res.rounds}"])
    header = ["dataset", "method", "accuracy", "n", "note"]
    if args.out:
        io.write_csv(args.out, header, rows)
    if args.format == "json":
        print(json.dumps([dict(zip(header, r)) for r in rows], indent=1))
    else:
        for r in rows:
            print(",".join(str(v) for v in r))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gtwidl", description="Warping-invariant dictionary learning")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--data-dir", help="dataset root (default: $GTWIDL_DATA_DIR)")
    parser.add_argument("--format", choices=("json", "csv", "text"), default="json", help="summary format")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="learn per-class dictionaries")
    p.add_argument("dataset")
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--report", help="per-iteration CSV (default: <out>.report.csv)")
    p.add_argument("--k", type=int, help="fixed atom count per class (default: adaptive via --zeta)")
    p.add_argument("--cv", action="store_true", help="choose lambda and zeta by 3-fold cross-validation")
    p.add_argument("--unsupervised", action="store_true", help="fit one dictionary ignoring labels")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="minimum-reconstruction-error classification")
    p.add_argument("model")
    p.add_argument("dataset")
    p.add_argument("--out", required=True, help="predictions JSON-lines path")
    p.add_argument("--summary", help="summary JSON path")
    _add_config_flags(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("cluster", help="iterative dictionary clustering")
    p.add_argument("dataset")
    p.add_argument("--k", type=int, required=True, help="number of clusters")
    p.add_argument("--atoms", type=int, default=5, help="atoms per cluster dictionary")
    p.add_argument("--max-rounds", type=int, default=20)
    p.add_argument("--out", required=True, help="assignments JSON-lines path")
    _add_config_flags(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("baseline", help="DTW-family 1NN or spectral clustering")
    p.add_argument("train")
    p.add_argument("test", nargs="?")
    p.add_argument("--method", choices=baselines.METHODS, default="dtw")
    p.add_argument("--task", choices=("classify", "cluster"), default="classify")
    p.add_argument("--g", type=float, default=0.05, help="WDTW weight steepness")
    p.add_argument("--k", type=int, help="cluster count (default: number of labels)")
    p.add_argument("--sigma", type=float, default=5.0)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("align", help="dump the alignment of one sample")
    p.add_argument("model")
    p.add_argument("dataset")
    p.add_argument("--id", required=True, help="sample id")
    p.add_argument("--split", default="TEST")
    p.add_argument("--class", dest="cls", help="class dictionary to align against (default: best)")
    p.add_argument("--out", required=True, help="CSV path")
    _add_config_flags(p)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("repro", help="benchmark summary table")
    p.add_argument("--datasets", default=",".join(REPRO_UCR))
    p.add_argument("--out", help="CSV path")
    p.add_argument("--cv", action="store_true")
    p.add_argument("--skip-cluster", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=cmd_repro)
    return parser


def _error(kind: str, exc: BaseException, code: int) -> int:
    sys.stderr.write(json.dumps({"kind": kind, "message": str(exc), "exit_code": code}) + "\n")
    return code


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        return _error("io", exc, EXIT_IO)
    except ParseError as exc:
        return _error("io", exc, EXIT_IO)
    except LookupFailure as exc:
        return _error("lookup", exc, EXIT_LOOKUP)
    except NumericalFailureError as exc:
        return _error("numerical", exc, EXIT_NUMERIC)
    except (InvalidArgumentError, ValueError, TypeError) as exc:
        return _error("config", exc, EXIT_CONFIG)
    except OSError as exc:
        return _error("io", exc, EXIT_IO)


if __name__ == "__main__":
    sys.exit(main())
