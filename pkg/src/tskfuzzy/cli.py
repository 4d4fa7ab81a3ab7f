"""Command-line entry point: ``tskfuzzy <verb> ...``.

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import explain as ex
from .core import predict_proba
from .data import kfold_indices, load_csv, load_table, read_header, stratified_split
from .errors import InvalidConfig, RowOutOfRange, SchemaMismatch, TskError
from .initialization import KMEANS, RANDOM, InitConfig
from .metrics import render, write_fold_metrics
from .persistence import load_model, save_model
from .pipeline import RunConfig, evaluate_rows, fit_rows, prepare, select_features
from .training import L2_ALL, L2_CONSEQUENTS, TrainConfig, export_curves


def _names(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()] if text else []


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in _names(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None, help="flat key=value file; flags override it")
    p.add_argument("--quiet", action="store_true")


def _data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("csv")
    p.add_argument("--label", default="label")
    p.add_argument("--exclude", type=_names, default=[])
    p.add_argument("--bins", type=int, default=16, help="MI bins for continuous features")
    p.add_argument("--binary-columns", type=_names, default=[])
    p.add_argument("--continuous-columns", type=_names, default=[])


def _model_flags(p: argparse.ArgumentParser, rules_flag: bool = True) -> None:
    p.add_argument("--top-features", type=int, default=None)
    if rules_flag:
        p.add_argument("--rules", type=int, default=10)
    p.add_argument("--mfs", type=int, default=3)
    p.add_argument("--binary-sigma", type=float, default=0.1)
    p.add_argument("--mf-init", choices=(KMEANS, RANDOM), default=KMEANS)
    p.add_argument("--kmeans-iters", type=int, default=100)
    p.add_argument("--kmeans-restarts", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.005)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--l2-scope", choices=(L2_ALL, L2_CONSEQUENTS), default=L2_ALL)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--min-delta", type=float, default=1e-5)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--threshold", type=float, default=0.5)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tskfuzzy", description="Gradient-trained TSK fuzzy classifier")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select-features", help="rank features by mutual information")
    _common(p)
    _data_flags(p)
    p.add_argument("--out", default="ranking.csv")
    p.add_argument("--top", type=int, default=10, help="rows of the ranking to print")

    p = sub.add_parser("train", help="fit one model on a stratified train/test split")
    _common(p)
    _data_flags(p)
    _model_flags(p)
    p.add_argument("--model-out", default="model.tsk")
    p.add_argument("--curves-out", default="curves.csv")

    p = sub.add_parser("crossval", help="stratified k-fold evaluation")
    _common(p)
    _data_flags(p)
    _model_flags(p)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--mi-per-fold", action="store_true", help="rank features inside each fold")
    p.add_argument("--out", default="crossval.csv")

    p = sub.add_parser("predict", help="score a CSV with a saved model")
    _common(p)
    p.add_argument("model")
    p.add_argument("csv")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--label", default="label", help="column to drop silently before binding features")
    p.add_argument("--out", default="predictions.csv")

    p = sub.add_parser("explain", help="rule activations, rendered rules and MF snapshots")
    _common(p)
    p.add_argument("model")
    p.add_argument("csv")
    p.add_argument("--rows", type=_ints, default=[0])
    p.add_argument("--label", default="label")
    p.add_argument("--out", default="explain")

    p = sub.add_parser("sweep", help="grid over feature count and rule count")
    _common(p)
    _data_flags(p)
    _model_flags(p, rules_flag=False)
    p.add_argument("--feature-counts", type=_ints, default=[5, 15, 30])
    p.add_argument("--rule-counts", type=_ints, default=[5, 10, 20])
    p.add_argument("--seeds", type=_ints, default=[0])
    p.add_argument("--out", default="sweep.csv")
    return parser


def read_config_file(path) -> dict[str, str]:
    out = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InvalidConfig(f"{path}:{n}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _apply_config(sub: argparse.ArgumentParser, values: dict[str, str]) -> None:
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in values.items():
        action = actions.get(key)
        if action is None or key in ("config", "help") or not action.option_strings:
            raise InvalidConfig(f"unknown config key {key!r}")
        if isinstance(action, argparse._StoreTrueAction):
            if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise InvalidConfig(f"config key {key!r} expects a boolean, got {value!r}")
            defaults[key] = value.lower() in ("true", "1", "yes")
        else:
            # argparse runs string defaults through the option's type converter
            defaults[key] = value
    sub.set_defaults(**defaults)


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        _apply_config(sub, read_config_file(args.config))
        args = parser.parse_args(argv)
    return args


def run_config(args, n_rules: int | None = None, top_features: int | None = None,
               seed: int | None = None) -> RunConfig:
    rules = n_rules if n_rules is not None else args.rules
    seed = args.seed if seed is None else seed
    return RunConfig(
        label=args.label,
        exclude=tuple(args.exclude),
        top_features=top_features if top_features is not None else args.top_features,
        mi_bins=args.bins,
        test_fraction=args.test_fraction,
        threshold=args.threshold,
        binary_columns=tuple(args.binary_columns),
        continuous_columns=tuple(args.continuous_columns),
        seed=seed,
        init=InitConfig(
            mfs_per_feature=args.mfs, n_rules=rules, seed=seed, kmeans_iters=args.kmeans_iters,
            kmeans_restarts=args.kmeans_restarts, binary_sigma=args.binary_sigma, mf_init=args.mf_init,
        ),
        train=TrainConfig(
            learning_rate=args.lr, l2=args.l2, batch_size=args.batch_size, max_epochs=args.epochs,
            patience=args.patience, min_delta=args.min_delta, seed=seed,
            validation_fraction=args.val_fraction, l2_scope=args.l2_scope,
        ),
    )


def _say(args, *msg) -> None:
    if not args.quiet:
        print(*msg)


def _log(args):
    return None if args.quiet else (lambda line: print(line, file=sys.stderr))


def _print_metrics(args, title, report) -> None:
    _say(args, title)
    for k, v in report.as_dict().items():
        _say(args, f"  {k:<9} {render(v)}")


def run_config_data_only(args) -> RunConfig:
    return RunConfig(label=args.label, exclude=tuple(args.exclude), mi_bins=args.bins,
                     binary_columns=tuple(args.binary_columns),
                     continuous_columns=tuple(args.continuous_columns), seed=args.seed)


def cmd_select_features(args) -> int:
    cfg = run_config_data_only(args)
    ds = prepare(load_csv(args.csv, args.label, args.exclude), cfg)
    ranking, _ = select_features(ds, cfg)
    ranking.to_csv(args.out)
    _say(args, f"{'rank':>4}  {'feature':<32} score_nats")
    for i, (name, score) in enumerate(ranking.scores[: args.top], start=1):
        _say(args, f"{i:>4}  {name:<32} {score:.6f}")
    return 0


def cmd_train(args) -> int:
    cfg = run_config(args)
    ds = prepare(load_csv(args.csv, args.label, args.exclude), cfg)
    _, ds = select_features(ds, cfg)
    split = stratified_split(ds.y, cfg.test_fraction, cfg.seed)
    model, report = fit_rows(ds, split.train, cfg, log=_log(args))
    save_model(model, args.model_out)
    export_curves(report, args.curves_out)
    _say(args, f"features: {', '.join(ds.columns)}")
    _say(args, f"epochs run: {report.stopped_epoch}, best epoch: {report.best_epoch}")
    _print_metrics(args, "test metrics:", evaluate_rows(model, ds, split.test))
    return 0


def cmd_crossval(args) -> int:
    if args.folds < 2:
        raise InvalidConfig("--folds must be >= 2")
    cfg = run_config(args)
    full = prepare(load_csv(args.csv, args.label, args.exclude), cfg)
    if not args.mi_per_fold:
        _, full_sel = select_features(full, cfg)
    reports = []
    for f, split in enumerate(kfold_indices(full.y, args.folds, cfg.seed), start=1):
        if args.mi_per_fold:
            ranking, _ = select_features(full.subset(split.train), cfg)
            ds = full.select(ranking.top(cfg.top_features))
        else:
            ds = full_sel
        model, _ = fit_rows(ds, split.train, cfg, log=_log(args))
        rep = evaluate_rows(model, ds, split.test)
        reports.append(rep)
        _say(args, f"fold {f}: " + " ".join(f"{k}={render(v)}" for k, v in rep.as_dict().items()))
    write_fold_metrics(reports, args.out)
    return 0


def _bound_features(args, model) -> np.ndarray:
    """Model features read by name from the CSV, in the model's order."""
    header = read_header(args.csv)
    missing = [n for n in model.feature_names if n not in header]
    if missing:
        raise SchemaMismatch(missing)
    extra = [c for c in header if c not in model.feature_names and c != args.label]
    if extra and not args.quiet:
        warnings.warn(f"ignoring columns not used by the model: {', '.join(extra)}", stacklevel=2)
    columns, X = load_table(args.csv, only=model.feature_names)
    return X[:, [columns.index(n) for n in model.feature_names]]


def cmd_predict(args) -> int:
    model = load_model(args.model)
    Xm = _bound_features(args, model)
    threshold = model.threshold if args.threshold is None else args.threshold
    if not 0 < threshold < 1:
        raise InvalidConfig("threshold must lie in (0, 1)")
    p = predict_proba(model, Xm)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "probability", "label"])
        for i, pi in enumerate(p):
            w.writerow([i, repr(float(pi)), int(pi >= threshold)])
    return 0


def cmd_explain(args) -> int:
    model = load_model(args.model)
    Xm = _bound_features(args, model)
    bad = [r for r in args.rows if not 0 <= r < Xm.shape[0]]
    if bad:
        raise RowOutOfRange(f"rows {bad} outside 0..{Xm.shape[0] - 1}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for r in args.rows:
        b = ex.rule_activations(model, Xm[r], sample_id=r)
        ex.write_activations(b, out / f"activations_row{r}.csv")
        _say(args, f"row {r}: dominant rule R{b.dominant_rule + 1} at {100 * b.dominant_fraction:.2f}%")
    ex.write_rules(ex.render_rules(model), out / "rules.txt")
    snaps = [ex.snapshot_after(model)]
    if model.init_centers is not None:
        snaps.insert(0, ex.snapshot_before(model))
    ex.write_snapshots(snaps, out / "mf_snapshots.csv")
    return 0


def cmd_sweep(args) -> int:
    base = run_config(args, n_rules=1)
    full = prepare(load_csv(args.csv, args.label, args.exclude), base)
    ranking, _ = select_features(full, base)
    rows = []
    for seed in args.seeds:
        # every cell of one seed shares the same split
        split = stratified_split(full.y, base.test_fraction, seed)
        for k in args.feature_counts:
            ds = full.select(ranking.top(k))
            for m in args.rule_counts:
                cfg = run_config(args, n_rules=m, top_features=k, seed=seed)
                t0 = time.perf_counter()
                model, _ = fit_rows(ds, split.train, cfg)
                seconds = time.perf_counter() - t0
                rep = evaluate_rows(model, ds, split.test)
                rows.append((k, m, seed, rep.accuracy, rep.f1, rep.auc, seconds))
                _say(args, f"features={k} rules={m} seed={seed} acc={render(rep.accuracy)} "
                           f"auc={render(rep.auc)} {seconds:.2f}s")
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["features", "rules", "seed", "accuracy", "f1", "auc", "train_seconds"])
        for k, m, seed, acc, f1, auc, sec in rows:
            w.writerow([k, m, seed, repr(acc), repr(f1), repr(auc), f"{sec:.3f}"])
    return 0


COMMANDS = {
    "select-features": cmd_select_features,
    "train": cmd_train,
    "crossval": cmd_crossval,
    "predict": cmd_predict,
    "explain": cmd_explain,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        return COMMANDS[args.command](args)
    except TskError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
