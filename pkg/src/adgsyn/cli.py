"""Command-line entry point: featurize, train, evaluate, predict, benchmark.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .chem import parse_smiles, save_graph_cache
from .config import RunConfig, load_run_config, run_config_from_dict
from .data import (DropReport, ExpressionScaler, GraphCache, iter_batches, load_queries, load_triplets, make_batch,
                   make_folds, read_expression_raw, validate_oneil_counts, write_drop_report)
from .errors import (CheckpointError, ConfigError, DataError, EmptyInput, KOutOfRange, SmilesError,
                     WidthMismatch)
from .metrics import format_table, speedup, timing, write_json
from .model import load_model
from .tensor import AMP_POLICY, FULL_PRECISION, autocast
from .trainer import evaluate, fit_fold, fit, profile_step

log = logging.getLogger("adgsyn")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3


def _on_off(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return value == "on"


def _require(path, what):
    if path is None or not Path(path).is_file():
        raise DataError(f"{what} not found: {path}")
    return Path(path)


# ---------------------------------------------------------------------------
# featurize


def read_smiles_file(path):
    """Non-blank lines as ``(line_number, smiles, name)``; a name may follow the SMILES."""
    entries = []
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        parts = line.split(maxsplit=1)
        if parts:
            entries.append((n, parts[0], parts[1].strip() if len(parts) > 1 else ""))
    return entries


def cmd_featurize(args) -> int:
    path = _require(args.smiles_file, "SMILES file")
    entries = read_smiles_file(path)
    if not entries:
        raise EmptyInput(f"{path} contains no SMILES")
    graphs, errors = [], []
    for line, smiles, name in entries:
        try:
            graphs.append(parse_smiles(smiles))
        except SmilesError as e:
            errors.append({"line": line, "smiles": smiles, "name": name, "error": str(e), "offset": e.offset})
            print(f"{path}:{line}: {e}", file=sys.stderr)
    if errors and not args.skip_bad:
        print(f"{len(errors)} of {len(entries)} SMILES failed to parse; rerun with --skip-bad to keep the rest",
              file=sys.stderr)
        return EXIT_DATA
    save_graph_cache(args.out, graphs, errors)
    print(json.dumps({"graphs": len(graphs), "skipped": len(errors), "out": str(args.out)}))
    return EXIT_OK


# ---------------------------------------------------------------------------
# train


def _apply_overrides(run: RunConfig, args) -> RunConfig:
    data = run.to_dict()
    for key, attr in (("triplets", "triplets"), ("expression", "expression"), ("out_dir", "out")):
        if getattr(args, attr, None) is not None:
            data[key] = str(getattr(args, attr))
    if getattr(args, "expect_oneil", False):
        data["expect_oneil"] = True
    train = {"amp": "amp", "folds": "folds", "jobs": "jobs", "epochs": "epochs", "seed": "seed", "lr": "lr",
             "batch_size": "batch_size", "split_unit": "split_unit"}
    for key, attr in train.items():
        if getattr(args, attr, None) is not None:
            data["train"][key] = getattr(args, attr)
    model = {"cell_dim": "cell_dim", "graph_layer": "graph_layer", "encoder_mode": "encoder_mode"}
    for key, attr in model.items():
        if getattr(args, attr, None) is not None:
            data["model"][key] = getattr(args, attr)
    return run_config_from_dict(data)


def resolve_config(args) -> RunConfig:
    run = load_run_config(args.config) if getattr(args, "config", None) else RunConfig()
    return _apply_overrides(run, args)


def load_run_data(run: RunConfig, report: DropReport | None = None):
    """Raw expression (unstandardized) and labeled triplets for ``run``."""
    expr_path = _require(run.expression, "expression matrix")
    trip_path = _require(run.triplets, "triplet table")
    raw = read_expression_raw(expr_path, run.model.cell_dim)
    triplets = load_triplets(trip_path, known_cells=raw, report=report)
    if run.expect_oneil:
        validate_oneil_counts(triplets)
    return raw, triplets


def cmd_train(args) -> int:
    run = resolve_config(args)
    report = DropReport()
    raw, triplets = load_run_data(run, report)
    out = Path(run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_drop_report(report, out / "drop-report.json")
    result = fit(run, triplets, raw, out_dir=out)
    print(format_table(result.aggregate))
    print(f"run directory: {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate / predict


def _load_for_inference(args):
    model, manifest = load_model(_require(args.checkpoint, "checkpoint"))
    raw = read_expression_raw(_require(args.expression, "expression matrix"), model.config.cell_dim)
    if "expression_mean" in manifest:
        scaler = ExpressionScaler.from_stats(manifest["expression_mean"], manifest["expression_std"])
    else:
        scaler = ExpressionScaler().fit(raw)
    return model, scaler.transform(raw), raw


def _policy(args):
    return AMP_POLICY if getattr(args, "amp", False) else FULL_PRECISION


def cmd_evaluate(args) -> int:
    model, profiles, raw = _load_for_inference(args)
    triplets = load_triplets(_require(args.triplets, "triplet table"), known_cells=raw)
    report = evaluate(model, triplets, GraphCache(), profiles, args.batch_size, _policy(args), args.threshold)
    if args.out:
        write_json(report.as_dict(), args.out)
    print(json.dumps(report.as_dict(), indent=2))
    return EXIT_OK


def _attention_dict(pooled, b, n_x, n_y):
    a_x = pooled.a_x.numpy()[b, :n_x].astype(np.float64)
    a_y = pooled.a_y.numpy()[b, :n_y].astype(np.float64)
    return {"x": a_x.round(6).tolist(), "y": a_y.round(6).tolist()}


def cmd_predict(args) -> int:
    model, profiles, raw = _load_for_inference(args)
    queries = load_queries(_require(args.triplets, "triplet table"), known_cells=raw)
    graphs = GraphCache()
    model.eval()
    sink = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        with autocast(_policy(args)):
            for idx in iter_batches(queries, args.batch_size):
                chunk = [queries[i] for i in idx]
                batch = make_batch(chunk, graphs, profiles)
                out = model(batch)
                logits = out.logits.numpy()
                sizes = batch.graphs.sizes
                for b, t in enumerate(chunk):
                    rec = {"drug_a": t.drug_a, "drug_b": t.drug_b, "cell_line": t.cell_line,
                           "prob_synergy": float(out.prob[b]), "logits": [float(v) for v in logits[b]]}
                    if args.attention:
                        n_x, n_y = int(sizes[b]), int(sizes[len(chunk) + b])
                        rec["attention"] = {"gat": _attention_dict(out.gat_pool, b, n_x, n_y),
                                            "lstm": _attention_dict(out.lstm_pool, b, n_x, n_y)}
                    sink.write(json.dumps(rec) + "\n")
    finally:
        if sink is not sys.stdout:
            sink.close()
    return EXIT_OK


# ---------------------------------------------------------------------------
# benchmark


def _bench_one(path, args):
    run = load_run_config(path)
    run = _apply_overrides(run, argparse.Namespace(triplets=args.triplets, expression=args.expression,
                                                   epochs=args.epochs, folds=1, jobs=1))
    raw, triplets = load_run_data(run)
    k = args.k if args.k is not None else run.train.epochs
    if not 1 <= k <= run.train.epochs:
        raise KOutOfRange(f"K={k} but only {run.train.epochs} epochs are run")
    split = make_folds(triplets, run.train.seed, run.train.n_partitions, run.train.split_unit)
    fold = fit_fold(run, triplets, raw, split, 0)
    train_idx = split.rotation(0)[0]
    profiles = ExpressionScaler().fit(raw, [triplets[i].cell_line for i in train_idx]).transform(raw)
    ledger = profile_step(run, [triplets[i] for i in train_idx], profiles)
    return {"config": str(path), "amp": run.train.amp, "epochs": run.train.epochs, "K": k,
            **timing(fold.timer.times, k), "times": fold.timer.times, "peak_bytes": ledger["peak_bytes"]}


def cmd_benchmark(args) -> int:
    base = _bench_one(args.config_a, args)
    prop = _bench_one(args.config_b, args)
    report = {
        "base": base,
        "proposed": prop,
        "speedup_wallclock": speedup(base["C_train"], prop["C_train"]),
        "speedup_ledger_bytes": base["peak_bytes"] / prop["peak_bytes"],
    }
    if args.out:
        write_json(report, args.out)
    print(json.dumps({k: report[k] for k in ("speedup_wallclock", "speedup_ledger_bytes")}
                     | {"T_base": base["T_train"], "C_base": base["C_train"],
                        "T_proposed": prop["T_train"], "C_proposed": prop["C_train"]}, indent=2))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_run_overrides(p):
    p.add_argument("--config", type=Path, help="run configuration JSON")
    p.add_argument("--triplets", type=Path, help="triplet CSV (overrides the config)")
    p.add_argument("--expression", type=Path, help="expression CSV (overrides the config)")
    p.add_argument("--out", type=Path, help="run directory (overrides out_dir)")
    p.add_argument("--amp", type=_on_off, metavar="{on,off}")
    p.add_argument("--folds", type=int, help="number of fold rotations to run")
    p.add_argument("--jobs", type=int, help="folds trained concurrently")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--split-unit", choices=("triplet", "pair"))
    p.add_argument("--cell-dim", type=int, help="expression width")
    p.add_argument("--graph-layer", choices=("gat", "gcn"))
    p.add_argument("--encoder-mode", choices=("add", "concat"))
    p.add_argument("--expect-oneil", action="store_true", help="require the 13,243 / 38 / 31 dataset counts")


def _add_inference(p):
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--triplets", type=Path, required=True)
    p.add_argument("--expression", type=Path, required=True)
    p.add_argument("--out", type=Path)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--amp", type=_on_off, default=False, metavar="{on,off}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adgsyn", description="Drug-pair synergy classification")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("featurize", help="parse SMILES into a graph cache")
    p.add_argument("smiles_file", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--skip-bad", action="store_true", help="report and skip unparsable lines")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="k-fold training run")
    _add_run_overrides(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on labeled triplets")
    _add_inference(p)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="JSON-lines predictions for triplets")
    _add_inference(p)
    p.add_argument("--attention", action="store_true", help="include per-node attention weights")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("benchmark", help="time two configurations over K epochs")
    p.add_argument("config_a", type=Path, help="baseline configuration")
    p.add_argument("config_b", type=Path, help="proposed configuration")
    p.add_argument("--epochs", type=int, help="epochs to run (default: from each config)")
    p.add_argument("--k", type=int, help="epochs counted in T and C (default: all)")
    p.add_argument("--triplets", type=Path)
    p.add_argument("--expression", type=Path)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_benchmark)
    return parser


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, KOutOfRange)):
        return EXIT_USAGE
    if isinstance(exc, (DataError, SmilesError, WidthMismatch, CheckpointError, FileNotFoundError)):
        return EXIT_DATA
    return EXIT_RUNTIME


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except BrokenPipeError:
        # downstream reader closed early (e.g. piped into head)
        sys.stdout = open(os.devnull, "w")
        return EXIT_OK
    except KeyboardInterrupt:
        print("interrupted; partial results were flushed", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:  # noqa: BLE001 - mapped onto the exit-code contract
        print(f"adgsyn {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        if args.verbose:
            raise
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
