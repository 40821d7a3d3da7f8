"""Command-line entry point for training, evaluation, and the synthetic
graph-recovery experiments.

Exit codes: 0 on success, 1 on usage errors, 2 on runtime or numerical
errors. All outputs land under ``--out-dir`` and every command echoes its
seed and effective configuration into ``run.json`` there.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import data_io, synthetic, training
from .data_io import CsvSchema
from .errors import LatentGraphError
from .graph_learning import embed, soft_adjacency
from .autodiff import as_tensor


class UsageError(Exception):
    """Raised instead of argparse's sys.exit so run() can map it to 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _add_data_flags(p: argparse.ArgumentParser, label_required: bool = True) -> None:
    p.add_argument("--data", required=True, help="input CSV with a header row")
    p.add_argument("--id-col", default="id", help="node id column (default: id)")
    p.add_argument("--label-col", required=label_required, default=None,
                   help="label column name")
    p.add_argument("--features", default="rest",
                   help="comma-separated feature columns, or 'rest' (default)")
    p.add_argument("--quantize-edges", type=_float_list, default=None,
                   help="bin edges to quantize a continuous label column")
    p.add_argument("--no-standardize", action="store_true",
                   help="skip per-column standardization of the features")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=600)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--lr-min", type=float, default=0.0001)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--embed-hidden", type=_int_list, default=[64],
                   help="comma-separated hidden widths of the embedding MLP")
    p.add_argument("--embed-dim", type=int, default=16)
    p.add_argument("--gc-widths", type=_int_list, default=[16, 8],
                   help="comma-separated graph-convolution layer widths")


def build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    common.add_argument("--out-dir", default="out", help="output directory")

    parser = _Parser(prog="latentgraph",
                     description="Differentiable population-graph learning")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("train", parents=[common],
                       help="train on all labeled rows, write history")
    _add_data_flags(p)
    _add_train_flags(p)

    p = sub.add_parser("cross-validate", parents=[common],
                       help="stratified k-fold CV; prints accuracy and AUC")
    _add_data_flags(p)
    _add_train_flags(p)
    p.add_argument("--with-baselines", action="store_true",
                   help="also report ridge and static-kNN-graph baselines")
    p.add_argument("--knn-k", type=int, default=10,
                   help="neighbor count for the kNN-graph baseline")

    p = sub.add_parser("infer", parents=[common],
                       help="train, then predict labels for unseen rows")
    _add_data_flags(p)
    _add_train_flags(p)
    p.add_argument("--test-data", required=True,
                   help="CSV of unseen rows (same feature columns; label optional)")

    p = sub.add_parser("export-graph", parents=[common],
                       help="train, then export the learned adjacency as CSV")
    _add_data_flags(p)
    _add_train_flags(p)

    p = sub.add_parser("synth-recover", parents=[common],
                       help="recover a random graph from neighbor-sum targets")
    p.add_argument("--nodes", type=int, default=10)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--edge-prob", type=float, default=0.3)
    p.add_argument("--iterations", type=int, default=2000)

    p = sub.add_parser("synth-curves", parents=[common],
                       help="recovery error over node-count/dimension grids")
    p.add_argument("--nodes", type=_int_list, default=[5, 10, 20])
    p.add_argument("--dims", type=_int_list, default=[2, 8, 16])
    p.add_argument("--seeds", type=int, default=5, help="seeds per cell")
    p.add_argument("--edge-prob", type=float, default=0.3)
    p.add_argument("--iterations", type=int, default=2000)

    sub.add_parser("gradcheck", parents=[common],
                   help="finite-difference check of every autodiff operation")
    return parser


def _load_dataset(args) -> data_io.TabularDataset:
    schema = CsvSchema(id_col=args.id_col, label_col=args.label_col,
                       feature_cols="rest" if args.features == "rest"
                       else [c.strip() for c in args.features.split(",")])
    dataset = data_io.load_csv(args.data, schema,
                               quantize_edges=args.quantize_edges)
    if not args.no_standardize:
        dataset.X = data_io.standardize(dataset.X)
    return dataset


def _train_config(args) -> training.TrainConfig:
    return training.TrainConfig(
        epochs=args.epochs, lr0=args.lr, lr_min=args.lr_min,
        seed=args.seed, folds=args.folds,
        embed_hidden=tuple(args.embed_hidden), embed_dim=args.embed_dim,
        gc_widths=tuple(args.gc_widths))


def _write_run_info(out_dir: Path, args, extra: Optional[dict] = None) -> None:
    payload = {"command": args.command, "seed": args.seed}
    if extra:
        payload.update(extra)
    data_io.write_metrics_json(out_dir / "run.json", payload)


def _cmd_train(args, out_dir: Path) -> int:
    dataset = _load_dataset(args)
    cfg = _train_config(args)
    params, history = training.train(dataset, cfg)
    metrics = training.evaluate(params, dataset, np.arange(dataset.n_nodes))
    data_io.write_history_csv(out_dir / "history.csv", history)
    data_io.write_metrics_json(out_dir / "metrics.json", {
        "seed": cfg.seed, "epochs": cfg.epochs,
        "train_accuracy": metrics.accuracy, "train_auc": metrics.auc,
        "final_loss": history[-1].loss if history else None,
    })
    _write_run_info(out_dir, args, {"epochs": cfg.epochs})
    print(f"final train accuracy: {metrics.accuracy:.4f}")
    return 0


def _cv_payload(metrics: training.CVMetrics) -> dict:
    return {
        "accuracy_mean": metrics.accuracy_mean,
        "accuracy_std": metrics.accuracy_std,
        "auc_mean": metrics.auc_mean,
        "auc_std": metrics.auc_std,
        "fold_accuracy": [m.accuracy for m in metrics.folds],
        "fold_auc": [m.auc for m in metrics.folds],
    }


def _cmd_cross_validate(args, out_dir: Path) -> int:
    dataset = _load_dataset(args)
    cfg = _train_config(args)
    result = training.cross_validate(dataset, cfg)
    print(result.summary())
    payload = {"seed": cfg.seed, "folds": cfg.folds, "model": _cv_payload(result)}
    if args.with_baselines:
        split = training.stratified_kfold(dataset.y, cfg.folds, cfg.seed)
        ridge = training.linear_baseline(dataset, split)
        knn = training.knn_graph_baseline(dataset, args.knn_k, split, cfg)
        print(f"ridge baseline      {ridge.summary()}")
        print(f"knn-graph baseline  {knn.summary()}")
        payload["ridge_baseline"] = _cv_payload(ridge)
        payload["knn_graph_baseline"] = _cv_payload(knn)
    data_io.write_metrics_json(out_dir / "metrics.json", payload)
    _write_run_info(out_dir, args, {"folds": cfg.folds})
    return 0


def _cmd_infer(args, out_dir: Path) -> int:
    dataset = _load_dataset(args)
    test_schema = CsvSchema(id_col=args.id_col, label_col=None,
                            feature_cols=dataset.feature_names)
    test_set = data_io.load_csv(args.test_data, test_schema)
    test_X = test_set.X
    if not args.no_standardize:
        # reuse the training-set statistics implicitly by re-standardizing
        # the union; training rows dominate the moments
        joint = data_io.standardize(np.vstack([
            data_io.load_csv(args.data, CsvSchema(
                id_col=args.id_col, label_col=args.label_col,
                feature_cols=dataset.feature_names),
                quantize_edges=args.quantize_edges).X, test_set.X]))
        dataset.X = joint[: dataset.n_nodes]
        test_X = joint[dataset.n_nodes:]
    cfg = _train_config(args)
    params, _ = training.train(dataset, cfg)
    preds = training.inductive_infer(params, dataset.X, test_X)
    out_path = out_dir / "predictions.csv"
    with out_path.open("w") as handle:
        handle.write("id,label,class\n")
        for node_id, label in zip(test_set.node_ids, preds):
            handle.write(f"{node_id},{label},{dataset.class_names[label]}\n")
    _write_run_info(out_dir, args, {"n_test": len(test_set.node_ids)})
    print(f"wrote {len(test_set.node_ids)} predictions to {out_path}")
    return 0


def _cmd_export_graph(args, out_dir: Path) -> int:
    dataset = _load_dataset(args)
    cfg = _train_config(args)
    params, _ = training.train(dataset, cfg)
    adjacency = soft_adjacency(
        embed(as_tensor(dataset.X), params.embedder), params.edge).values
    path = out_dir / "adjacency.csv"
    data_io.export_adjacency(adjacency, dataset.node_ids, path)
    _write_run_info(out_dir, args, {"n_nodes": dataset.n_nodes})
    print(f"wrote learned adjacency to {path}")
    return 0


def _cmd_synth_recover(args, out_dir: Path) -> int:
    graph = synthetic.generate_graph(args.nodes, args.edge_prob, args.seed)
    targets = synthetic.neighbor_sum_targets(graph, np.eye(args.nodes))
    cfg = synthetic.RecoveryConfig(embedding_dim=args.dim, seed=args.seed,
                                   iterations=args.iterations)
    result = synthetic.recover_graph(targets, cfg)
    node_ids = [f"n{i}" for i in range(args.nodes)]
    data_io.export_adjacency(graph.adjacency, node_ids,
                             out_dir / "ground_truth.csv")
    data_io.export_adjacency(result.adjacency, node_ids,
                             out_dir / "learned_adjacency.csv")
    _write_run_info(out_dir, args, {
        "nodes": args.nodes, "dim": args.dim,
        "final_mse": result.mse, "edge_agreement": result.agreement})
    print(f"final mse: {result.mse:.6g}  edge agreement: {result.agreement:.4f}")
    return 0


def _cmd_synth_curves(args, out_dir: Path) -> int:
    seeds = list(range(args.seeds))
    base = synthetic.RecoveryConfig(iterations=args.iterations)
    cells = synthetic.recovery_curves(args.nodes, args.dims, seeds,
                                      edge_probability=args.edge_prob,
                                      base_cfg=base)
    path = out_dir / "recovery_curves.csv"
    with path.open("w") as handle:
        handle.write("nodes,dim,seed,final_mse,agreement\n")
        for c in cells:
            handle.write(f"{c.n},{c.embedding_dim},{c.seed},"
                         f"{c.mse:.10g},{c.agreement:.10g}\n")
    for (n, dim), (mean, std) in synthetic.summarize_curves(cells).items():
        print(f"nodes={n:4d} dim={dim:4d}  mse {mean:.4e} +- {std:.1e}")
    _write_run_info(out_dir, args, {"cells": len(cells)})
    print(f"wrote {path}")
    return 0


def _cmd_gradcheck(args, out_dir: Path) -> int:
    from .gradcheck import run_gradcheck
    results = run_gradcheck(seed=args.seed)
    worst_op = max(v for k, v in results.items() if k != "end_to_end")
    for name in sorted(results):
        print(f"{name:32s} {results[name]:.3e}")
    print(f"max per-op relative error:     {worst_op:.3e} (tolerance 1e-4)")
    print(f"end-to-end relative error:     {results['end_to_end']:.3e} (tolerance 1e-3)")
    ok = worst_op < 1e-4 and results["end_to_end"] < 1e-3
    if not ok:
        print("gradcheck FAILED", file=sys.stderr)
        return 2
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "cross-validate": _cmd_cross_validate,
    "infer": _cmd_infer,
    "export-graph": _cmd_export_graph,
    "synth-recover": _cmd_synth_recover,
    "synth-curves": _cmd_synth_curves,
    "gradcheck": _cmd_gradcheck,
}


def run(argv: Sequence[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help paths
        return int(exc.code or 0)
    out_dir = Path(args.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](args, out_dir)
    except LatentGraphError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
