"""Command-line entry point: ``hgmn <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd
import torch
from pydantic import ValidationError

from .checkpoint import load_checkpoint, save_checkpoint
from .embeddings import EmbeddingKind, load_embeddings, save_embeddings
from .errors import ConfigError, HgmnError
from .fusion import FeatureSource
from .graph import PLANETOID_DATASETS, Graph, load_edge_list, load_labels, load_planetoid, sample_split
from .graphwave import WaveletConfig, role_embeddings
from .hypergraph import HypergraphKind, Normalization, build_hypergraph, degree_histograms, export_incidence
from .manifest import RunManifest
from .metrics import format_report, render_report
from .node2vec import WalkConfig, adjacency_embeddings
from .settings import DATA_DIR, DEFAULT_SEED, LOG_LEVEL, OUTPUT_DIR, TORCH_THREADS
from .trainer import SWEEPABLE, AggregateMetrics, TrainConfig, evaluate, multi_trial, prepare_inputs, sweep

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _add_graph_args(parser: argparse.ArgumentParser, labels: bool = True) -> None:
    source = parser.add_argument_group("graph input")
    source.add_argument("--graph", type=Path, help="Edge list with one 'u v' pair per line.")
    source.add_argument(
        "--planetoid",
        choices=PLANETOID_DATASETS,
        help="Load a Planetoid citation dataset from --data-dir instead of an edge list.",
    )
    source.add_argument(
        "--data-dir",
        type=Path,
        default=DATA_DIR,
        help="Directory for Planetoid files and relative --graph paths (env HGMN_DATA_DIR).",
    )
    source.add_argument("--directed", action="store_true", help="Input lists directed edges; symmetrize them.")
    if labels:
        source.add_argument("--labels", type=Path, help="Two-column 'node label' file for an edge list.")


def _resolve(path: Path, data_dir: Path) -> Path:
    if not path.is_absolute() and not path.exists() and (data_dir / path).exists():
        return data_dir / path
    return path


def _load_graph(args: argparse.Namespace) -> Tuple[Graph, str]:
    if args.planetoid:
        return load_planetoid(args.data_dir, args.planetoid), f"planetoid:{args.planetoid}"
    if args.graph is None:
        raise ConfigError("one of --graph or --planetoid is required")
    path = _resolve(args.graph, args.data_dir)
    g = load_edge_list(path, directed_hint=args.directed)
    labels = getattr(args, "labels", None)
    if labels is not None:
        g = load_labels(_resolve(labels, args.data_dir), g)
    return g, str(path)


def _add_train_args(parser: argparse.ArgumentParser) -> None:
    model = parser.add_argument_group("training")
    model.add_argument("--config", type=Path, help="JSON file with TrainConfig fields; flags override it.")
    model.add_argument("--kind", choices=[k.value for k in HypergraphKind], help="Hypergraph construction.")
    model.add_argument("--no-include-center", action="store_true", help="Leave centre nodes out of link hyperedges.")
    model.add_argument("--normalization", choices=[n.value for n in Normalization])
    model.add_argument(
        "--ablate",
        action="append",
        choices=["residual", "mamba"],
        default=[],
        help="Disable the residual connection or the SSM fusion block; may repeat.",
    )
    model.add_argument("--feature-source", choices=[s.value for s in FeatureSource])
    model.add_argument("--seed", type=int, help=f"Base seed (default {DEFAULT_SEED}).")
    model.add_argument("--lr", type=float, help="Adam learning rate.")
    model.add_argument("--lambda-reg", type=float, help="Squared-L2 coefficient in the loss.")
    model.add_argument("--hidden-dim", type=int, help="Fused width F_h.")
    model.add_argument("--layers", type=int, help="Number of hypergraph convolutions.")
    model.add_argument("--epochs", type=int, help="Maximum training epochs.")
    model.add_argument("--patience", type=int, help="Early-stopping patience in epochs.")
    model.add_argument("--dtype", choices=["float32", "float64"])
    model.add_argument("--role-emb", type=Path, help="Precomputed role embedding file.")
    model.add_argument("--adj-emb", type=Path, help="Precomputed adjacency embedding file.")
    model.add_argument("--trials", type=int, default=1, help="Independent trials with seeds seed..seed+K-1.")
    model.add_argument("--out-dir", type=Path, default=OUTPUT_DIR, help="Where outputs are written.")


def _read_config(path: Optional[Path]) -> Dict[str, Any]:
    if path is None:
        return {}
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return data


def _train_config(args: argparse.Namespace) -> TrainConfig:
    data = _read_config(args.config)
    overrides = {
        "hypergraph_kind": args.kind,
        "normalization": args.normalization,
        "feature_source": args.feature_source,
        "seed": args.seed,
        "lr": args.lr,
        "lambda_reg": args.lambda_reg,
        "hidden_dim": args.hidden_dim,
        "num_layers": args.layers,
        "max_epochs": args.epochs,
        "patience": args.patience,
        "dtype": args.dtype,
        "role_path": args.role_emb,
        "adjacency_path": args.adj_emb,
    }
    data.update({key: value for key, value in overrides.items() if value is not None})
    if args.no_include_center:
        data["include_center"] = False
    if "residual" in args.ablate:
        data["disable_residual"] = True
    if "mamba" in args.ablate:
        data["disable_mamba"] = True
    return TrainConfig.from_mapping(data)


def _parse_number(token: str) -> float | int:
    token = token.strip()
    try:
        return int(token)
    except ValueError:
        try:
            return float(token)
        except ValueError as exc:
            raise ConfigError(f"sweep value {token!r} is not a number") from exc


def _parse_sweep(expr: str) -> Tuple[str, List[float]]:
    param, sep, values = expr.partition("=")
    if not sep or not values:
        raise ConfigError(f"sweep must look like 'lr=0.3,0.03', got {expr!r}")
    param = param.strip()
    if param not in SWEEPABLE:
        raise ConfigError(f"unknown sweep parameter {param!r}; expected one of {sorted(SWEEPABLE)}")
    return param, [_parse_number(token) for token in values.split(",")]


def _manifest(command: str, argv: Sequence[str], g: Optional[Graph] = None, source: str = "") -> RunManifest:
    manifest = RunManifest(command=command, argv=list(argv))
    if g is not None:
        manifest.describe_graph(g, source)
    return manifest


def cmd_build_hypergraph(args: argparse.Namespace) -> int:
    g, source = _load_graph(args)
    h = build_hypergraph(g, args.kind, include_center=not args.no_include_center)
    prefix = args.out or args.out_dir / f"hypergraph_{h.kind.value}"
    manifest_path = prefix.with_name(prefix.name + ".manifest.json")
    rows_path, header_path = export_incidence(
        h, prefix, include_center=not args.no_include_center, manifest=str(manifest_path)
    )
    manifest = _manifest("build-hypergraph", args.argv, g, source)
    manifest.config = {"kind": h.kind.value, "include_center": not args.no_include_center}
    manifest.outputs = {"incidence": str(rows_path), "header": str(header_path)}
    manifest.write(manifest_path)

    histograms = degree_histograms(h)
    print(f"N={h.num_nodes} N_E={h.num_edges}")
    print(f"node degrees: {json.dumps(histograms['node_degree'])}")
    print(f"hyperedge sizes: {json.dumps(histograms['edge_degree'])}")
    return EXIT_OK


def cmd_embed(args: argparse.Namespace) -> int:
    if not (args.role or args.adj):
        raise ConfigError("choose at least one of --role and --adj")
    g, source = _load_graph(args)
    manifest = _manifest("embed", args.argv, g, source)
    manifest.seed = args.seed
    args.out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = args.out_dir / "manifest.json"
    try:
        if args.role:
            wavelet = WaveletConfig(scales=args.scale or None, num_sample_points=args.dim_points)
            started = time.perf_counter()
            role = role_embeddings(g, wavelet)
            manifest.timings["role"] = time.perf_counter() - started
            manifest.config["wavelet"] = wavelet.model_dump(mode="json")
            manifest.outputs["role"] = str(save_embeddings(role, args.out_dir / "role.emb"))
        if args.adj:
            walk = WalkConfig(
                dim=args.adj_dim,
                seed=args.seed,
                p=args.p,
                q=args.q,
                walk_len=args.walk_len,
                walks_per_node=args.walks_per_node,
                window=args.window,
                epochs=args.skipgram_epochs,
            )
            started = time.perf_counter()
            adjacency = adjacency_embeddings(g, walk)
            manifest.timings["adjacency"] = time.perf_counter() - started
            manifest.config["walk"] = walk.model_dump(mode="json")
            manifest.outputs["adjacency"] = str(save_embeddings(adjacency, args.out_dir / "adjacency.emb"))
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    manifest.write(manifest_path)
    for name, path in manifest.outputs.items():
        print(f"{name}: {path}")
    return EXIT_OK


def _write_run(
    out_dir: Path, result: AggregateMetrics, cfg: TrainConfig, manifest: RunManifest, model=None
) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / "metrics.json"
    metrics_path.write_text(result.model_dump_json(indent=2), encoding="utf-8")
    trials = pd.DataFrame(
        [
            {
                "seed": run.seed,
                "train_f1": run.train_f1,
                "val_f1": run.val_f1,
                "test_f1": run.test_f1,
                "best_epoch": run.best_epoch,
                "epochs_run": run.epochs_run,
            }
            for run in result.runs
        ],
        columns=["seed", "train_f1", "val_f1", "test_f1", "best_epoch", "epochs_run"],
    )
    trials_path = out_dir / "trials.csv"
    trials.to_csv(trials_path, index=False)
    manifest.outputs.update({"metrics": str(metrics_path), "trials": str(trials_path)})
    if model is not None:
        # The stored seed picks the split that the saved trial trained on.
        checkpoint = save_checkpoint(
            model,
            out_dir / "checkpoint.pt",
            config=cfg.with_updates(seed=result.best_seed).model_dump(mode="json"),
            extra={"manifest": str(out_dir / "manifest.json"), "label": result.label},
        )
        manifest.outputs["checkpoint"] = str(checkpoint)
    manifest.timings["runs"] = sum(run.wall_time for run in result.runs)


def _run_sweep(
    args: argparse.Namespace, g: Graph, cfg: TrainConfig, manifest: RunManifest, param: str, values: List[float]
) -> int:
    table = sweep(g, cfg, param, values, trials=args.trials)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    sweep_path = args.out_dir / "sweep.csv"
    table.to_csv(sweep_path, index=False)
    manifest.outputs["sweep"] = str(sweep_path)
    manifest.config.update({"sweep_param": param, "sweep_values": values})
    manifest.write(args.out_dir / "manifest.json")
    print(table.to_string(index=False))
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _train_config(args)
    g, source = _load_graph(args)
    manifest = _manifest("train", args.argv, g, source)
    manifest.seed = cfg.seed
    manifest.config = cfg.model_dump(mode="json")
    if args.sweep:
        param, values = _parse_sweep(args.sweep)
        return _run_sweep(args, g, cfg, manifest, param, values)

    started = time.perf_counter()
    result, best_model = multi_trial(g, cfg, args.trials)
    manifest.timings["total"] = time.perf_counter() - started
    _write_run(args.out_dir, result, cfg, manifest, best_model)
    manifest.write(args.out_dir / "manifest.json")
    if not result.runs:
        print(f"{result.label}: all {result.trials} trials diverged", file=sys.stderr)
        return EXIT_RUNTIME
    print(format_report(render_report([(result.label, result.scores())])))
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _train_config(args)
    g, source = _load_graph(args)
    manifest = _manifest("sweep", args.argv, g, source)
    manifest.seed = cfg.seed
    manifest.config = cfg.model_dump(mode="json")
    param, values = _parse_sweep(f"{args.param}={args.values}")
    return _run_sweep(args, g, cfg, manifest, param, values)


def cmd_evaluate(args: argparse.Namespace) -> int:
    model, stored = load_checkpoint(args.checkpoint)
    cfg = TrainConfig.from_mapping(stored)
    g, _ = _load_graph(args)
    role = load_embeddings(args.role_emb, EmbeddingKind.ROLE) if args.role_emb else None
    adjacency = load_embeddings(args.adj_emb, EmbeddingKind.ADJACENCY) if args.adj_emb else None
    inputs = prepare_inputs(g, cfg, role=role, adjacency=adjacency)
    seed = cfg.seed if args.split_seed is None else args.split_seed
    scores = evaluate(model, inputs, g, sample_split(g, cfg.split_spec(seed)))
    payload = {"checkpoint": str(args.checkpoint), "split_seed": seed, "micro_f1": scores}
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    print(json.dumps(payload, indent=2))
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    rows = []
    for path in args.metrics:
        result = AggregateMetrics.model_validate_json(Path(path).read_text(encoding="utf-8"))
        rows.append((result.label, result.scores()))
    baselines = None
    if args.baselines is not None:
        raw = _read_config(args.baselines)
        try:
            baselines = {name: (float(pair[0]), float(pair[1])) for name, pair in raw.items()}
        except (TypeError, ValueError, IndexError) as exc:
            raise ConfigError(f"{args.baselines}: expected name -> [mean %, max %] pairs") from exc
    table = render_report(rows, baselines)
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        table.to_csv(args.out, index=False)
    print(format_report(table))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hgmn", description="Hypergraph node classification with SSM fusion.")
    sub = parser.add_subparsers(dest="command", required=True)

    build = sub.add_parser("build-hypergraph", help="Build and export a hypergraph incidence matrix.")
    _add_graph_args(build, labels=False)
    build.add_argument("--kind", choices=[k.value for k in HypergraphKind], default=HypergraphKind.LINK.value)
    build.add_argument("--no-include-center", action="store_true", help="Leave centre nodes out of link hyperedges.")
    build.add_argument("--out", type=Path, help="Output prefix; writes <prefix>.tsv and <prefix>.json.")
    build.add_argument("--out-dir", type=Path, default=OUTPUT_DIR, help="Directory used when --out is absent.")
    build.set_defaults(handler=cmd_build_hypergraph)

    embed = sub.add_parser("embed", help="Generate role and/or adjacency embeddings.")
    _add_graph_args(embed, labels=False)
    embed.add_argument("--role", action="store_true", help="Compute heat-wavelet role embeddings.")
    embed.add_argument("--adj", action="store_true", help="Compute random-walk adjacency embeddings.")
    embed.add_argument("--dim-points", type=int, default=25, help="Characteristic-function sample points T.")
    embed.add_argument("--scale", type=float, action="append", help="Heat-kernel scale; may repeat.")
    embed.add_argument("--seed", type=int, default=DEFAULT_SEED, help="Walk and skip-gram seed.")
    embed.add_argument("--adj-dim", type=int, default=128, help="Adjacency embedding width.")
    embed.add_argument("--p", type=float, default=1.0, help="Return parameter.")
    embed.add_argument("--q", type=float, default=1.0, help="In-out parameter.")
    embed.add_argument("--walk-len", type=int, default=80)
    embed.add_argument("--walks-per-node", type=int, default=10)
    embed.add_argument("--window", type=int, default=10)
    embed.add_argument("--skipgram-epochs", type=int, default=5)
    embed.add_argument("--out-dir", type=Path, default=OUTPUT_DIR)
    embed.set_defaults(handler=cmd_embed)

    train = sub.add_parser("train", help="Train one or more trials and write metrics and a checkpoint.")
    _add_graph_args(train)
    _add_train_args(train)
    train.add_argument("--sweep", help="Sweep one parameter instead, e.g. 'lr=0.3,0.03,0.003'.")
    train.set_defaults(handler=cmd_train)

    sweep_parser = sub.add_parser("sweep", help="Run trials for each value of one parameter.")
    _add_graph_args(sweep_parser)
    _add_train_args(sweep_parser)
    sweep_parser.add_argument("--param", required=True, choices=sorted(SWEEPABLE))
    sweep_parser.add_argument("--values", required=True, help="Comma-separated values.")
    sweep_parser.set_defaults(handler=cmd_sweep)

    evaluate_parser = sub.add_parser("evaluate", help="Score a saved checkpoint on a split.")
    _add_graph_args(evaluate_parser)
    evaluate_parser.add_argument("--checkpoint", type=Path, required=True)
    evaluate_parser.add_argument("--split-seed", type=int, help="Split seed (default: the run seed).")
    evaluate_parser.add_argument("--role-emb", type=Path, help="Precomputed role embedding file.")
    evaluate_parser.add_argument("--adj-emb", type=Path, help="Precomputed adjacency embedding file.")
    evaluate_parser.add_argument("--out", type=Path, help="Write the scores as JSON.")
    evaluate_parser.set_defaults(handler=cmd_evaluate)

    report = sub.add_parser("report", help="Tabulate metrics files against baselines.")
    report.add_argument("metrics", nargs="+", type=Path, help="metrics.json files from train runs.")
    report.add_argument("--baselines", type=Path, help="JSON object: name -> [mean %%, max %%].")
    report.add_argument("--out", type=Path, help="Write the table as CSV.")
    report.set_defaults(handler=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=LOG_LEVEL)
    torch.set_num_threads(TORCH_THREADS)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"hgmn: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    # ValueError also covers pydantic ValidationError from files read back in.
    except (HgmnError, OSError, ValueError) as exc:
        logger.debug("command failed", exc_info=True)
        print(f"hgmn: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def run() -> None:
    sys.exit(main())
