#!/usr/bin/env python3
"""
Command-Line Interface

Subcommands:
  generate  write a synthetic labelled corpus
  link      link a corpus and write the clustering
  eval      score a clustering file against gold labels
  sweep     evaluate a grid of thresholds
  bench     time the pipeline on nested mention samples

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
1 any other failure.
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from corpus_io import (
    corpus_statistics,
    read_clustering,
    read_corpus,
    read_mentions,
    write_clustering,
    write_edges,
    write_entities,
    write_json,
    write_mentions,
    write_report,
    write_trace,
)
from evaluation import MODES, linking_evaluator
from knn_index import BACKENDS
from link_coordinator import LinkingCoordinator
from linking_model import ConfigurationError, EvaluationError, IngestionError, gold_labels
from settings import ALGORITHMS, LOG_LEVELS, RunConfig, load_run_config
from synthetic_corpus import SyntheticConfig, generate_synthetic

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_DATA = 3

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
SWEEP_STEP = 0.05


# ==================== ARGUMENT PARSING ====================

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="dotenv-format config file (default: ./.env if present)")
    parser.add_argument("--log-level", choices=LOG_LEVELS, type=str.upper, help="logging level (default INFO)")
    parser.add_argument("--seed", type=int, help="random seed")


def _add_corpus(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--mentions", required=True, help="mentions file (JSON lines)")
    parser.add_argument("--entities", required=True, help="entities file (JSON lines)")
    parser.add_argument("--edges", help="precomputed affinity edges (TSV); bypasses embeddings")


def _add_linker(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--algorithm", choices=ALGORITHMS, help="linking algorithm (default nasty)")
    parser.add_argument("--tau-m", type=float, help="mention-mention threshold")
    parser.add_argument("--tau-e", type=float, help="mention-entity threshold")
    parser.add_argument("--tau-a", type=float, help="assignment threshold (nasty)")
    parser.add_argument("--tau", type=float, help="edge threshold (bottomup)")
    parser.add_argument("--majority-threshold", type=float, help="entity share needed (majority)")
    parser.add_argument("--k", type=int, help="neighbours retrieved per mention and kind (default 4)")
    parser.add_argument("--backend", choices=BACKENDS, help="nearest-neighbour backend (default exact)")
    parser.add_argument("--workers", type=int, help="worker threads (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nasty-linker", description="NIL-aware entity linking")
    subparsers = parser.add_subparsers(dest="command", required=True)

    generate = subparsers.add_parser("generate", help="write a synthetic labelled corpus")
    _add_common(generate)
    generate.add_argument("--out", required=True, help="output directory")
    generate.add_argument("--n-entities", type=int)
    generate.add_argument("--nil-fraction", type=float)
    generate.add_argument("--mean-mentions", type=float, help="mean mentions per entity (geometric)")
    generate.add_argument("--dim", type=int)
    generate.add_argument("--noise-sigma", type=float)
    generate.add_argument("--homonym-fraction", type=float)
    generate.add_argument("--surface-variation", type=float)
    generate.set_defaults(handler=cmd_generate)

    link = subparsers.add_parser("link", help="link a corpus and write the clustering")
    _add_common(link)
    _add_corpus(link)
    _add_linker(link)
    link.add_argument("--out", required=True, help="clustering output file (TSV)")
    link.add_argument("--verbose-trace", action="store_true", help="also write the resolution trace")
    link.add_argument("--trace", help="trace output file (default: <out>.trace.jsonl)")
    link.add_argument("--export-edges", help="write the affinity graph's edges to this TSV file")
    link.add_argument("--timings", help="write the stage timings to this JSON file")
    link.set_defaults(handler=cmd_link)

    evaluate = subparsers.add_parser("eval", help="score a clustering against gold labels")
    _add_common(evaluate)
    evaluate.add_argument("--mentions", required=True, help="mentions file carrying gold labels")
    evaluate.add_argument("--clustering", required=True, help="clustering file written by link")
    evaluate.add_argument("--mode", choices=MODES, help="full-gold (default) or pca")
    evaluate.add_argument("--report", help="write key=value report to this file")
    evaluate.add_argument("--json", help="write the report as JSON to this file")
    evaluate.set_defaults(handler=cmd_eval)

    sweep = subparsers.add_parser("sweep", help="evaluate a grid of thresholds")
    _add_common(sweep)
    _add_corpus(sweep)
    _add_linker(sweep)
    sweep.add_argument("--mode", choices=MODES)
    sweep.add_argument("--grid", action="append", default=[], metavar="NAME=V1,V2,...",
                       help="threshold values to try, e.g. tau_m=0.8,0.85 (repeatable)")
    sweep.add_argument("--out", help="write the result table to this TSV file")
    sweep.set_defaults(handler=cmd_sweep)

    bench = subparsers.add_parser("bench", help="time the pipeline on nested mention samples")
    _add_common(bench)
    _add_corpus(bench)
    _add_linker(bench)
    bench.add_argument("--sizes", required=True, help="comma-separated sample sizes, e.g. 1000,2000,4000")
    bench.add_argument("--out", help="write rows and linear fit to this JSON file")
    bench.set_defaults(handler=cmd_bench)

    return parser


def _run_config(args: argparse.Namespace) -> RunConfig:
    overrides = {
        "algorithm": getattr(args, "algorithm", None),
        "tau_m": getattr(args, "tau_m", None),
        "tau_e": getattr(args, "tau_e", None),
        "tau_a": getattr(args, "tau_a", None),
        "tau": getattr(args, "tau", None),
        "majority_threshold": getattr(args, "majority_threshold", None),
        "k": getattr(args, "k", None),
        "mode": getattr(args, "mode", None),
        "seed": getattr(args, "seed", None),
        "workers": getattr(args, "workers", None),
        "backend": getattr(args, "backend", None),
        "log_level": getattr(args, "log_level", None),
        "mentions_path": getattr(args, "mentions", None),
        "entities_path": getattr(args, "entities", None),
        "edges_path": getattr(args, "edges", None),
        "output_path": getattr(args, "out", None),
        "report_path": getattr(args, "report", None),
        "trace_path": getattr(args, "trace", None),
    }
    return load_run_config(overrides, config_file=args.config)


def _parse_values(text: str, cast, what: str) -> List:
    try:
        return [cast(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigurationError(f"Invalid {what} {text!r}") from e


def parse_grid(entries: Sequence[str], config: RunConfig) -> Dict[str, List[float]]:
    """
    Parse NAME=V1,V2 grid arguments.

    Without any entry, every threshold of the algorithm is tried at its
    configured value and one step below and above it.
    """
    grid = {}
    for entry in entries:
        if "=" not in entry:
            raise ConfigurationError(f"Grid entry {entry!r} must look like NAME=V1,V2")
        name, values = entry.split("=", 1)
        name = name.strip().replace("-", "_")
        grid[name] = _parse_values(values, float, f"values for {name}")
        if not grid[name]:
            raise ConfigurationError(f"Grid entry {entry!r} has no values")
    if not grid:
        for name, value in config.linker_params().items():
            grid[name] = sorted({round(v, 4) for v in (value - SWEEP_STEP, value, value + SWEEP_STEP) if 0.0 <= v <= 1.0})
    return grid


# ==================== COMMANDS ====================

def cmd_generate(args: argparse.Namespace, config: RunConfig) -> int:
    """Generate a synthetic corpus into mentions.jsonl, entities.jsonl and stats.json."""
    options = {
        "n_entities": args.n_entities,
        "nil_fraction": args.nil_fraction,
        "mean_mentions": args.mean_mentions,
        "dim": args.dim,
        "noise_sigma": args.noise_sigma,
        "homonym_fraction": args.homonym_fraction,
        "surface_variation": args.surface_variation,
    }
    synthetic = SyntheticConfig(seed=config.seed, **{k: v for k, v in options.items() if v is not None})
    mentions, entities, _ = generate_synthetic(synthetic)

    out = Path(args.out)
    write_mentions(mentions, out / "mentions.jsonl")
    write_entities(entities, out / "entities.jsonl")
    write_json(corpus_statistics(mentions, entities), out / "stats.json")

    print(f"Wrote {len(mentions):,} mentions and {len(entities):,} entities to {out}")
    return EXIT_OK


def cmd_link(args: argparse.Namespace, config: RunConfig) -> int:
    mentions, entities = read_corpus(config.mentions_path, config.entities_path)
    coordinator = LinkingCoordinator(config)
    result = coordinator.link(mentions, entities)

    write_clustering(result.clustering, result.trace, config.output_path)
    if args.verbose_trace:
        if result.trace is None:
            logger.warning(f"Algorithm {config.algorithm} produces no resolution trace")
        else:
            write_trace(result.trace, config.trace_path or f"{config.output_path}.trace.jsonl")
    if args.export_edges:
        if result.graph is None:
            logger.warning(f"Algorithm {config.algorithm} builds no affinity graph; nothing to export")
        else:
            write_edges(result.graph, args.export_edges)
    if args.timings:
        write_json(result.timings.as_dict(), args.timings)

    timings = result.timings
    print(f"Linked {len(result.clustering.assignment):,} mentions into {len(result.clustering):,} clusters")
    print(f"  graph build: {timings.graph_build:.3f}s")
    print(f"  clustering:  {timings.clustering:.3f}s")
    print(f"  resolution:  {timings.resolution:.3f}s")
    print(f"  total:       {timings.total:.3f}s")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, config: RunConfig) -> int:
    gold = gold_labels(read_mentions(args.mentions))
    clustering, _ = read_clustering(args.clustering)
    report = linking_evaluator.evaluate(clustering, gold, mode=config.mode)

    print(linking_evaluator.render_report(report))
    if config.report_path:
        write_report(report, config.report_path)
    if args.json:
        Path(args.json).parent.mkdir(parents=True, exist_ok=True)
        Path(args.json).write_text(linking_evaluator.export_report_data(report) + "\n", encoding="utf-8")
    return EXIT_OK


def _format_cell(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def cmd_sweep(args: argparse.Namespace, config: RunConfig) -> int:
    mentions, entities = read_corpus(config.mentions_path, config.entities_path)
    gold = gold_labels(mentions)
    grid = parse_grid(args.grid, config)
    rows = LinkingCoordinator(config).sweep(mentions, entities, gold, grid)

    columns = sorted(grid) + ["known_f1", "nil_f1", "micro_f1"]
    lines = ["\t".join(columns)] + ["\t".join(_format_cell(row[c]) for c in columns) for row in rows]
    print("\n".join(lines))
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")

    best = max(rows, key=lambda row: row["micro_f1"])
    print(f"Best micro F1 {best['micro_f1']:.4f} at "
          + ", ".join(f"{name}={best[name]}" for name in sorted(grid)))
    return EXIT_OK


def cmd_bench(args: argparse.Namespace, config: RunConfig) -> int:
    sizes = _parse_values(args.sizes, int, "sample sizes")
    mentions, entities = read_corpus(config.mentions_path, config.entities_path)
    rows, fit = LinkingCoordinator(config).bench(mentions, entities, sizes)

    columns = ["mentions", "graph_build", "clustering", "resolution", "total", "clustering_share"]
    print("\t".join(columns))
    for row in rows:
        print("\t".join(_format_cell(row[c]) for c in columns))
    if fit is not None:
        print(f"Linear fit: slope={fit['slope']:.6g}s/mention intercept={fit['intercept']:.6g}s "
              f"R^2={fit['r_squared']:.4f}")
    if args.out:
        write_json({"rows": rows, "fit": fit}, args.out)
    return EXIT_OK


# ==================== ENTRY POINT ====================

def _configure_logging(args: argparse.Namespace) -> None:
    level = getattr(args, "log_level", None) or os.getenv("NASTY_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format=LOG_FORMAT)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    _configure_logging(args)
    try:
        config = _run_config(args)
        logging.getLogger().setLevel(config.log_level)
        return args.handler(args, config)
    except ConfigurationError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_USAGE
    except (IngestionError, EvaluationError) as e:
        logger.error(f"Data error: {e}")
        return EXIT_DATA
    except FileNotFoundError as e:
        logger.error(f"Missing input: {e}")
        return EXIT_USAGE
    except Exception as e:
        logger.exception(f"{args.command} failed: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
