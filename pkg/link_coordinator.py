"""
Link Coordinator

Runs linking pipelines end to end (graph construction, clustering, conflict
resolution, evaluation) with a wall-clock breakdown per stage. Also drives
threshold sweeps, scaling benchmarks and side-by-side algorithm comparisons.
"""

import itertools
import logging
import timeit
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from baselines import bottom_up_clustering, exact_match, majority_clustering, top_entity
from corpus_io import read_edges
from evaluation import EvalReport, evaluate_clustering
from knn_index import build_graph, load_graph_from_edges
from linking_model import (
    ENTITY,
    AffinityEdge,
    AffinityGraph,
    Clustering,
    ConfigurationError,
    Entity,
    GoldLabel,
    Mention,
    MentionId,
)
from nasty_linker import ResolutionTrace, init_clusters, prepare_graph, resolve_conflicts
from settings import ALGORITHMS, RunConfig

logger = logging.getLogger(__name__)


@dataclass
class StageTimings:
    """Wall-clock seconds per pipeline stage."""
    graph_build: float = 0.0
    clustering: float = 0.0
    resolution: float = 0.0
    total: float = 0.0

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


@dataclass
class LinkResult:
    clustering: Clustering
    timings: StageTimings
    graph: Optional[AffinityGraph] = None
    trace: Optional[ResolutionTrace] = None
    report: Optional[EvalReport] = None


def run_linker(config: RunConfig,
               mentions: Sequence[Mention],
               entities: Sequence[Entity],
               graph: Optional[AffinityGraph],
               timings: Optional[StageTimings] = None) -> Tuple[Clustering, Optional[ResolutionTrace]]:
    """
    Run the configured algorithm on a prepared graph.

    Only the NASTy linker produces a resolution trace; the baselines have no
    separate resolution stage.
    """
    timings = timings or StageTimings()
    if config.needs_graph and graph is None:
        raise ConfigurationError(f"Algorithm {config.algorithm} needs an affinity graph")

    start = timeit.default_timer()
    if config.algorithm == "nasty":
        thresholds = config.thresholds()
        initial = init_clusters(graph, thresholds)
        timings.clustering = timeit.default_timer() - start
        start = timeit.default_timer()
        clustering, trace = resolve_conflicts(initial, graph, thresholds, workers=config.workers)
        timings.resolution = timeit.default_timer() - start
        return clustering, trace

    if config.algorithm == "majority":
        clustering = majority_clustering(graph, config.majority_config(), workers=config.workers)
    elif config.algorithm == "bottomup":
        clustering = bottom_up_clustering(graph, config.bottom_up_config())
    elif config.algorithm == "topentity":
        clustering = top_entity(graph, config.tau_e)
    else:
        clustering = exact_match(mentions, entities)
    timings.clustering = timeit.default_timer() - start
    return clustering, None


def restrict_edges(edges: Iterable[AffinityEdge], mention_ids: Iterable[MentionId]) -> List[AffinityEdge]:
    """Edges whose mention endpoints all lie in mention_ids; entity targets are kept."""
    keep = set(mention_ids)
    return [edge for edge in edges
            if edge.source in keep and (edge.target_kind == ENTITY or edge.target in keep)]


def fit_linear(xs: Sequence[float], ys: Sequence[float]) -> Optional[Dict[str, float]]:
    """Least-squares line through (xs, ys) with its coefficient of determination."""
    if len(xs) < 2 or len(set(xs)) < 2:
        return None
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.sum((y - (slope * x + intercept)) ** 2))
    spread = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 - residual / spread if spread > 0 else 1.0
    return {"slope": float(slope), "intercept": float(intercept), "r_squared": r_squared}


class LinkingCoordinator:
    """Coordinates graph construction, linking and evaluation for one RunConfig."""

    def __init__(self, config: Optional[RunConfig] = None):
        self.config = config or RunConfig()

    def build_graph(self,
                    mentions: Sequence[Mention],
                    entities: Sequence[Entity],
                    edges: Optional[Sequence[AffinityEdge]] = None) -> AffinityGraph:
        """
        Affinity graph from an edge file if configured, otherwise from embeddings.

        Args:
            mentions: Mentions to link
            entities: Known-entity catalog
            edges: Edges already read from the configured file, used instead of reading it again

        Raises:
            ConfigurationError: no edge file and a mention or entity lacks an embedding
        """
        if self.config.edges_path:
            if edges is None:
                logger.info(f"Loading affinity edges from {self.config.edges_path}...")
                edges = read_edges(self.config.edges_path)
            graph = load_graph_from_edges(edges, k=self.config.k,
                                          entity_ids=[e.id for e in entities])
        else:
            missing = next((r for r in list(mentions) + list(entities) if r.embedding is None), None)
            if missing is not None:
                raise ConfigurationError(f"{missing.id} has no embedding; supply embeddings or an edge file")
            logger.info("Building affinity graph from embeddings...")
            graph = build_graph(mentions, entities, self.config.index_config())
        return prepare_graph(mentions, entities, graph)

    def link(self,
             mentions: Sequence[Mention],
             entities: Sequence[Entity],
             graph: Optional[AffinityGraph] = None) -> LinkResult:
        """
        Run the full linking pipeline.

        Args:
            mentions: Mentions to link
            entities: Known-entity catalog
            graph: Prebuilt affinity graph; built from the config when omitted

        Returns:
            LinkResult with clustering, trace (NASTy only) and stage timings
        """
        logger.info(f"Starting {self.config.algorithm} linking of {len(mentions):,} mentions")
        timings = StageTimings()
        started = timeit.default_timer()

        # 1. Affinity graph
        if self.config.needs_graph:
            if graph is None:
                start = timeit.default_timer()
                graph = self.build_graph(mentions, entities)
                timings.graph_build = timeit.default_timer() - start
            else:
                graph = prepare_graph(mentions, entities, graph)

        # 2-3. Clustering and conflict resolution
        clustering, trace = run_linker(self.config, mentions, entities, graph, timings)
        timings.total = timeit.default_timer() - started

        logger.info(f"Linking complete in {timings.total:.3f}s "
                    f"(graph {timings.graph_build:.3f}s, clustering {timings.clustering:.3f}s, "
                    f"resolution {timings.resolution:.3f}s)")
        return LinkResult(clustering=clustering, timings=timings, graph=graph, trace=trace)

    def evaluate(self, result: LinkResult, gold: Mapping[MentionId, GoldLabel]) -> EvalReport:
        result.report = evaluate_clustering(result.clustering, gold, mode=self.config.mode)
        return result.report

    def sweep(self,
              mentions: Sequence[Mention],
              entities: Sequence[Entity],
              gold: Mapping[MentionId, GoldLabel],
              grid: Mapping[str, Sequence[float]],
              graph: Optional[AffinityGraph] = None) -> List[Dict[str, float]]:
        """
        Evaluate every threshold combination of a grid.

        The graph is built once and shared by all combinations.

        Args:
            grid: Threshold name -> values, e.g. {"tau_m": [0.8, 0.85], "tau_a": [0.7]}

        Returns:
            One row per combination with the thresholds and known/NIL/micro F1
        """
        if not grid:
            raise ConfigurationError("Sweep grid is empty")
        names = sorted(grid)
        unused = [n for n in names if n not in self.config.linker_params()]
        if unused:
            raise ConfigurationError(f"{self.config.algorithm} does not use threshold(s) {', '.join(unused)}")

        if self.config.needs_graph:
            graph = self.build_graph(mentions, entities) if graph is None else prepare_graph(mentions, entities, graph)

        combinations = list(itertools.product(*(grid[n] for n in names)))
        logger.info(f"Sweeping {len(combinations):,} threshold combinations for {self.config.algorithm}...")
        rows = []
        for values in tqdm(combinations, desc="Sweep", unit="run"):
            params = dict(zip(names, values))
            config = self.config.with_overrides(**params)
            clustering, _ = run_linker(config, mentions, entities, graph)
            report = evaluate_clustering(clustering, gold, mode=config.mode)
            row = dict(params)
            row["known_f1"] = report.known.f1
            row["nil_f1"] = report.nil.f1 if report.nil is not None else None
            row["micro_f1"] = report.micro.f1
            rows.append(row)
        return rows

    def bench(self,
              mentions: Sequence[Mention],
              entities: Sequence[Entity],
              sample_sizes: Sequence[int]) -> Tuple[List[Dict[str, float]], Optional[Dict[str, float]]]:
        """
        Time the pipeline on nested mention samples.

        Samples are prefixes of one seeded permutation, so each sample
        contains the smaller ones. With an edge file, the file is read once
        and each sample keeps only the edges between its own mentions and
        the catalog; the graph-build timing covers that restriction.

        Returns:
            (one row per sample size, linear fit of total runtime on mention count)
        """
        sizes = sorted(set(int(s) for s in sample_sizes))
        if not sizes or sizes[0] < 1:
            raise ConfigurationError("Sample sizes must be positive integers")
        if sizes[-1] > len(mentions):
            raise ConfigurationError(f"Sample size {sizes[-1]:,} exceeds the corpus ({len(mentions):,} mentions)")

        all_edges = None
        if self.config.needs_graph and self.config.edges_path:
            logger.info(f"Loading affinity edges from {self.config.edges_path}...")
            all_edges = read_edges(self.config.edges_path)

        order = np.random.default_rng(self.config.seed).permutation(len(mentions))
        rows = []
        for size in tqdm(sizes, desc="Bench", unit="sample"):
            sample = [mentions[int(i)] for i in order[:size]]
            if all_edges is None:
                result = self.link(sample, entities)
            else:
                start = timeit.default_timer()
                graph = self.build_graph(sample, entities, restrict_edges(all_edges, [m.id for m in sample]))
                elapsed = timeit.default_timer() - start
                result = self.link(sample, entities, graph=graph)
                result.timings.graph_build = elapsed
                result.timings.total += elapsed
            timings = result.timings
            row = {"mentions": size, **timings.as_dict()}
            row["clustering_share"] = (timings.clustering + timings.resolution) / timings.total if timings.total else 0.0
            rows.append(row)

        fit = fit_linear([r["mentions"] for r in rows], [r["total"] for r in rows])
        if fit is not None:
            logger.info(f"Runtime fit: {fit['slope'] * 1000:.4f} ms per mention, R^2={fit['r_squared']:.4f}")
        return rows, fit


def compare_algorithms(mentions: Sequence[Mention],
                       entities: Sequence[Entity],
                       gold: Mapping[MentionId, GoldLabel],
                       graph: Optional[AffinityGraph] = None,
                       config: Optional[RunConfig] = None,
                       algorithms: Sequence[str] = ALGORITHMS) -> Dict[str, float]:
    """
    Micro-F1 of several algorithms, each at its default thresholds, on one shared graph.

    Returns:
        {algorithm: micro F1}
    """
    config = config or RunConfig()
    if graph is None and any(a != "exactmatch" for a in algorithms):
        graph = LinkingCoordinator(config).build_graph(mentions, entities)

    scores = {}
    for algorithm in algorithms:
        coordinator = LinkingCoordinator(config.with_overrides(algorithm=algorithm))
        result = coordinator.link(mentions, entities, graph=graph)
        scores[algorithm] = coordinator.evaluate(result, gold).micro.f1
        logger.info(f"{algorithm}: micro F1 {scores[algorithm]:.4f}")
    return scores


# Convenience function
def link_corpus(mentions: Sequence[Mention],
                entities: Sequence[Entity],
                config: Optional[RunConfig] = None) -> LinkResult:
    """Run one linking pass with the given (or default) settings."""
    return LinkingCoordinator(config).link(mentions, entities)
