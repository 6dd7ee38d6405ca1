"""
NASTy Linker

Top-down NIL-aware clustering. Mentions are first grouped by greedy
nearest-neighbour clustering over the thresholded mention graph, each cluster
collecting the best entity of every member as a candidate. Clusters holding
more than one candidate are then split: every mention goes to the entity with
the highest transitive affinity (the best product of edge affinities along a
path), and mentions without a strong enough path to any entity are
re-clustered as NIL entities.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import networkx as nx

from linking_model import (
    AffinityGraph,
    Cluster,
    Clustering,
    ContractViolation,
    Entity,
    EntityId,
    IntegrityError,
    MENTION,
    Mention,
    MentionId,
    NodeId,
    NodeKey,
    Thresholds,
    node_from_key,
    node_key,
)
from union_find import UnionFind

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TraceEntry:
    """How one mention was resolved."""
    mention: MentionId
    candidate: Optional[EntityId]  # entity with the highest transitive affinity, if any is reachable
    entity: Optional[EntityId]     # assigned entity; None for NIL mentions
    phi_star: float
    path: Tuple[NodeId, ...]       # witness path from the mention to the candidate


class ResolutionTrace:
    """Per-mention resolution record, ordered by mention id."""

    def __init__(self, entries: Iterable[TraceEntry] = ()):
        self._entries: Dict[MentionId, TraceEntry] = {e.mention: e for e in sorted(entries, key=lambda e: e.mention)}

    def __getitem__(self, mention_id: MentionId) -> TraceEntry:
        return self._entries[mention_id]

    def __contains__(self, mention_id) -> bool:
        return mention_id in self._entries

    def __iter__(self) -> Iterator[TraceEntry]:
        return iter(self._entries.values())

    def __len__(self) -> int:
        return len(self._entries)

    def phi_star(self, mention_id: MentionId) -> Optional[float]:
        """Transitive affinity to the assigned entity, or None for NIL mentions."""
        entry = self._entries.get(mention_id)
        if entry is None or entry.entity is None:
            return None
        return entry.phi_star


# ==================== CLUSTER INITIALISATION ====================

def mention_components(graph: AffinityGraph,
                       mention_ids: Iterable[MentionId],
                       threshold: float) -> List[List[MentionId]]:
    """
    Connected components of the given mentions over mention edges with score > threshold.

    Only edges between two of the given mentions are followed.
    """
    mention_ids = list(mention_ids)
    members = UnionFind(mention_ids)
    for a in mention_ids:
        for b, score in graph.mention_neighbors(a).items():
            if score > threshold and b in members:
                members.union(a, b)
    return members.groups()


def init_clusters(graph: AffinityGraph, thresholds: Thresholds) -> Clustering:
    """
    Greedy nearest-neighbour clustering with entity candidates.

    Two mentions share a cluster iff a path of mention edges with affinity
    > tau_m connects them. A cluster's candidates are the best entities of
    its members, counting only those with affinity > tau_e.
    """
    clusters = []
    for members in mention_components(graph, graph.mention_ids, thresholds.tau_m):
        candidates = {graph.top_entity(m, thresholds.tau_e) for m in members}
        candidates.discard(None)
        clusters.append(Cluster(tuple(members), candidates=tuple(candidates)))

    clustering = Clustering(clusters)
    conflicts = sum(1 for c in clustering if len(c.candidates) > 1)
    logger.info(f"Initialised {len(clustering):,} clusters from {len(graph.mention_ids):,} mentions "
                f"({conflicts:,} with conflicting candidates)")
    return clustering


# ==================== CONFLICT RESOLUTION ====================

def build_cluster_graph(graph: AffinityGraph, cluster: Cluster, tau_a: float) -> nx.Graph:
    """
    Graph of a cluster's mentions and candidate entities.

    Only edges with affinity > tau_a are inserted; each carries its affinity
    and the Dijkstra weight -ln(affinity).
    """
    members = set(cluster.mentions)
    candidates = set(cluster.candidates)
    cluster_graph = nx.Graph()
    cluster_graph.add_nodes_from(node_key(m) for m in cluster.mentions)
    cluster_graph.add_nodes_from(node_key(e) for e in cluster.candidates)

    for m in cluster.mentions:
        for other, score in sorted(graph.mention_neighbors(m).items()):
            if m < other and other in members and score > tau_a:
                cluster_graph.add_edge(node_key(m), node_key(other), affinity=score, weight=-math.log(score))
        for entity_id, score in sorted(graph.entity_neighbors(m).items()):
            if entity_id in candidates and score > tau_a:
                cluster_graph.add_edge(node_key(m), node_key(entity_id), affinity=score, weight=-math.log(score))
    return cluster_graph


def _entity_endpoint_view(cluster_graph: nx.Graph, entity: NodeKey, tau_a: float) -> nx.Graph:
    """Restrict paths to mentions plus one entity, which can only be an endpoint."""
    return nx.subgraph_view(
        cluster_graph,
        filter_node=lambda n: n[0] == MENTION or n == entity,
        filter_edge=lambda u, v: cluster_graph[u][v]["affinity"] > tau_a,
    )


def _path_product(cluster_graph: nx.Graph, path: Sequence[NodeKey]) -> float:
    product = 1.0
    for u, v in zip(path, path[1:]):
        product *= cluster_graph[u][v]["affinity"]
    return product


def transitive_affinity(cluster_graph: nx.Graph,
                        mention_id: MentionId,
                        entity_id: EntityId,
                        tau_a: float) -> Tuple[float, Tuple[NodeId, ...]]:
    """
    Highest product of affinities over paths from a mention to an entity.

    Computed as a shortest path under weights -ln(affinity). Paths may pass
    through other mentions but never through another entity.

    Returns:
        (phi_star, witness path); (0.0, ()) when the entity is unreachable
    """
    source, target = node_key(mention_id), node_key(entity_id)
    if source not in cluster_graph:
        raise ContractViolation(f"Mention {mention_id} is not part of the cluster graph")
    if target not in cluster_graph:
        raise ContractViolation(f"Entity {entity_id} is not a candidate of the cluster graph")

    view = _entity_endpoint_view(cluster_graph, target, tau_a)
    try:
        path = nx.dijkstra_path(view, source, target, weight="weight")
    except nx.NetworkXNoPath:
        return 0.0, ()
    return _path_product(cluster_graph, path), tuple(node_from_key(n) for n in path)


def _resolve_cluster(graph: AffinityGraph,
                     cluster: Cluster,
                     thresholds: Thresholds) -> Tuple[List[Cluster], List[TraceEntry]]:
    """Split one initial cluster into entity sub-clusters and NIL sub-clusters."""
    if not cluster.candidates:
        entries = [TraceEntry(m, None, None, 0.0, ()) for m in cluster.mentions]
        return [Cluster(cluster.mentions)], entries

    cluster_graph = build_cluster_graph(graph, cluster, thresholds.tau_a)
    best: Dict[MentionId, Tuple[float, EntityId, Tuple[NodeId, ...]]] = {}

    # Candidates are visited in id order, so strict > keeps the lowest id on ties
    for entity_id in cluster.candidates:
        target = node_key(entity_id)
        view = _entity_endpoint_view(cluster_graph, target, thresholds.tau_a)
        _, paths = nx.single_source_dijkstra(view, target, weight="weight")
        for node, path in paths.items():
            if node[0] != MENTION:
                continue
            witness = path[::-1]
            phi = _path_product(cluster_graph, witness)
            mention_id = MentionId(node[1])
            if mention_id not in best or phi > best[mention_id][0]:
                best[mention_id] = (phi, entity_id, tuple(node_from_key(n) for n in witness))

    assigned: Dict[EntityId, List[MentionId]] = {}
    nil_mentions: List[MentionId] = []
    entries = []
    for mention_id in cluster.mentions:
        phi, candidate, path = best.get(mention_id, (0.0, None, ()))
        if candidate is not None and phi > thresholds.tau_a:
            assigned.setdefault(candidate, []).append(mention_id)
            entries.append(TraceEntry(mention_id, candidate, candidate, phi, path))
        else:
            nil_mentions.append(mention_id)
            entries.append(TraceEntry(mention_id, candidate, None, phi, path))

    sub_clusters = [Cluster(tuple(members), entity=entity_id) for entity_id, members in sorted(assigned.items())]
    for members in mention_components(graph, nil_mentions, thresholds.tau_m):
        sub_clusters.append(Cluster(tuple(members)))
    return sub_clusters, entries


def resolve_conflicts(clustering: Clustering,
                      graph: AffinityGraph,
                      thresholds: Thresholds,
                      workers: int = 1) -> Tuple[Clustering, ResolutionTrace]:
    """
    Split initial clusters so that each holds at most one entity.

    A mention joins the sub-cluster of the candidate with the highest
    transitive affinity if that affinity is > tau_a; the remaining mentions
    form NIL sub-clusters by connected components over mention edges > tau_m.

    Args:
        clustering: Output of init_clusters
        graph: The affinity graph the clustering was built from
        thresholds: Clustering thresholds
        workers: Number of threads resolving clusters in parallel. Resolution
            is pure Python and holds the GIL, so extra threads give little
            speedup; the result does not depend on the count.

    Returns:
        Final clustering and the per-mention resolution trace
    """
    logger.info(f"Resolving conflicts in {len(clustering):,} clusters with {workers} worker(s)...")
    resolve = partial(_resolve_cluster, graph, thresholds=thresholds)
    if workers > 1 and len(clustering) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(resolve, clustering.clusters))
    else:
        results = [resolve(cluster) for cluster in clustering.clusters]

    clusters = [c for sub_clusters, _ in results for c in sub_clusters]
    trace = ResolutionTrace(entry for _, entries in results for entry in entries)
    final = Clustering(clusters)
    linked = sum(1 for entry in trace if entry.entity is not None)
    logger.info(f"Resolved into {len(final):,} clusters; {linked:,} of {len(trace):,} mentions linked to known entities")
    return final, trace


def run_nastylinker(mentions: Sequence[Mention],
                    entities: Sequence[Entity],
                    graph: AffinityGraph,
                    thresholds: Optional[Thresholds] = None,
                    workers: int = 1) -> Tuple[Clustering, ResolutionTrace]:
    """
    Run cluster initialisation followed by conflict resolution.

    Args:
        mentions: All mentions to link; mentions without edges become singletons
        entities: The known-entity catalog
        graph: Affinity graph over the mentions and entities
        thresholds: tau_m, tau_e and tau_a
        workers: Threads used for conflict resolution

    Returns:
        Final clustering and resolution trace
    """
    thresholds = thresholds or Thresholds()
    if not mentions:
        return Clustering([]), ResolutionTrace()

    graph = prepare_graph(mentions, entities, graph)
    initial = init_clusters(graph, thresholds)
    return resolve_conflicts(initial, graph, thresholds, workers=workers)


def prepare_graph(mentions: Sequence[Mention], entities: Sequence[Entity], graph: AffinityGraph) -> AffinityGraph:
    """Check the graph against the corpus and add mentions that have no edges."""
    mention_ids = {m.id for m in mentions}
    unknown_mentions = [m for m in graph.mention_ids if m not in mention_ids]
    if unknown_mentions:
        raise IntegrityError(f"Affinity graph references unknown mention {unknown_mentions[0]}")
    catalog = {e.id for e in entities}
    unknown_entities = [e for e in graph.entity_ids if e not in catalog]
    if unknown_entities:
        raise IntegrityError(f"Affinity graph references entity {unknown_entities[0]} missing from the catalog")
    isolated = sorted(m for m in mention_ids if not graph.has_mention(m))
    if not isolated:
        return graph
    logger.debug(f"Adding {len(isolated):,} mentions without edges to the graph")
    return graph.with_nodes(mention_ids=isolated)
