"""Tests for the NASTy linker: cluster initialisation and conflict resolution."""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import math

import networkx as nx
import numpy as np
import pytest

from linking_model import (
    AffinityEdge,
    AffinityGraph,
    Cluster,
    ContractViolation,
    Entity,
    EntityId,
    IntegrityError,
    Mention,
    MentionId,
    Thresholds,
    node_key,
)
from nasty_linker import (
    build_cluster_graph,
    init_clusters,
    prepare_graph,
    resolve_conflicts,
    run_nastylinker,
    transitive_affinity,
)
from tests.sample_graphs import (
    CONFLICT_THRESHOLDS,
    EXPECTED_CONFLICT_CLUSTERS,
    cluster_shape,
    conflict_entities,
    conflict_graph,
    conflict_mentions,
    random_graph,
)
from union_find import UnionFind


def corpus_for(graph):
    mentions = [Mention(id=m, surface="x") for m in graph.mention_ids]
    entities = [Entity(id=e, label="x") for e in graph.entity_ids]
    return mentions, entities


def test_init_clusters_on_conflict_graph():
    clustering = init_clusters(conflict_graph(), CONFLICT_THRESHOLDS)
    shapes = [(c.mentions, c.candidates) for c in clustering]
    assert shapes == [
        (("m1", "m2", "m3", "m4"), ("e_a",)),
        (("m10", "m8", "m9"), ()),
        (("m5", "m6", "m7"), ("e_b", "e_c")),
    ]
    assert clustering.max_entities_per_cluster() == 2


def test_transitive_affinity_prefers_longer_stronger_path():
    """m7 reaches e_b over m6 (0.9 * 0.9) more strongly than e_c directly (0.8)."""
    graph = conflict_graph()
    cluster = Cluster(("m5", "m6", "m7"), candidates=("e_b", "e_c"))
    cluster_graph = build_cluster_graph(graph, cluster, CONFLICT_THRESHOLDS.tau_a)

    phi_b, path_b = transitive_affinity(cluster_graph, MentionId("m7"), EntityId("e_b"), CONFLICT_THRESHOLDS.tau_a)
    phi_c, path_c = transitive_affinity(cluster_graph, MentionId("m7"), EntityId("e_c"), CONFLICT_THRESHOLDS.tau_a)
    assert phi_b == pytest.approx(0.81, abs=1e-9)
    assert phi_c == pytest.approx(0.8, abs=1e-9)
    assert path_b == (MentionId("m7"), MentionId("m6"), EntityId("e_b"))
    assert path_c == (MentionId("m7"), EntityId("e_c"))


def test_weak_transitive_affinity_leaves_mentions_nil():
    graph = conflict_graph()
    cluster = Cluster(("m1", "m2", "m3", "m4"), candidates=("e_a",))
    cluster_graph = build_cluster_graph(graph, cluster, CONFLICT_THRESHOLDS.tau_a)
    phi_3, _ = transitive_affinity(cluster_graph, MentionId("m3"), EntityId("e_a"), CONFLICT_THRESHOLDS.tau_a)
    phi_4, _ = transitive_affinity(cluster_graph, MentionId("m4"), EntityId("e_a"), CONFLICT_THRESHOLDS.tau_a)
    assert phi_3 == pytest.approx(0.72, abs=1e-9)
    assert phi_4 == pytest.approx(0.648, abs=1e-9)
    assert phi_3 < CONFLICT_THRESHOLDS.tau_a and phi_4 < CONFLICT_THRESHOLDS.tau_a


def test_end_to_end_conflict_graph():
    clustering, trace = run_nastylinker(conflict_mentions(), conflict_entities(), conflict_graph(),
                                        CONFLICT_THRESHOLDS)
    assert cluster_shape(clustering) == EXPECTED_CONFLICT_CLUSTERS
    assert trace.phi_star(MentionId("m7")) == pytest.approx(0.81, abs=1e-9)
    assert trace.phi_star(MentionId("m5")) == pytest.approx(0.95, abs=1e-9)
    assert trace.phi_star(MentionId("m3")) is None
    assert trace[MentionId("m3")].candidate == "e_a"
    assert trace[MentionId("m9")].candidate is None
    assert len(trace) == 10


def test_entities_are_only_path_endpoints():
    edges = [
        AffinityEdge(MentionId("m1"), EntityId("e1"), 0.99),
        AffinityEdge(MentionId("m2"), EntityId("e1"), 0.99),
        AffinityEdge(MentionId("m1"), EntityId("e2"), 0.8),
    ]
    graph = AffinityGraph(4, entity_edges=edges)
    cluster = Cluster(("m1", "m2"), candidates=("e1", "e2"))
    cluster_graph = build_cluster_graph(graph, cluster, 0.5)
    assert transitive_affinity(cluster_graph, MentionId("m2"), EntityId("e2"), 0.5) == (0.0, ())


def test_transitive_affinity_contract():
    cluster_graph = build_cluster_graph(conflict_graph(), Cluster(("m1", "m2"), candidates=("e_a",)), 0.75)
    with pytest.raises(ContractViolation):
        transitive_affinity(cluster_graph, MentionId("m9"), EntityId("e_a"), 0.75)
    with pytest.raises(ContractViolation):
        transitive_affinity(cluster_graph, MentionId("m1"), EntityId("e_c"), 0.75)


def test_run_requires_catalog_entities():
    mentions = conflict_mentions()
    with pytest.raises(IntegrityError):
        run_nastylinker(mentions, conflict_entities()[:2], conflict_graph(), CONFLICT_THRESHOLDS)


def test_mentions_without_edges_become_singletons():
    mentions = conflict_mentions() + [Mention(id="m11", surface="Lonely")]
    clustering, trace = run_nastylinker(mentions, conflict_entities(), conflict_graph(), CONFLICT_THRESHOLDS)
    assert clustering.cluster_of(MentionId("m11")).mentions == ("m11",)
    assert clustering.entity_of(MentionId("m11")) is None
    assert MentionId("m11") in trace


def test_prepare_graph_adds_only_missing_mentions():
    graph = conflict_graph()
    assert prepare_graph(conflict_mentions(), conflict_entities(), graph) is graph

    mentions = conflict_mentions() + [Mention(id="m11", surface="Lonely")]
    prepared = prepare_graph(mentions, conflict_entities(), graph)
    assert prepared.has_mention("m11")
    assert not graph.has_mention("m11")
    assert prepared.edges() == graph.edges()


def test_empty_input():
    clustering, trace = run_nastylinker([], [], AffinityGraph(4))
    assert len(clustering) == 0
    assert len(trace) == 0


# ==================== ORACLES AND PROPERTIES ====================

def random_cluster_graph(rng):
    n_mentions = int(rng.integers(1, 8))
    n_entities = int(rng.integers(1, 4))
    nodes = [node_key(MentionId(f"m{i}")) for i in range(n_mentions)]
    nodes += [node_key(EntityId(f"e{i}")) for i in range(n_entities)]
    cluster_graph = nx.Graph()
    cluster_graph.add_nodes_from(nodes)
    for a in range(len(nodes)):
        for b in range(a + 1, len(nodes)):
            if nodes[a][0] == "entity" and nodes[b][0] == "entity":
                continue
            if rng.random() < 0.45:
                score = float(rng.uniform(1e-3, 1.0))
                cluster_graph.add_edge(nodes[a], nodes[b], affinity=score, weight=-math.log(score))
    return cluster_graph, n_mentions, n_entities


def brute_force_phi(cluster_graph, source, target, tau_a):
    allowed = nx.Graph()
    allowed.add_nodes_from(n for n in cluster_graph if n[0] == "mention" or n == target)
    allowed.add_edges_from((u, v, d) for u, v, d in cluster_graph.edges(data=True)
                           if u in allowed and v in allowed and d["affinity"] > tau_a)
    best = 0.0
    for path in nx.all_simple_paths(allowed, source, target):
        product = 1.0
        for u, v in zip(path, path[1:]):
            product *= allowed[u][v]["affinity"]
        best = max(best, product)
    return best


def test_transitive_affinity_matches_path_enumeration():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        cluster_graph, n_mentions, n_entities = random_cluster_graph(rng)
        tau_a = float(rng.uniform(0.0, 0.5))
        source = MentionId(f"m{int(rng.integers(0, n_mentions))}")
        target = EntityId(f"e{int(rng.integers(0, n_entities))}")
        phi, path = transitive_affinity(cluster_graph, source, target, tau_a)
        expected = brute_force_phi(cluster_graph, node_key(source), node_key(target), tau_a)
        assert phi == pytest.approx(expected, abs=1e-9)
        if expected > 0:
            assert path[0] == source and path[-1] == target


def test_resolution_invariants_on_random_graphs():
    rng = np.random.default_rng(99)
    for _ in range(1000):
        graph = random_graph(rng, int(rng.integers(1, 12)), int(rng.integers(1, 5)))
        low, high = sorted(float(x) for x in rng.uniform(0.2, 0.95, size=2))
        thresholds = Thresholds(tau_m=float(rng.uniform(0.2, 0.95)), tau_e=high, tau_a=low)
        initial = init_clusters(graph, thresholds)
        final, trace = resolve_conflicts(initial, graph, thresholds)

        # Every mention lands in exactly one cluster
        assert sorted(final.assignment) == sorted(graph.mention_ids)
        assert final.max_entities_per_cluster() <= 1

        for cluster in final:
            origin = initial.cluster_of(cluster.mentions[0])
            assert set(cluster.mentions) <= set(origin.mentions)
            if cluster.entity is not None:
                assert cluster.entity in origin.candidates

        for mention_id in graph.mention_ids:
            origin = initial.cluster_of(mention_id)
            entry = trace[mention_id]
            if not origin.candidates:
                assert entry.entity is None
                continue
            cluster_graph = build_cluster_graph(graph, origin, thresholds.tau_a)
            scores = {e: transitive_affinity(cluster_graph, mention_id, e, thresholds.tau_a)[0]
                      for e in origin.candidates}
            best = max(scores.values())
            if entry.entity is None:
                assert best <= thresholds.tau_a
            else:
                assert scores[entry.entity] == pytest.approx(best, abs=1e-12)
                assert scores[entry.entity] > thresholds.tau_a
                assert final.entity_of(mention_id) == entry.entity


def test_resolution_is_deterministic_across_workers():
    rng = np.random.default_rng(17)
    for _ in range(50):
        graph = random_graph(rng, 40, 6, low=0.5)
        mentions, entities = corpus_for(graph)
        thresholds = Thresholds(tau_m=0.6, tau_e=0.7, tau_a=0.6)
        first, trace_first = run_nastylinker(mentions, entities, graph, thresholds)
        second, _ = run_nastylinker(mentions, entities, graph, thresholds)
        threaded, trace_threaded = run_nastylinker(mentions, entities, graph, thresholds, workers=4)
        assert first == second == threaded
        assert list(trace_first) == list(trace_threaded)


def best_entity(graph, mention_id, tau_e):
    ranked = sorted((-score, e) for e, score in graph.entity_neighbors(mention_id).items() if score > tau_e)
    return ranked[0][1] if ranked else None


def test_init_clusters_matches_union_find_over_edge_list():
    rng = np.random.default_rng(5)
    for _ in range(300):
        graph = random_graph(rng, int(rng.integers(1, 15)), int(rng.integers(1, 5)))
        thresholds = Thresholds(tau_m=float(rng.uniform(0.2, 0.95)), tau_e=float(rng.uniform(0.2, 0.95)))

        components = UnionFind(graph.mention_ids)
        for edge in graph.mention_edges():
            if edge.score > thresholds.tau_m:
                components.union(edge.source, edge.target)
        expected = set()
        for group in components.groups():
            candidates = {best_entity(graph, m, thresholds.tau_e) for m in group} - {None}
            expected.add((tuple(sorted(group)), tuple(sorted(candidates))))

        initial = init_clusters(graph, thresholds)
        assert {(c.mentions, c.candidates) for c in initial} == expected


def test_transitive_affinity_dominates_direct_edges():
    rng = np.random.default_rng(77)
    for _ in range(500):
        cluster_graph, n_mentions, n_entities = random_cluster_graph(rng)
        tau_a = float(rng.uniform(0.0, 0.8))
        for i in range(n_mentions):
            for j in range(n_entities):
                source, target = MentionId(f"m{i}"), EntityId(f"e{j}")
                data = cluster_graph.get_edge_data(node_key(source), node_key(target))
                if data is None or data["affinity"] <= tau_a:
                    continue
                phi, _ = transitive_affinity(cluster_graph, source, target, tau_a)
                assert phi >= data["affinity"] - 1e-12


def test_transitive_affinity_never_drops_when_edges_are_added():
    rng = np.random.default_rng(404)
    for _ in range(300):
        cluster_graph, n_mentions, n_entities = random_cluster_graph(rng)
        tau_a = float(rng.uniform(0.0, 0.6))
        pairs = [(MentionId(f"m{i}"), EntityId(f"e{j}")) for i in range(n_mentions) for j in range(n_entities)]
        before = {pair: transitive_affinity(cluster_graph, *pair, tau_a)[0] for pair in pairs}

        nodes = list(cluster_graph.nodes)
        u, v = (nodes[int(x)] for x in rng.choice(len(nodes), size=2, replace=False))
        if u[0] == "entity" and v[0] == "entity":
            continue
        score = float(rng.uniform(1e-3, 1.0))
        if cluster_graph.has_edge(u, v):
            score = max(score, cluster_graph[u][v]["affinity"])
        cluster_graph.add_edge(u, v, affinity=score, weight=-math.log(score))

        for pair in pairs:
            assert transitive_affinity(cluster_graph, *pair, tau_a)[0] >= before[pair] - 1e-12
