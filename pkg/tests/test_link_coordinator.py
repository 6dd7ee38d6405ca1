"""Tests for the linking pipeline coordinator."""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import pytest

from link_coordinator import LinkingCoordinator, compare_algorithms, fit_linear, link_corpus, restrict_edges
from linking_model import ConfigurationError, EntityId, MentionId
from settings import RunConfig
from synthetic_corpus import SyntheticConfig, generate_synthetic
from tests.sample_graphs import (
    CONFLICT_THRESHOLDS,
    EXPECTED_CONFLICT_CLUSTERS,
    FIXTURES_DIR,
    cluster_shape,
    conflict_entities,
    conflict_gold,
    conflict_graph,
    conflict_mentions,
)


def conflict_config(**changes):
    values = {"tau_m": CONFLICT_THRESHOLDS.tau_m, "tau_e": CONFLICT_THRESHOLDS.tau_e,
              "tau_a": CONFLICT_THRESHOLDS.tau_a}
    values.update(changes)
    return RunConfig(**values)


def test_link_and_evaluate_conflict_graph():
    coordinator = LinkingCoordinator(conflict_config())
    result = coordinator.link(conflict_mentions(), conflict_entities(), graph=conflict_graph())
    assert cluster_shape(result.clustering) == EXPECTED_CONFLICT_CLUSTERS
    assert result.trace.phi_star(MentionId("m7")) == pytest.approx(0.81, abs=1e-9)
    assert result.timings.total >= result.timings.clustering + result.timings.resolution

    report = coordinator.evaluate(result, conflict_gold())
    assert report.micro.f1 == pytest.approx(0.9)
    assert result.report is report


def test_graph_needed_without_embeddings():
    coordinator = LinkingCoordinator(conflict_config())
    with pytest.raises(ConfigurationError):
        coordinator.link(conflict_mentions(), conflict_entities())

    exact = LinkingCoordinator(RunConfig(algorithm="exactmatch"))
    result = exact.link(conflict_mentions(), conflict_entities())
    assert result.graph is None and result.trace is None


def test_sweep_covers_every_combination():
    coordinator = LinkingCoordinator(conflict_config())
    grid = {"tau_m": [0.75, 0.95], "tau_a": [0.7, 0.75]}
    rows = coordinator.sweep(conflict_mentions(), conflict_entities(), conflict_gold(), grid, graph=conflict_graph())
    assert len(rows) == 4
    assert [(r["tau_a"], r["tau_m"]) for r in rows] == [(0.7, 0.75), (0.7, 0.95), (0.75, 0.75), (0.75, 0.95)]
    fixture_row = rows[2]
    assert fixture_row["micro_f1"] == pytest.approx(0.9)
    for row in rows:
        assert 0.0 <= row["micro_f1"] <= 1.0


def test_sweep_rejects_unused_thresholds():
    coordinator = LinkingCoordinator(conflict_config())
    with pytest.raises(ConfigurationError):
        coordinator.sweep(conflict_mentions(), conflict_entities(), conflict_gold(), {"tau": [0.5]},
                          graph=conflict_graph())
    with pytest.raises(ConfigurationError):
        coordinator.sweep(conflict_mentions(), conflict_entities(), conflict_gold(), {}, graph=conflict_graph())


def test_fit_linear():
    fit = fit_linear([1, 2, 3, 4], [3.0, 5.0, 7.0, 9.0])
    assert fit["slope"] == pytest.approx(2.0)
    assert fit["intercept"] == pytest.approx(1.0)
    assert fit["r_squared"] == pytest.approx(1.0)
    assert fit_linear([5], [1.0]) is None
    assert fit_linear([2, 2], [1.0, 3.0]) is None


def test_bench_rows_follow_sample_sizes():
    mentions, entities, _ = generate_synthetic(SyntheticConfig(n_entities=40, dim=8, seed=5))
    coordinator = LinkingCoordinator(RunConfig())
    rows, fit = coordinator.bench(mentions, entities, [20, 10, 20])
    assert [r["mentions"] for r in rows] == [10, 20]
    assert fit is not None
    for row in rows:
        assert 0.0 <= row["clustering_share"] <= 1.0
    with pytest.raises(ConfigurationError):
        coordinator.bench(mentions, entities, [len(mentions) + 1])


def test_restrict_edges_keeps_sample_mentions_and_entities():
    edges = conflict_graph().edges()
    sample = {MentionId("m1"), MentionId("m2"), MentionId("m6")}
    kept = restrict_edges(edges, sample)
    assert kept
    for edge in kept:
        assert edge.source in sample
        assert isinstance(edge.target, EntityId) or edge.target in sample
    dropped = [e for e in edges if e not in kept]
    assert all(e.source not in sample or isinstance(e.target, MentionId) and e.target not in sample for e in dropped)


def test_bench_with_edge_file_builds_a_graph_per_sample():
    edges_path = os.path.join(FIXTURES_DIR, "conflict_edges.tsv")
    coordinator = LinkingCoordinator(conflict_config(edges_path=edges_path))
    rows, fit = coordinator.bench(conflict_mentions(), conflict_entities(), [3, 6, 10])
    assert [r["mentions"] for r in rows] == [3, 6, 10]
    assert fit is not None
    for row in rows:
        assert row["graph_build"] > 0.0
        assert row["total"] + 1e-9 >= row["graph_build"] + row["clustering"] + row["resolution"]

    full = coordinator.link(conflict_mentions(), conflict_entities())
    assert cluster_shape(full.clustering) == EXPECTED_CONFLICT_CLUSTERS


def test_compare_algorithms_on_conflict_graph():
    scores = compare_algorithms(conflict_mentions(), conflict_entities(), conflict_gold(),
                                graph=conflict_graph(), config=conflict_config())
    assert set(scores) == {"nasty", "majority", "bottomup", "exactmatch", "topentity"}
    assert all(0.0 <= value <= 1.0 for value in scores.values())


def test_link_corpus_convenience():
    mentions, entities, _ = generate_synthetic(SyntheticConfig(n_entities=15, dim=8, seed=2))
    result = link_corpus(mentions, entities)
    assert sorted(result.clustering.assignment) == sorted(m.id for m in mentions)
    assert result.timings.graph_build > 0.0


# ==================== ACCEPTANCE ====================

@pytest.mark.slow
def test_hnsw_runtime_grows_linearly():
    pytest.importorskip("faiss")
    mentions, entities, _ = generate_synthetic(SyntheticConfig(n_entities=25000, dim=32, seed=0))
    coordinator = LinkingCoordinator(RunConfig(backend="hnsw"))
    rows, fit = coordinator.bench(mentions, entities, [5000, 10000, 20000, 40000])
    assert fit["r_squared"] >= 0.95
    # Clustering and resolution stay a minority of the runtime
    for row in rows:
        assert row["clustering_share"] <= 0.5
