"""Tests for corpus reading and writing."""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import json

import numpy as np
import pytest

from corpus_io import (
    CLUSTERING_HEADER,
    corpus_statistics,
    read_clustering,
    read_corpus,
    read_edges,
    read_mentions,
    read_report,
    write_clustering,
    write_edges,
    write_entities,
    write_mentions,
    write_report,
    write_trace,
)
from evaluation import evaluate_clustering
from knn_index import load_graph_from_edges
from linking_model import (
    AffinityEdge,
    Cluster,
    Clustering,
    EntityId,
    IngestionError,
    IntegrityError,
    Mention,
    MentionId,
)
from nasty_linker import run_nastylinker
from tests.sample_graphs import (
    CONFLICT_THRESHOLDS,
    FIXTURES_DIR,
    conflict_entities,
    conflict_gold,
    conflict_graph,
    conflict_mentions,
    random_graph,
)


def fixture_path(name):
    return os.path.join(FIXTURES_DIR, name)


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)


def test_read_fixture_corpus():
    mentions, entities = read_corpus(fixture_path("conflict_mentions.jsonl"), fixture_path("conflict_entities.jsonl"))
    assert len(mentions) == 10
    assert [e.id for e in entities] == ["e_a", "e_b", "e_c"]
    assert mentions[6].gold.id == "e_c"
    assert mentions[2].gold.kind == "nil"


def test_fixture_edges_rebuild_the_conflict_graph():
    graph = load_graph_from_edges(read_edges(fixture_path("conflict_edges.tsv")), k=4)
    assert graph == conflict_graph()


def test_malformed_line_reports_line_number(tmp_path):
    path = write_lines(tmp_path / "mentions.jsonl", [
        json.dumps({"id": "m1", "surface": "a"}),
        "{not json",
    ])
    with pytest.raises(IngestionError, match="line 2"):
        read_mentions(path)


def test_embedding_dimension_drift_reports_line(tmp_path):
    lines = [json.dumps({"id": f"m{i}", "surface": "a", "embedding": [1.0, 0.0]}) for i in range(6)]
    lines.append(json.dumps({"id": "m6", "surface": "a", "embedding": [1.0, 0.0, 0.0]}))
    path = write_lines(tmp_path / "mentions.jsonl", lines)
    with pytest.raises(IngestionError, match="line 7"):
        read_mentions(path)


def test_duplicate_and_missing_fields(tmp_path):
    path = write_lines(tmp_path / "dup.jsonl", [json.dumps({"id": "m1", "surface": "a"})] * 2)
    with pytest.raises(IngestionError, match="duplicate"):
        read_mentions(path)
    path = write_lines(tmp_path / "missing.jsonl", [json.dumps({"id": "m1"})])
    with pytest.raises(IngestionError, match="line 1"):
        read_mentions(path)


def test_dangling_gold_entity_is_an_integrity_error(tmp_path):
    mentions = write_lines(tmp_path / "mentions.jsonl", [
        json.dumps({"id": "m1", "surface": "a", "gold": {"kind": "known", "id": "e_missing"}}),
    ])
    entities = write_lines(tmp_path / "entities.jsonl", [json.dumps({"id": "e1", "label": "a"})])
    with pytest.raises(IntegrityError, match="e_missing"):
        read_corpus(mentions, entities)


def test_corpus_round_trip(tmp_path):
    mentions = conflict_mentions()
    mentions[0].embedding = np.array([0.1, 0.2, 0.3])
    entities = conflict_entities()
    write_mentions(mentions, tmp_path / "m.jsonl")
    write_entities(entities, tmp_path / "e.jsonl")
    read_back, entities_back = read_corpus(tmp_path / "m.jsonl", tmp_path / "e.jsonl")
    assert read_back == mentions
    assert entities_back == entities
    assert np.array_equal(read_back[0].embedding, mentions[0].embedding)


def test_edges_round_trip(tmp_path):
    rng = np.random.default_rng(21)
    for i in range(10):
        graph = random_graph(rng, 15, 4)
        path = tmp_path / f"edges{i}.tsv"
        write_edges(graph, path)
        rebuilt = load_graph_from_edges(read_edges(path), k=graph.k,
                                        mention_ids=graph.mention_ids, entity_ids=graph.entity_ids)
        assert rebuilt == graph


def test_bad_edge_rows(tmp_path):
    path = write_lines(tmp_path / "edges.tsv", ["mention\tm1\tentity\te1\t0.5", "mention\tm1\tentity\te2\tabc"])
    with pytest.raises(IngestionError, match="line 2"):
        read_edges(path)
    path = write_lines(tmp_path / "edges2.tsv", ["entity\te1\tmention\tm1\t0.5"])
    with pytest.raises(IngestionError, match="line 1"):
        read_edges(path)


def test_quote_characters_in_ids_survive_edge_files(tmp_path):
    edges = [
        AffinityEdge(MentionId('m"1'), MentionId('say "hi"'), 0.9),
        AffinityEdge(MentionId('m"1'), EntityId('e"a\\b'), 0.8),
        AffinityEdge(MentionId('say "hi"'), EntityId('e"a\\b'), 0.95),
    ]
    path = tmp_path / "quoted.tsv"
    write_edges(edges, path)
    assert path.read_text(encoding="utf-8").splitlines()[0] == 'mention\tm"1\tentity\te"a\\b\t0.8'
    assert read_edges(path) == sorted(edges, key=AffinityEdge.sort_key)


def test_quote_characters_in_ids_survive_clustering_files(tmp_path):
    clustering = Clustering([
        Cluster((MentionId('m"1'), MentionId('"m2"')), entity=EntityId('e"a')),
        Cluster((MentionId("m\\3"),)),
        Cluster((MentionId("m 4 "),), abstain=True),
    ])
    path = tmp_path / "quoted_clustering.tsv"
    write_clustering(clustering, None, path)
    read_back, _ = read_clustering(path)
    assert read_back == clustering
    assert read_back.entity_of(MentionId('"m2"')) == 'e"a'


def test_edge_ids_are_read_verbatim(tmp_path):
    path = write_lines(tmp_path / "spaced.tsv", ["mention\t m1 \tentity\te1 \t0.5 ", " mention \tm2\tmention\t m1 \t0.7"])
    edges = read_edges(path)
    assert [e.source for e in edges] == [" m1 ", "m2"]
    assert [e.target for e in edges] == ["e1 ", " m1 "]
    assert [e.score for e in edges] == [0.5, 0.7]

    mentions_path = write_lines(tmp_path / "m.jsonl", ['{"id": " m1 ", "surface": "a"}', '{"id": "m2", "surface": "b"}'])
    graph = load_graph_from_edges(edges, k=4, entity_ids=[EntityId("e1 ")])
    assert sorted(graph.mention_ids) == sorted(m.id for m in read_mentions(mentions_path))


def test_ids_that_cannot_be_written_as_tsv_are_rejected(tmp_path):
    with pytest.raises(IngestionError):
        Mention(id="m\t1", surface="a")
    with pytest.raises(IngestionError):
        AffinityEdge(MentionId("m1"), EntityId("e\n1"), 0.5)
    path = write_lines(tmp_path / "m.jsonl", ['{"id": "m\\r1", "surface": "a"}'])
    with pytest.raises(IngestionError, match="line 1"):
        read_mentions(path)


def test_clustering_file_for_conflict_graph(tmp_path):
    clustering, trace = run_nastylinker(conflict_mentions(), conflict_entities(), conflict_graph(),
                                        CONFLICT_THRESHOLDS)
    path = tmp_path / "clustering.tsv"
    write_clustering(clustering, trace, path)

    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0].split("\t") == CLUSTERING_HEADER
    rows = {line.split("\t")[0]: line.split("\t") for line in lines[1:]}
    assert len(rows) == 10
    assert rows["m1"][2:4] == ["known", "e_a"]
    assert rows["m2"][3] == "e_a"
    assert rows["m3"][2] == "nil" and rows["m3"][3] == rows["m4"][3] == rows["m3"][1]
    assert float(rows["m7"][4]) == pytest.approx(0.81)
    assert rows["m3"][4] == ""

    read_back, phi_star = read_clustering(path)
    assert read_back == clustering
    assert phi_star[MentionId("m7")] == trace.phi_star(MentionId("m7"))


def test_empty_clustering_is_header_only(tmp_path):
    path = tmp_path / "empty.tsv"
    write_clustering(Clustering([]), None, path)
    assert path.read_text(encoding="utf-8") == "\t".join(CLUSTERING_HEADER) + "\n"
    clustering, _ = read_clustering(path)
    assert len(clustering) == 0


def test_trace_and_report_files(tmp_path):
    clustering, trace = run_nastylinker(conflict_mentions(), conflict_entities(), conflict_graph(),
                                        CONFLICT_THRESHOLDS)
    write_trace(trace, tmp_path / "trace.jsonl")
    records = [json.loads(line) for line in (tmp_path / "trace.jsonl").read_text().splitlines()]
    by_mention = {r["mention"]: r for r in records}
    assert by_mention["m7"]["path"] == [["mention", "m7"], ["mention", "m6"], ["entity", "e_b"]]
    assert by_mention["m3"]["entity"] is None

    report = evaluate_clustering(clustering, conflict_gold())
    write_report(report, tmp_path / "report.txt")
    values = read_report(tmp_path / "report.txt")
    assert values == report.as_flat_dict()
    assert float(values["known.precision"]) == pytest.approx(0.8)


def test_corpus_statistics():
    stats = corpus_statistics(conflict_mentions(), conflict_entities())
    assert stats["mentions"] == 10
    assert stats["mentions_known"] == 5
    assert stats["mentions_nil"] == 5
    assert stats["entities_known"] == 3
    assert stats["entities_nil"] == 2
    assert stats["mean_mentions_per_entity"] == pytest.approx(2.0)
    assert stats["share_mentioned_more_than_once"] == pytest.approx(0.8)
