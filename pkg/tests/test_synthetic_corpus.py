"""Tests for the synthetic corpus generator."""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest

from corpus_io import corpus_statistics, write_entities, write_mentions
from linking_model import ConfigurationError
from synthetic_corpus import SyntheticConfig, generate_synthetic


def test_zero_noise_reproduces_prototypes():
    mentions, entities, gold = generate_synthetic(SyntheticConfig(n_entities=30, noise_sigma=0.0, seed=1))
    catalog = {e.id: e for e in entities}
    known = [m for m in mentions if gold[m.id].is_known]
    assert known
    for mention in known:
        assert np.array_equal(mention.embedding, catalog[gold[mention.id].id].embedding)


def test_no_nil_fraction_means_no_nil_mentions():
    mentions, entities, gold = generate_synthetic(SyntheticConfig(n_entities=50, nil_fraction=0.0, seed=2))
    assert all(label.is_known for label in gold.values())
    assert len(entities) == 50


def test_same_seed_gives_identical_files(tmp_path):
    for run in ("a", "b"):
        mentions, entities, _ = generate_synthetic(SyntheticConfig(n_entities=40, seed=7))
        write_mentions(mentions, tmp_path / run / "mentions.jsonl")
        write_entities(entities, tmp_path / run / "entities.jsonl")
    for name in ("mentions.jsonl", "entities.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_different_seeds_differ():
    first, _, _ = generate_synthetic(SyntheticConfig(n_entities=20, seed=1))
    second, _, _ = generate_synthetic(SyntheticConfig(n_entities=20, seed=2))
    assert [m.surface for m in first] != [m.surface for m in second]


def test_gold_labels_match_mentions():
    mentions, entities, gold = generate_synthetic(SyntheticConfig(n_entities=25, seed=3))
    assert [m.id for m in mentions] == sorted(gold)
    assert all(m.gold == gold[m.id] for m in mentions)
    catalog = {e.id for e in entities}
    assert all(label.id in catalog for label in gold.values() if label.is_known)
    for mention in mentions:
        assert np.linalg.norm(mention.embedding) == pytest.approx(1.0)


def test_statistics_follow_the_config():
    config = SyntheticConfig(n_entities=10000, nil_fraction=0.3, mean_mentions=2.0, dim=4, seed=11)
    mentions, entities, _ = generate_synthetic(config)
    stats = corpus_statistics(mentions, entities)
    assert stats["nil_mention_share"] == pytest.approx(0.3, rel=0.05)
    assert stats["mean_mentions_per_entity"] == pytest.approx(2.0, rel=0.05)
    assert stats["entities_known"] + stats["entities_nil"] <= 10000
    assert len(entities) == 7000


def test_homonyms_share_labels():
    _, entities, _ = generate_synthetic(SyntheticConfig(n_entities=40, nil_fraction=0.0, homonym_fraction=1.0, seed=4))
    labels = [e.label for e in entities]
    assert len(set(labels)) == 1


def test_config_validation():
    with pytest.raises(ConfigurationError):
        SyntheticConfig(nil_fraction=1.5)
    with pytest.raises(ConfigurationError):
        SyntheticConfig(n_entities=0)
    with pytest.raises(ConfigurationError):
        SyntheticConfig(mean_mentions=0.5)
    with pytest.raises(ConfigurationError):
        SyntheticConfig(noise_sigma=-1.0)
