"""
Synthetic Corpus

Seed-deterministic generator for labelled linking corpora. Entity prototypes
are drawn uniformly on the unit sphere; every entity spawns a geometric
number of mentions whose embeddings are the prototype plus Gaussian noise.
A share of the entities is withheld from the catalog, so their mentions
are gold NIL.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from linking_model import ConfigurationError, Entity, GoldLabel, Mention, MentionId

logger = logging.getLogger(__name__)

_SYLLABLES = ("ka", "ro", "vel", "in", "mar", "to", "li", "sen", "dra", "go", "be", "ny", "or", "sa", "quen", "ti")


@dataclass(frozen=True)
class SyntheticConfig:
    n_entities: int = 500
    nil_fraction: float = 0.3
    mean_mentions: float = 2.0        # mean of the geometric mention count per entity
    dim: int = 64
    noise_sigma: float = 0.01
    seed: int = 0
    homonym_fraction: float = 0.1     # share of entities reusing the label of another entity
    surface_variation: float = 0.2    # share of mentions using a shortened surface form

    def __post_init__(self):
        if isinstance(self.n_entities, bool) or not isinstance(self.n_entities, int) or self.n_entities < 1:
            raise ConfigurationError(f"n_entities must be a positive integer, got {self.n_entities!r}")
        if isinstance(self.dim, bool) or not isinstance(self.dim, int) or self.dim < 1:
            raise ConfigurationError(f"dim must be a positive integer, got {self.dim!r}")
        for name in ("nil_fraction", "homonym_fraction", "surface_variation"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {value!r}")
        if not self.mean_mentions >= 1.0:
            raise ConfigurationError(f"mean_mentions must be at least 1, got {self.mean_mentions!r}")
        if not self.noise_sigma >= 0.0:
            raise ConfigurationError(f"noise_sigma must be non-negative, got {self.noise_sigma!r}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigurationError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")


def _entity_name(rng: np.random.Generator) -> str:
    words = []
    for _ in range(2):
        count = int(rng.integers(2, 4))
        word = "".join(_SYLLABLES[int(i)] for i in rng.integers(0, len(_SYLLABLES), size=count))
        words.append(word.capitalize())
    return " ".join(words)


def _identifiers(prefix: str, count: int) -> List[str]:
    width = len(str(max(count - 1, 0)))
    return [f"{prefix}{i:0{width}d}" for i in range(count)]


def generate_synthetic(config: SyntheticConfig) -> Tuple[List[Mention], List[Entity], Dict[MentionId, GoldLabel]]:
    """
    Generate a labelled corpus.

    Args:
        config: Generator settings; all randomness derives from config.seed

    Returns:
        (mentions, catalog entities, gold label per mention)
    """
    rng = np.random.default_rng(config.seed)
    n = config.n_entities

    prototypes = rng.standard_normal((n, config.dim))
    prototypes /= np.linalg.norm(prototypes, axis=1, keepdims=True)

    labels = [_entity_name(rng) for _ in range(n)]
    homonyms = rng.random(n) < config.homonym_fraction
    for i in np.flatnonzero(homonyms):
        if i > 0:
            labels[i] = labels[int(rng.integers(0, i))]

    n_nil = int(round(config.nil_fraction * n))
    is_nil = np.zeros(n, dtype=bool)
    is_nil[rng.permutation(n)[:n_nil]] = True
    counts = rng.geometric(1.0 / config.mean_mentions, size=n)

    known_ids = iter(_identifiers("e", n - n_nil))
    nil_ids = iter(_identifiers("n", n_nil))
    entities = []
    entity_gold = []
    for i in range(n):
        if is_nil[i]:
            entity_gold.append(GoldLabel.nil(next(nil_ids)))
            continue
        entity_id = next(known_ids)
        entity_gold.append(GoldLabel.known(entity_id))
        entities.append(Entity(
            id=entity_id,
            label=labels[i],
            description=f"Synthetic entity {labels[i]}",
            embedding=prototypes[i].copy(),
            popularity=int(counts[i]) * 10 + int(rng.integers(0, 10)),
        ))

    drafts = []
    for i in range(n):
        for _ in range(int(counts[i])):
            if config.noise_sigma > 0:
                vector = prototypes[i] + rng.normal(0.0, config.noise_sigma, size=config.dim)
                vector /= np.linalg.norm(vector)
            else:
                vector = prototypes[i].copy()
            surface = labels[i]
            if rng.random() < config.surface_variation:
                surface = surface.split()[-1]
            drafts.append((surface, vector, entity_gold[i]))

    order = rng.permutation(len(drafts))
    mentions = []
    gold = {}
    for mention_id, index in zip(_identifiers("m", len(drafts)), order):
        surface, vector, label = drafts[int(index)]
        mention = Mention(id=mention_id, surface=surface, embedding=vector, gold=label)
        mentions.append(mention)
        gold[mention.id] = label

    nil_mentions = sum(1 for label in gold.values() if not label.is_known)
    logger.info(f"Generated {len(mentions):,} mentions of {n:,} entities "
                f"({n_nil:,} withheld as NIL, {nil_mentions:,} NIL mentions)")
    return mentions, entities, gold
