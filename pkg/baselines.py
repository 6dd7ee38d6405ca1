"""
Baseline Linkers

Comparison systems sharing the clustering contract of the NASTy linker:

- Exact Match: string match of preprocessed surface and entity label
- Top Entity: each mention's best retrieved entity, without clustering
- Majority Clustering: greedy clustering, entity assigned by a member majority
- Bottom-Up Clustering: greedy edge insertion under an at-most-one-entity constraint
"""

import logging
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

from linking_model import (
    AffinityGraph,
    Cluster,
    Clustering,
    ConfigurationError,
    Entity,
    EntityId,
    ENTITY,
    MENTION,
    Mention,
    MentionId,
    node_from_key,
)
from nasty_linker import mention_components
from union_find import UnionFind

logger = logging.getLogger(__name__)

_NON_ALNUM = re.compile(r"[\W_]+")


@dataclass(frozen=True)
class MajorityConfig:
    tau_m: float = 0.85
    tau_e: float = 0.8
    majority_threshold: float = 0.7

    def __post_init__(self):
        for name in ("tau_m", "tau_e"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {value!r}")
        if not 0.0 < self.majority_threshold <= 1.0:
            raise ConfigurationError(f"majority_threshold must lie in (0, 1], got {self.majority_threshold!r}")


@dataclass(frozen=True)
class BottomUpConfig:
    tau: float = 0.85  # minimum affinity for both mention and entity edges

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigurationError(f"tau must lie in [0, 1], got {self.tau!r}")


def preprocess_label(text: str) -> str:
    """Lower-case, replace runs of non-alphanumerics with a space, trim."""
    return _NON_ALNUM.sub(" ", text.lower()).strip()


def _group_links(links: Dict[MentionId, EntityId], mention_ids: Sequence[MentionId]) -> Clustering:
    """One cluster per linked entity; every unlinked mention abstains on its own."""
    by_entity: Dict[EntityId, List[MentionId]] = {}
    clusters = []
    for mention_id in mention_ids:
        entity_id = links.get(mention_id)
        if entity_id is None:
            clusters.append(Cluster((mention_id,), abstain=True))
        else:
            by_entity.setdefault(entity_id, []).append(mention_id)
    clusters.extend(Cluster(tuple(members), entity=entity_id) for entity_id, members in by_entity.items())
    return Clustering(clusters)


def exact_match(mentions: Sequence[Mention], entities: Sequence[Entity]) -> Clustering:
    """
    Link mentions whose preprocessed surface equals a preprocessed entity label.

    Among several matching entities the most popular wins, then the lowest id.
    Unmatched mentions abstain, as this baseline cannot produce NIL clusters.
    """
    catalog: Dict[str, EntityId] = {}
    for entity in sorted(entities, key=lambda e: (-e.popularity, e.id)):
        key = preprocess_label(entity.label)
        if key:
            catalog.setdefault(key, entity.id)

    links = {}
    for mention in mentions:
        entity_id = catalog.get(preprocess_label(mention.surface))
        if entity_id is not None:
            links[mention.id] = entity_id

    logger.info(f"Exact match linked {len(links):,} of {len(mentions):,} mentions")
    return _group_links(links, [m.id for m in mentions])


def top_entity(graph: AffinityGraph, tau_e: float = 0.9) -> Clustering:
    """Link every mention to its best entity with affinity > tau_e; others abstain."""
    if not 0.0 <= tau_e <= 1.0:
        raise ConfigurationError(f"tau_e must lie in [0, 1], got {tau_e!r}")
    links = {}
    for mention_id in graph.mention_ids:
        entity_id = graph.top_entity(mention_id, tau_e)
        if entity_id is not None:
            links[mention_id] = entity_id
    logger.info(f"Top-entity linking assigned {len(links):,} of {len(graph.mention_ids):,} mentions")
    return _group_links(links, graph.mention_ids)


def _majority_cluster(graph: AffinityGraph, members: List[MentionId], config: MajorityConfig) -> Cluster:
    votes = Counter(graph.top_entity(m, config.tau_e) for m in members)
    votes.pop(None, None)
    if votes:
        # Plurality winner; equal counts go to the lowest id
        entity_id, count = min(votes.items(), key=lambda item: (-item[1], item[0]))
        # Mentions without any candidate stay in the denominator
        if count / len(members) >= config.majority_threshold:
            return Cluster(tuple(members), entity=entity_id)
    return Cluster(tuple(members))


def majority_clustering(graph: AffinityGraph,
                        config: Optional[MajorityConfig] = None,
                        workers: int = 1) -> Clustering:
    """
    Greedy clustering with majority entity assignment.

    Mentions are grouped like the NASTy initialisation (components over
    mention edges > tau_m). A cluster gets entity e iff the share of its
    mentions whose best entity (affinity > tau_e) is e reaches the majority
    threshold; otherwise the whole cluster is NIL.

    Voting runs in pure Python under the GIL, so workers > 1 gives little
    speedup; the output is the same for any worker count.
    """
    config = config or MajorityConfig()
    components = mention_components(graph, graph.mention_ids, config.tau_m)
    if workers > 1 and len(components) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            clusters = list(executor.map(lambda members: _majority_cluster(graph, members, config), components))
    else:
        clusters = [_majority_cluster(graph, members, config) for members in components]

    clustering = Clustering(clusters)
    linked = sum(1 for c in clustering if c.entity is not None)
    logger.info(f"Majority clustering: {linked:,} of {len(clustering):,} clusters assigned to entities")
    return clustering


def bottom_up_clustering(graph: AffinityGraph, config: Optional[BottomUpConfig] = None) -> Clustering:
    """
    Constrained bottom-up clustering.

    All edges with affinity > tau, mention-mention and mention-entity alike,
    are added in order of descending affinity (ties by endpoint kind and id).
    An edge is skipped iff it would join two components that both contain an
    entity. The resulting components, restricted to mentions, are the clusters.
    """
    config = config or BottomUpConfig()
    edges = [(-score, (MENTION, str(a)), (MENTION, str(b)))
             for a, b, score in graph.mention_pairs() if score > config.tau]
    for mention_id in graph.mention_ids:
        for entity_id, score in graph.entity_neighbors(mention_id).items():
            if score > config.tau:
                edges.append((-score, (MENTION, str(mention_id)), (ENTITY, str(entity_id))))
    edges.sort()

    components = UnionFind((MENTION, str(m)) for m in graph.mention_ids)
    entity_of: Dict = {}
    merged = skipped = 0
    for _, u, v in edges:
        if v not in components:
            components.add(v)
            if v[0] == ENTITY:
                entity_of[v] = EntityId(v[1])
        ru, rv = components.find(u), components.find(v)
        if ru == rv:
            continue
        eu, ev = entity_of.get(ru), entity_of.get(rv)
        if eu is not None and ev is not None:
            skipped += 1
            continue
        root = components.union(u, v)
        merged += 1
        entity_of.pop(ru, None)
        entity_of.pop(rv, None)
        if eu is not None or ev is not None:
            entity_of[root] = eu if eu is not None else ev

    clusters = []
    for group in components.groups():
        members = [node_from_key(n) for n in group if n[0] == MENTION]
        if members:
            clusters.append(Cluster(tuple(members), entity=entity_of.get(components.find(group[0]))))

    logger.info(f"Bottom-up clustering made {merged:,} merges, skipped {skipped:,} conflicting ones")
    return Clustering(clusters)
