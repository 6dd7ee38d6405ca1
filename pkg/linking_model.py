"""
Linking Model

Shared domain types for NIL-aware entity linking: typed identifiers, mentions,
knowledge-base entities, gold labels, the sparse top-k affinity graph,
clustering thresholds and the clustering result itself.
"""

import logging
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

MENTION = "mention"
ENTITY = "entity"

KNOWN = "known"
NIL = "nil"


# ==================== ERRORS ====================

class LinkingError(Exception):
    """Base class for all errors raised by the linking engine."""


class ConfigurationError(LinkingError, ValueError):
    """Invalid parameters, thresholds or command inputs."""


class IngestionError(LinkingError, ValueError):
    """A record could not be read or is not well-formed."""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class IntegrityError(IngestionError):
    """A record references an identifier that does not exist."""


class GraphLookupError(LinkingError, LookupError):
    """An identifier is not part of the affinity graph."""


class ContractViolation(LinkingError, ValueError):
    """A caller broke the precondition of an operation."""


class EvaluationError(LinkingError, ValueError):
    """Gold labels are insufficient for the requested evaluation."""


# ==================== IDENTIFIERS ====================

class MentionId(str):
    """Identifier of a textual mention."""

    __slots__ = ()
    kind = MENTION

    def __repr__(self) -> str:
        return f"MentionId({str.__repr__(self)})"


class EntityId(str):
    """Identifier of a known entity in the reference KB."""

    __slots__ = ()
    kind = ENTITY

    def __repr__(self) -> str:
        return f"EntityId({str.__repr__(self)})"


NodeId = Union[MentionId, EntityId]
NodeKey = Tuple[str, str]


def node_key(node: NodeId) -> NodeKey:
    """Hashable key that keeps mention and entity namespaces apart."""
    if isinstance(node, MentionId):
        return (MENTION, str(node))
    if isinstance(node, EntityId):
        return (ENTITY, str(node))
    raise ContractViolation(f"Untyped identifier {node!r}; use MentionId or EntityId")


def node_from_key(key: NodeKey) -> NodeId:
    kind, value = key
    return MentionId(value) if kind == MENTION else EntityId(value)


def _as_mention_id(value) -> MentionId:
    return value if isinstance(value, MentionId) else MentionId(str(value))


def _as_entity_id(value) -> EntityId:
    return value if isinstance(value, EntityId) else EntityId(str(value))


# Ids travel through tab-separated files, which cannot hold these
_ID_FORBIDDEN = ("\t", "\n", "\r")


def _check_id_text(value: str, owner: str) -> None:
    if any(ch in value for ch in _ID_FORBIDDEN):
        raise IngestionError(f"{owner} id {value!r} must not contain tabs or line breaks")


def _as_embedding(values, owner: str) -> Optional[np.ndarray]:
    if values is None:
        return None
    vector = np.asarray(values, dtype=np.float64)
    if vector.ndim != 1 or vector.size == 0:
        raise IngestionError(f"{owner}: embedding must be a non-empty 1-D vector")
    if not np.all(np.isfinite(vector)):
        raise IngestionError(f"{owner}: embedding contains non-finite values")
    return vector


# ==================== RECORDS ====================

@dataclass(frozen=True)
class GoldLabel:
    """Gold reference for a mention: a known entity or a NIL entity."""
    kind: str
    id: Optional[str] = None  # None only for NIL labels under the partial completeness assumption

    def __post_init__(self):
        if self.kind not in (KNOWN, NIL):
            raise IngestionError(f"Gold label kind must be '{KNOWN}' or '{NIL}', got {self.kind!r}")
        if self.kind == KNOWN:
            if not self.id:
                raise IngestionError("Known gold label needs an entity id")
            object.__setattr__(self, "id", _as_entity_id(self.id))
        elif self.id is not None:
            object.__setattr__(self, "id", str(self.id))

    @classmethod
    def known(cls, entity_id: str) -> "GoldLabel":
        return cls(KNOWN, entity_id)

    @classmethod
    def nil(cls, nil_id: Optional[str] = None) -> "GoldLabel":
        return cls(NIL, nil_id)

    @property
    def is_known(self) -> bool:
        return self.kind == KNOWN


@dataclass
class Mention:
    """A textual occurrence of an entity."""
    id: MentionId
    surface: str
    context: Optional[str] = None
    embedding: Optional[np.ndarray] = field(default=None, compare=False)
    gold: Optional[GoldLabel] = None

    def __post_init__(self):
        if self.id is None or str(self.id) == "":
            raise IngestionError("Mention id must be non-empty")
        self.id = _as_mention_id(self.id)
        _check_id_text(self.id, "Mention")
        if not isinstance(self.surface, str) or not self.surface.strip():
            raise IngestionError(f"Mention {self.id}: surface must be non-empty")
        self.embedding = _as_embedding(self.embedding, f"Mention {self.id}")


@dataclass
class Entity:
    """A known entity of the reference knowledge base."""
    id: EntityId
    label: str
    description: Optional[str] = None
    embedding: Optional[np.ndarray] = field(default=None, compare=False)
    popularity: int = 0  # in- plus out-links in the KB

    def __post_init__(self):
        if self.id is None or str(self.id) == "":
            raise IngestionError("Entity id must be non-empty")
        self.id = _as_entity_id(self.id)
        _check_id_text(self.id, "Entity")
        if not isinstance(self.label, str) or not self.label.strip():
            raise IngestionError(f"Entity {self.id}: label must be non-empty")
        if isinstance(self.popularity, bool) or int(self.popularity) != self.popularity or self.popularity < 0:
            raise IngestionError(f"Entity {self.id}: popularity must be a non-negative integer")
        self.popularity = int(self.popularity)
        self.embedding = _as_embedding(self.embedding, f"Entity {self.id}")


def gold_labels(mentions: Iterable[Mention]) -> Dict[MentionId, GoldLabel]:
    """Collect the gold labels carried by mentions."""
    return {m.id: m.gold for m in mentions if m.gold is not None}


# ==================== AFFINITIES ====================

@dataclass(frozen=True)
class AffinityEdge:
    """A scored edge from a mention to another mention or to an entity."""
    source: MentionId
    target: NodeId
    score: float

    def __post_init__(self):
        if not isinstance(self.source, MentionId):
            raise IngestionError(f"Edge source {self.source!r} must be a MentionId")
        if not isinstance(self.target, (MentionId, EntityId)):
            raise IngestionError(f"Edge target {self.target!r} must be a MentionId or EntityId")
        score = float(self.score)
        if not math.isfinite(score) or score <= 0.0 or score > 1.0:
            raise IngestionError(f"Edge {self.source}->{self.target}: score {self.score!r} outside (0, 1]")
        if isinstance(self.target, MentionId) and self.target == self.source:
            raise IngestionError(f"Self-loop on mention {self.source}")
        _check_id_text(self.source, "Edge source")
        _check_id_text(self.target, "Edge target")
        object.__setattr__(self, "score", score)

    @property
    def target_kind(self) -> str:
        return self.target.kind

    def sort_key(self) -> Tuple[str, str, str]:
        return (str(self.source), self.target.kind, str(self.target))


@dataclass(frozen=True)
class Thresholds:
    """Clustering thresholds; all comparisons against them are strict (>)."""
    tau_m: float = 0.85
    tau_e: float = 0.9
    tau_a: float = 0.75

    def __post_init__(self):
        for name in ("tau_m", "tau_e", "tau_a"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not 0.0 <= value <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {value!r}")


class AffinityGraph:
    """
    Immutable sparse affinity graph over mentions and known entities.

    Stored edges are directed as supplied; mention-mention lookups are
    symmetric and return the larger score when both directions exist.
    """

    def __init__(self,
                 k: int,
                 mention_edges: Iterable[AffinityEdge] = (),
                 entity_edges: Iterable[AffinityEdge] = (),
                 mention_ids: Iterable = (),
                 entity_ids: Iterable = ()):
        if isinstance(k, bool) or not isinstance(k, int) or k < 1:
            raise ConfigurationError(f"k must be a positive integer, got {k!r}")
        self._k = k

        mentions = {_as_mention_id(m) for m in mention_ids}
        entities = {_as_entity_id(e) for e in entity_ids}
        stored_mm: Dict[MentionId, Dict[MentionId, float]] = {}
        stored_me: Dict[MentionId, Dict[EntityId, float]] = {}

        for edge in mention_edges:
            if edge.target_kind != MENTION:
                raise ConfigurationError(f"Edge {edge.source}->{edge.target} is not a mention-mention edge")
            self._store(stored_mm, edge)
            mentions.update((edge.source, edge.target))
        for edge in entity_edges:
            if edge.target_kind != ENTITY:
                raise ConfigurationError(f"Edge {edge.source}->{edge.target} is not a mention-entity edge")
            self._store(stored_me, edge)
            mentions.add(edge.source)
            entities.add(edge.target)

        for source, neighbors in list(stored_mm.items()) + list(stored_me.items()):
            if len(neighbors) > k:
                raise ConfigurationError(f"Mention {source} has {len(neighbors)} neighbours of one kind, more than k={k}")

        symmetric: Dict[MentionId, Dict[MentionId, float]] = {}
        for source, neighbors in stored_mm.items():
            for target, score in neighbors.items():
                for a, b in ((source, target), (target, source)):
                    row = symmetric.setdefault(a, {})
                    row[b] = max(score, row.get(b, 0.0))

        self._mention_ids = tuple(sorted(mentions))
        self._entity_ids = tuple(sorted(entities))
        self._mention_set = frozenset(self._mention_ids)
        self._entity_set = frozenset(self._entity_ids)
        self._stored_mm = stored_mm
        self._stored_me = stored_me
        self._mm = {m: MappingProxyType(row) for m, row in symmetric.items()}
        self._me = {m: MappingProxyType(row) for m, row in stored_me.items()}

    @staticmethod
    def _store(table: Dict, edge: AffinityEdge) -> None:
        row = table.setdefault(edge.source, {})
        previous = row.get(edge.target)
        if previous is not None and previous != edge.score:
            raise IngestionError(
                f"Conflicting scores for edge {edge.source}->{edge.target}: {previous} and {edge.score}")
        row[edge.target] = edge.score

    @property
    def k(self) -> int:
        return self._k

    @property
    def mention_ids(self) -> Tuple[MentionId, ...]:
        return self._mention_ids

    @property
    def entity_ids(self) -> Tuple[EntityId, ...]:
        return self._entity_ids

    def has_mention(self, mention_id) -> bool:
        return _as_mention_id(mention_id) in self._mention_set

    def affinity(self, a: MentionId, b: NodeId) -> float:
        """
        Affinity between mention a and a mention or entity b.

        Returns:
            The stored score, or 0.0 when the pair has no edge
        """
        if not isinstance(a, MentionId):
            raise ContractViolation(f"Affinity source must be a MentionId, got {a!r}")
        if a not in self._mention_set:
            raise GraphLookupError(f"Unknown mention {a}")
        if isinstance(b, MentionId):
            if b == a:
                raise ContractViolation(f"Self-affinity of {a} is undefined (no self-loops)")
            if b not in self._mention_set:
                raise GraphLookupError(f"Unknown mention {b}")
            return self._mm.get(a, {}).get(b, 0.0)
        if isinstance(b, EntityId):
            if b not in self._entity_set:
                raise GraphLookupError(f"Unknown entity {b}")
            return self._me.get(a, {}).get(b, 0.0)
        raise ContractViolation(f"Affinity target must be a MentionId or EntityId, got {b!r}")

    def mention_neighbors(self, mention_id: MentionId) -> Mapping[MentionId, float]:
        """Symmetric mention neighbourhood of a mention."""
        return self._mm.get(mention_id, MappingProxyType({}))

    def entity_neighbors(self, mention_id: MentionId) -> Mapping[EntityId, float]:
        return self._me.get(mention_id, MappingProxyType({}))

    def stored_targets(self, mention_id: MentionId, kind: str) -> FrozenSet[NodeId]:
        """Targets of the edges stored for a mention (before symmetric closure)."""
        table = self._stored_mm if kind == MENTION else self._stored_me
        return frozenset(table.get(mention_id, {}))

    def top_entity(self, mention_id: MentionId, above: float) -> Optional[EntityId]:
        """Highest-affinity entity of a mention if its score is > above; ties go to the lowest id."""
        best: Optional[EntityId] = None
        best_score = above
        for entity_id, score in sorted(self.entity_neighbors(mention_id).items()):
            if score > best_score:
                best, best_score = entity_id, score
        return best

    def mention_pairs(self) -> Iterator[Tuple[MentionId, MentionId, float]]:
        """Undirected mention pairs (a < b) with their symmetric score."""
        for a in self._mention_ids:
            for b, score in sorted(self.mention_neighbors(a).items()):
                if a < b:
                    yield a, b, score

    def mention_edges(self) -> List[AffinityEdge]:
        return [AffinityEdge(s, t, score)
                for s in sorted(self._stored_mm) for t, score in sorted(self._stored_mm[s].items())]

    def entity_edges(self) -> List[AffinityEdge]:
        return [AffinityEdge(s, t, score)
                for s in sorted(self._stored_me) for t, score in sorted(self._stored_me[s].items())]

    def edges(self) -> List[AffinityEdge]:
        return self.mention_edges() + self.entity_edges()

    def with_nodes(self, mention_ids: Iterable = (), entity_ids: Iterable = ()) -> "AffinityGraph":
        """Copy of the graph that also contains the given (possibly isolated) nodes."""
        return AffinityGraph(
            self._k,
            self.mention_edges(),
            self.entity_edges(),
            mention_ids=list(self._mention_ids) + [_as_mention_id(m) for m in mention_ids],
            entity_ids=list(self._entity_ids) + [_as_entity_id(e) for e in entity_ids],
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, AffinityGraph):
            return NotImplemented
        return (self._k == other._k
                and self._mention_ids == other._mention_ids
                and self._entity_ids == other._entity_ids
                and self._stored_mm == other._stored_mm
                and self._stored_me == other._stored_me)

    def __repr__(self) -> str:
        n_mm = sum(len(r) for r in self._stored_mm.values())
        n_me = sum(len(r) for r in self._stored_me.values())
        return (f"AffinityGraph(k={self._k}, mentions={len(self._mention_ids)}, "
                f"entities={len(self._entity_ids)}, mention_edges={n_mm}, entity_edges={n_me})")


def affinity(graph: AffinityGraph, a: MentionId, b: NodeId) -> float:
    """Convenience wrapper for AffinityGraph.affinity."""
    return graph.affinity(a, b)


# ==================== CLUSTERS ====================

@dataclass(frozen=True)
class Cluster:
    """
    A group of mentions with at most one linked entity.

    Clusters produced by initialisation carry the transient candidate set in
    `candidates`; abstaining clusters hold a single mention with no prediction.
    """
    mentions: Tuple[MentionId, ...]
    entity: Optional[EntityId] = None
    candidates: Tuple[EntityId, ...] = field(default=(), compare=False)
    abstain: bool = False

    def __post_init__(self):
        members = tuple(sorted({_as_mention_id(m) for m in self.mentions}))
        if not members:
            raise ContractViolation("A cluster needs at least one mention")
        object.__setattr__(self, "mentions", members)
        if self.entity is not None:
            object.__setattr__(self, "entity", _as_entity_id(self.entity))
        object.__setattr__(self, "candidates", tuple(sorted({_as_entity_id(e) for e in self.candidates})))
        if self.abstain and self.entity is not None:
            raise ContractViolation("An abstaining cluster cannot carry an entity")

    @property
    def is_nil(self) -> bool:
        return self.entity is None and not self.abstain

    def __len__(self) -> int:
        return len(self.mentions)


class Clustering:
    """A partition of mentions into clusters, kept in deterministic order."""

    def __init__(self, clusters: Iterable[Cluster]):
        ordered = sorted(clusters, key=lambda c: c.mentions[0])
        assignment: Dict[MentionId, int] = {}
        for index, cluster in enumerate(ordered):
            for mention_id in cluster.mentions:
                if mention_id in assignment:
                    raise ContractViolation(f"Mention {mention_id} appears in more than one cluster")
                assignment[mention_id] = index
        self._clusters = tuple(ordered)
        self._assignment = MappingProxyType(assignment)

    @property
    def clusters(self) -> Tuple[Cluster, ...]:
        return self._clusters

    @property
    def assignment(self) -> Mapping[MentionId, int]:
        return self._assignment

    @property
    def mention_ids(self) -> List[MentionId]:
        return sorted(self._assignment)

    @staticmethod
    def cluster_id(index: int) -> str:
        return f"c{index}"

    def cluster_of(self, mention_id: MentionId) -> Cluster:
        return self._clusters[self._assignment[mention_id]]

    def entity_of(self, mention_id: MentionId) -> Optional[EntityId]:
        return self.cluster_of(mention_id).entity

    def max_entities_per_cluster(self) -> int:
        """Largest number of entities (assigned or candidate) held by any cluster."""
        return max((len(c.candidates) if c.entity is None else 1 for c in self._clusters), default=0)

    def __len__(self) -> int:
        return len(self._clusters)

    def __iter__(self) -> Iterator[Cluster]:
        return iter(self._clusters)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Clustering):
            return NotImplemented
        return self._clusters == other._clusters

    def __repr__(self) -> str:
        return f"Clustering(clusters={len(self._clusters)}, mentions={len(self._assignment)})"
