"""
Nearest-Neighbour Index

Builds the top-k affinity graph from mention and entity embeddings. Affinity is
cosine similarity mapped from [-1, 1] to [0, 1] via (s + 1) / 2. The exact
brute-force backend is the default; an HNSW backend (faiss) can be swapped in
behind the same interface for large corpora.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from linking_model import (
    AffinityEdge,
    AffinityGraph,
    ConfigurationError,
    Entity,
    IngestionError,
    Mention,
    MentionId,
    ENTITY,
    MENTION,
)

logger = logging.getLogger(__name__)

DEFAULT_K = 4
QUERY_BATCH_SIZE = 512
BACKENDS = ("exact", "hnsw")

Neighbors = List[Tuple[int, float]]


@dataclass(frozen=True)
class IndexConfig:
    """Settings for top-k candidate retrieval."""
    k: int = DEFAULT_K
    backend: str = "exact"
    workers: int = 1
    hnsw_m: int = 32
    hnsw_ef_construction: int = 200
    hnsw_ef_search: int = 128

    similarity = "cosine"

    def __post_init__(self):
        if isinstance(self.k, bool) or not isinstance(self.k, int) or self.k < 1:
            raise ConfigurationError(f"k must be a positive integer, got {self.k!r}")
        if self.backend not in BACKENDS:
            raise ConfigurationError(f"Unknown index backend {self.backend!r}; choose from {', '.join(BACKENDS)}")
        if not isinstance(self.workers, int) or self.workers < 1:
            raise ConfigurationError(f"workers must be a positive integer, got {self.workers!r}")


def normalized_cosine(raw: np.ndarray) -> np.ndarray:
    """Map raw cosine similarity to [0, 1]."""
    return np.clip((raw + 1.0) / 2.0, 0.0, 1.0)


def embedding_matrix(records: Sequence, kind: str, dim: Optional[int] = None) -> np.ndarray:
    """
    Stack record embeddings into a row-normalised matrix.

    Args:
        records: Mentions or entities, in the row order wanted
        kind: "mention" or "entity", used in error messages
        dim: Expected dimension, if already fixed by another matrix

    Returns:
        Float64 matrix of shape (len(records), dim)
    """
    rows = []
    for record in records:
        if record.embedding is None:
            raise IngestionError(f"{kind.capitalize()} {record.id} has no embedding")
        if dim is None:
            dim = record.embedding.shape[0]
        elif record.embedding.shape[0] != dim:
            raise ConfigurationError(
                f"{kind.capitalize()} {record.id} has embedding dimension {record.embedding.shape[0]}, expected {dim}")
        rows.append(record.embedding)
    if not rows:
        return np.zeros((0, dim or 0), dtype=np.float64)
    matrix = np.vstack(rows).astype(np.float64, copy=False)
    norms = np.linalg.norm(matrix, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise IngestionError(f"{kind.capitalize()} {records[int(zero[0])].id} has a zero-length embedding")
    return matrix / norms[:, None]


def top_k_indices(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest positive scores; equal scores keep the lower index."""
    candidates = np.flatnonzero(scores > 0.0)
    if candidates.size > k:
        cut = np.partition(scores[candidates], candidates.size - k)[candidates.size - k]
        candidates = candidates[scores[candidates] >= cut]
    order = np.lexsort((candidates, -scores[candidates]))
    return candidates[order[:k]]


class ExactNeighborSearch:
    """Brute-force cosine search over a row-normalised corpus."""

    name = "exact"

    def __init__(self, corpus: np.ndarray, config: IndexConfig):
        self.corpus = corpus

    def search(self, queries: np.ndarray, k: int, self_offset: Optional[int] = None) -> List[Neighbors]:
        """
        Top-k neighbours for a batch of queries.

        Args:
            queries: Row-normalised query matrix
            k: Number of neighbours per query
            self_offset: Corpus row of the first query when queries are drawn
                from the corpus itself; those rows are excluded as self matches

        Returns:
            Per query, a list of (corpus row, score) pairs in rank order
        """
        if self.corpus.shape[0] == 0:
            return [[] for _ in range(queries.shape[0])]
        scores = normalized_cosine(queries @ self.corpus.T)
        if self_offset is not None:
            rows = np.arange(queries.shape[0])
            scores[rows, self_offset + rows] = -1.0
        results = []
        for row in scores:
            picked = top_k_indices(row, k)
            results.append([(int(j), float(row[j])) for j in picked])
        return results


class HnswNeighborSearch:
    """Approximate search on a faiss HNSW graph, re-scored exactly in float64."""

    name = "hnsw"

    def __init__(self, corpus: np.ndarray, config: IndexConfig):
        try:
            import faiss
        except ImportError as e:
            raise ConfigurationError("The hnsw backend needs the faiss-cpu package") from e

        self.corpus = corpus
        self.ef_search = config.hnsw_ef_search
        self.index = None
        if corpus.shape[0] == 0:
            return
        # Single-threaded insertion keeps the HNSW graph identical across runs
        faiss.omp_set_num_threads(1)
        self.index = faiss.IndexHNSWFlat(corpus.shape[1], config.hnsw_m, faiss.METRIC_INNER_PRODUCT)
        self.index.hnsw.efConstruction = config.hnsw_ef_construction
        self.index.add(np.ascontiguousarray(corpus, dtype=np.float32))
        logger.debug(f"Built HNSW index over {corpus.shape[0]:,} vectors (M={config.hnsw_m})")

    def search(self, queries: np.ndarray, k: int, self_offset: Optional[int] = None) -> List[Neighbors]:
        if self.index is None:
            return [[] for _ in range(queries.shape[0])]
        fetch = min(k + 1 if self_offset is not None else k, self.corpus.shape[0])
        self.index.hnsw.efSearch = max(self.ef_search, fetch)
        _, labels = self.index.search(np.ascontiguousarray(queries, dtype=np.float32), fetch)

        results = []
        for i, row in enumerate(labels):
            candidates = row[row >= 0]
            if self_offset is not None:
                candidates = candidates[candidates != self_offset + i]
            candidates = np.unique(candidates)
            scores = normalized_cosine(self.corpus[candidates] @ queries[i])
            keep = scores > 0.0
            candidates, scores = candidates[keep], scores[keep]
            order = np.lexsort((candidates, -scores))[:k]
            results.append([(int(candidates[j]), float(scores[j])) for j in order])
        return results


def get_neighbor_search(corpus: np.ndarray, config: IndexConfig):
    """Create the search backend named in the config."""
    if config.backend == "hnsw":
        return HnswNeighborSearch(corpus, config)
    return ExactNeighborSearch(corpus, config)


def _batched_search(search, queries: np.ndarray, k: int, exclude_self: bool, workers: int) -> List[Neighbors]:
    """Run a search in fixed-size batches; batch boundaries do not depend on the worker count."""
    starts = list(range(0, queries.shape[0], QUERY_BATCH_SIZE))

    def run(start: int) -> List[Neighbors]:
        batch = queries[start:start + QUERY_BATCH_SIZE]
        return search.search(batch, k, self_offset=start if exclude_self else None)

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            batches = list(executor.map(run, starts))
    else:
        batches = [run(start) for start in starts]
    return [neighbors for batch in batches for neighbors in batch]


def build_graph(mentions: Sequence[Mention],
                entities: Sequence[Entity],
                config: Optional[IndexConfig] = None) -> AffinityGraph:
    """
    Build the top-k affinity graph from embeddings.

    Args:
        mentions: Mentions, all carrying embeddings
        entities: Known entities, all carrying embeddings
        config: Retrieval settings (k, backend, workers)

    Returns:
        AffinityGraph with up to k mention and k entity neighbours per mention
    """
    config = config or IndexConfig()
    mentions = sorted(mentions, key=lambda m: m.id)
    entities = sorted(entities, key=lambda e: e.id)

    mention_matrix = embedding_matrix(mentions, "mention")
    dim = mention_matrix.shape[1] if mentions else None
    entity_matrix = embedding_matrix(entities, "entity", dim=dim)

    logger.info(f"Retrieving top-{config.k} candidates for {len(mentions):,} mentions "
                f"over {len(entities):,} entities ({config.backend} backend, {config.workers} worker(s))")

    mention_search = get_neighbor_search(mention_matrix, config)
    entity_search = get_neighbor_search(entity_matrix, config)
    mention_hits = _batched_search(mention_search, mention_matrix, config.k, True, config.workers)
    entity_hits = _batched_search(entity_search, mention_matrix, config.k, False, config.workers)

    mention_edges = []
    entity_edges = []
    for i, mention in enumerate(mentions):
        for j, score in mention_hits[i]:
            mention_edges.append(AffinityEdge(mention.id, mentions[j].id, score))
        for j, score in entity_hits[i]:
            entity_edges.append(AffinityEdge(mention.id, entities[j].id, score))

    graph = AffinityGraph(config.k, mention_edges, entity_edges,
                          mention_ids=[m.id for m in mentions],
                          entity_ids=[e.id for e in entities])
    logger.info(f"Built {graph!r}")
    return graph


def load_graph_from_edges(edges: Iterable[AffinityEdge],
                          k: int = DEFAULT_K,
                          mention_ids: Iterable = (),
                          entity_ids: Iterable = ()) -> AffinityGraph:
    """
    Build an affinity graph from externally computed edges.

    Each mention keeps its k highest-scoring mention edges and its k
    highest-scoring entity edges; equal scores keep the lower target id.

    Args:
        edges: Well-formed affinity edges
        k: Candidates kept per mention and kind
        mention_ids: Extra mentions to include even without edges
        entity_ids: Extra entities to include even without edges

    Returns:
        The truncated AffinityGraph
    """
    if isinstance(k, bool) or not isinstance(k, int) or k < 1:
        raise ConfigurationError(f"k must be a positive integer, got {k!r}")

    by_source: Dict[Tuple[MentionId, str], Dict] = {}
    total = 0
    for edge in edges:
        row = by_source.setdefault((edge.source, edge.target_kind), {})
        previous = row.get(edge.target)
        if previous is not None and previous != edge.score:
            raise IngestionError(
                f"Duplicate edge {edge.source}->{edge.target} with scores {previous} and {edge.score}")
        row[edge.target] = edge.score
        total += 1

    mention_edges = []
    entity_edges = []
    dropped = 0
    for (source, kind), row in sorted(by_source.items()):
        ranked = sorted(row.items(), key=lambda item: (-item[1], item[0]))
        dropped += max(0, len(ranked) - k)
        target_list = mention_edges if kind == MENTION else entity_edges
        target_list.extend(AffinityEdge(source, target, score) for target, score in ranked[:k])

    if dropped:
        logger.debug(f"Top-{k} truncation dropped {dropped:,} of {total:,} edges")
    return AffinityGraph(k, mention_edges, entity_edges, mention_ids=mention_ids, entity_ids=entity_ids)


def neighbor_recall(reference: AffinityGraph, candidate: AffinityGraph) -> float:
    """
    Recall of candidate's neighbour sets against a reference graph.

    Returns:
        Fraction of reference (mention, neighbour) pairs also present in candidate
    """
    expected = 0
    found = 0
    for mention_id in reference.mention_ids:
        for kind in (MENTION, ENTITY):
            want = reference.stored_targets(mention_id, kind)
            have = candidate.stored_targets(mention_id, kind)
            expected += len(want)
            found += len(want & have)
    return found / expected if expected else 1.0
