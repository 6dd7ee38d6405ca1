"""
Corpus I/O

Reading and writing of corpus records, affinity edges, clusterings,
resolution traces and evaluation reports.

Formats (all UTF-8):
- mentions / entities: JSON lines, one record per line
- affinity edges: tab-separated source_kind, source_id, target_kind, target_id, score
- clustering: tab-separated with header mention_id, cluster_id, kind, prediction, phi_star
- trace: JSON lines, one object per mention
- report: key=value lines
"""

import csv
import json
import logging
from collections import Counter
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from linking_model import (
    AffinityEdge,
    AffinityGraph,
    Cluster,
    Clustering,
    ENTITY,
    Entity,
    EntityId,
    GoldLabel,
    IngestionError,
    IntegrityError,
    KNOWN,
    MENTION,
    Mention,
    MentionId,
    NIL,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

ABSTAIN = "abstain"
CLUSTERING_HEADER = ["mention_id", "cluster_id", "kind", "prediction", "phi_star"]

MENTION_FIELDS = {"id", "surface", "context", "embedding", "gold"}
ENTITY_FIELDS = {"id", "label", "description", "embedding", "popularity"}


class TsvDialect(csv.Dialect):
    """Plain tab-separated rows: no quoting, so quote characters in ids stay literal."""
    delimiter = "\t"
    quotechar = None
    escapechar = None
    doublequote = False
    skipinitialspace = False
    lineterminator = "\n"
    quoting = csv.QUOTE_NONE


def _prepare_output(path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


# ==================== CORPUS RECORDS ====================

def _read_jsonl(path: PathLike) -> Iterator[Tuple[int, dict]]:
    """Yield (line number, object) for every non-blank line."""
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as e:
                raise IngestionError(f"{Path(path).name}: malformed JSON ({e.msg})", line=line_no) from e
            if not isinstance(data, dict):
                raise IngestionError(f"{Path(path).name}: expected a JSON object", line=line_no)
            yield line_no, data


def _parse_gold(value, line_no: int) -> Optional[GoldLabel]:
    if value is None:
        return None
    if not isinstance(value, dict) or "kind" not in value:
        raise IngestionError("gold must be an object with 'kind' and 'id'", line=line_no)
    return GoldLabel(value["kind"], value.get("id"))


def _check_dimension(record, dim: Optional[int], line_no: int) -> Optional[int]:
    if record.embedding is None:
        return dim
    size = record.embedding.shape[0]
    if dim is not None and size != dim:
        raise IngestionError(f"{record.id}: embedding dimension {size} differs from {dim} of earlier records",
                             line=line_no)
    return size


def _parse_records(path: PathLike, build, fields: set, kind: str) -> List:
    records = []
    seen = {}
    dim = None
    for line_no, data in _read_jsonl(path):
        unknown = set(data) - fields
        if unknown:
            logger.warning(f"{Path(path).name} line {line_no}: ignoring unknown fields {sorted(unknown)}")
        try:
            record = build(data, line_no)
        except IngestionError as e:
            if e.line is not None:
                raise
            raise IngestionError(str(e), line=line_no) from e
        except (KeyError, TypeError, ValueError) as e:
            raise IngestionError(f"invalid {kind} record ({e})", line=line_no) from e
        if record.id in seen:
            raise IngestionError(f"duplicate {kind} id {record.id} (first seen on line {seen[record.id]})",
                                 line=line_no)
        seen[record.id] = line_no
        dim = _check_dimension(record, dim, line_no)
        records.append(record)
    return records


def read_mentions(path: PathLike) -> List[Mention]:
    """Read mention records; see the module docstring for the format."""
    def build(data: dict, line_no: int) -> Mention:
        return Mention(
            id=data["id"],
            surface=data["surface"],
            context=data.get("context"),
            embedding=data.get("embedding"),
            gold=_parse_gold(data.get("gold"), line_no),
        )

    mentions = _parse_records(path, build, MENTION_FIELDS, MENTION)
    logger.info(f"Read {len(mentions):,} mentions from {path}")
    return mentions


def read_entities(path: PathLike) -> List[Entity]:
    def build(data: dict, line_no: int) -> Entity:
        return Entity(
            id=data["id"],
            label=data["label"],
            description=data.get("description"),
            embedding=data.get("embedding"),
            popularity=data.get("popularity", 0),
        )

    entities = _parse_records(path, build, ENTITY_FIELDS, ENTITY)
    logger.info(f"Read {len(entities):,} entities from {path}")
    return entities


def check_integrity(mentions: Sequence[Mention], entities: Sequence[Entity]) -> None:
    """Every known gold label must name a catalog entity."""
    catalog = {e.id for e in entities}
    for mention in mentions:
        if mention.gold is not None and mention.gold.is_known and mention.gold.id not in catalog:
            raise IntegrityError(f"Mention {mention.id} has gold entity {mention.gold.id} missing from the catalog")


def read_corpus(mentions_path: PathLike, entities_path: PathLike) -> Tuple[List[Mention], List[Entity]]:
    """
    Read and validate a corpus.

    Args:
        mentions_path: JSON-lines mention file
        entities_path: JSON-lines entity file

    Returns:
        (mentions, entities)

    Raises:
        IngestionError: malformed record, naming the line
        IntegrityError: gold label referencing an entity absent from the catalog
    """
    mentions = read_mentions(mentions_path)
    entities = read_entities(entities_path)
    check_integrity(mentions, entities)

    mention_dims = {m.embedding.shape[0] for m in mentions if m.embedding is not None}
    entity_dims = {e.embedding.shape[0] for e in entities if e.embedding is not None}
    if mention_dims and entity_dims and mention_dims != entity_dims:
        raise IngestionError(f"Entity embeddings have dimension {entity_dims.pop()}, "
                             f"mention embeddings {mention_dims.pop()}")
    return mentions, entities


def _embedding_list(embedding: Optional[np.ndarray]) -> Optional[List[float]]:
    return None if embedding is None else [float(x) for x in embedding]


def write_mentions(mentions: Iterable[Mention], path: PathLike) -> None:
    path = _prepare_output(path)
    with open(path, "w", encoding="utf-8") as f:
        for mention in mentions:
            record = {"id": str(mention.id), "surface": mention.surface}
            if mention.context is not None:
                record["context"] = mention.context
            if mention.embedding is not None:
                record["embedding"] = _embedding_list(mention.embedding)
            if mention.gold is not None:
                record["gold"] = {"kind": mention.gold.kind, "id": mention.gold.id}
            f.write(json.dumps(record, ensure_ascii=False) + "\n")


def write_entities(entities: Iterable[Entity], path: PathLike) -> None:
    path = _prepare_output(path)
    with open(path, "w", encoding="utf-8") as f:
        for entity in entities:
            record = {"id": str(entity.id), "label": entity.label, "popularity": entity.popularity}
            if entity.description is not None:
                record["description"] = entity.description
            if entity.embedding is not None:
                record["embedding"] = _embedding_list(entity.embedding)
            f.write(json.dumps(record, ensure_ascii=False) + "\n")


# ==================== AFFINITY EDGES ====================

def read_edges(path: PathLike) -> List[AffinityEdge]:
    """
    Read tab-separated affinity edges.

    Blank lines and lines starting with '#' are skipped. Sources must be
    mentions; targets are mentions or entities. Ids are taken verbatim,
    as in the JSONL corpus files.
    """
    edges = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        for line_no, row in enumerate(csv.reader(f, dialect=TsvDialect), start=1):
            if not row or not "".join(row).strip() or row[0].startswith("#"):
                continue
            if len(row) != 5:
                raise IngestionError(f"expected 5 tab-separated fields, got {len(row)}", line=line_no)
            source_kind, source_id, target_kind, target_id, score = row
            source_kind, target_kind, score = source_kind.strip(), target_kind.strip(), score.strip()
            if source_kind != MENTION:
                raise IngestionError(f"edge source must be a {MENTION}, got {source_kind!r}", line=line_no)
            if target_kind not in (MENTION, ENTITY):
                raise IngestionError(f"unknown target kind {target_kind!r}", line=line_no)
            if not source_id or not target_id:
                raise IngestionError("edge endpoints must be non-empty", line=line_no)
            try:
                value = float(score)
            except ValueError as e:
                raise IngestionError(f"score {score!r} is not a number", line=line_no) from e
            target = MentionId(target_id) if target_kind == MENTION else EntityId(target_id)
            try:
                edges.append(AffinityEdge(MentionId(source_id), target, value))
            except IngestionError as e:
                raise IngestionError(str(e), line=line_no) from e
    logger.info(f"Read {len(edges):,} affinity edges from {path}")
    return edges


def write_edges(edges: Union[AffinityGraph, Iterable[AffinityEdge]], path: PathLike) -> None:
    """Write affinity edges (or all stored edges of a graph) as TSV, sorted by endpoints."""
    if isinstance(edges, AffinityGraph):
        edges = edges.edges()
    path = _prepare_output(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, dialect=TsvDialect)
        for edge in sorted(edges, key=AffinityEdge.sort_key):
            writer.writerow([MENTION, str(edge.source), edge.target_kind, str(edge.target), repr(edge.score)])


# ==================== CLUSTERINGS ====================

def _row_kind(cluster: Cluster) -> str:
    if cluster.abstain:
        return ABSTAIN
    return KNOWN if cluster.entity is not None else NIL


def write_clustering(clustering: Clustering, trace, path: PathLike) -> None:
    """
    Write one row per mention, sorted by mention id.

    `prediction` is the entity id for known rows and the cluster id
    otherwise; `phi_star` is filled for known rows when a trace is given.
    """
    path = _prepare_output(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, dialect=TsvDialect)
        writer.writerow(CLUSTERING_HEADER)
        for mention_id in clustering.mention_ids:
            index = clustering.assignment[mention_id]
            cluster = clustering.clusters[index]
            cluster_id = clustering.cluster_id(index)
            kind = _row_kind(cluster)
            phi = trace.phi_star(mention_id) if trace is not None and kind == KNOWN else None
            writer.writerow([
                str(mention_id),
                cluster_id,
                kind,
                str(cluster.entity) if kind == KNOWN else cluster_id,
                "" if phi is None else repr(phi),
            ])
    logger.info(f"Wrote clustering of {len(clustering.assignment):,} mentions to {path}")


def read_clustering(path: PathLike) -> Tuple[Clustering, Dict[MentionId, float]]:
    """
    Read a clustering file written by write_clustering.

    Returns:
        (clustering, phi_star per known mention where present)
    """
    members: Dict[str, List[MentionId]] = {}
    kinds: Dict[str, Tuple[str, Optional[str]]] = {}
    phi_star: Dict[MentionId, float] = {}
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f, dialect=TsvDialect)
        header = next(reader, None)
        if header != CLUSTERING_HEADER:
            raise IngestionError(f"expected header {' '.join(CLUSTERING_HEADER)}", line=1)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CLUSTERING_HEADER):
                raise IngestionError(f"expected {len(CLUSTERING_HEADER)} fields, got {len(row)}", line=line_no)
            mention_id, cluster_id, kind, prediction, phi = row
            if kind not in (KNOWN, NIL, ABSTAIN):
                raise IngestionError(f"unknown row kind {kind!r}", line=line_no)
            entity = prediction if kind == KNOWN else None
            if kinds.setdefault(cluster_id, (kind, entity)) != (kind, entity):
                raise IngestionError(f"cluster {cluster_id} has inconsistent predictions", line=line_no)
            members.setdefault(cluster_id, []).append(MentionId(mention_id))
            if phi:
                try:
                    phi_star[MentionId(mention_id)] = float(phi)
                except ValueError as e:
                    raise IngestionError(f"phi_star {phi!r} is not a number", line=line_no) from e

    clusters = [
        Cluster(tuple(mention_ids), entity=kinds[cluster_id][1], abstain=kinds[cluster_id][0] == ABSTAIN)
        for cluster_id, mention_ids in members.items()
    ]
    return Clustering(clusters), phi_star


def write_trace(trace, path: PathLike) -> None:
    """Write the resolution trace as JSON lines, one object per mention."""
    path = _prepare_output(path)
    with open(path, "w", encoding="utf-8") as f:
        for entry in trace:
            record = {
                "mention": str(entry.mention),
                "candidate": None if entry.candidate is None else str(entry.candidate),
                "entity": None if entry.entity is None else str(entry.entity),
                "phi_star": entry.phi_star,
                "path": [[node.kind, str(node)] for node in entry.path],
            }
            f.write(json.dumps(record) + "\n")


# ==================== REPORTS ====================

def write_report(report, path: PathLike) -> None:
    """Write an evaluation report as key=value lines."""
    path = _prepare_output(path)
    with open(path, "w", encoding="utf-8") as f:
        for key, value in report.as_flat_dict().items():
            f.write(f"{key}={value}\n")


def read_report(path: PathLike) -> Dict[str, str]:
    values = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "=" not in line:
                raise IngestionError("expected key=value", line=line_no)
            key, value = line.split("=", 1)
            values[key] = value
    return values


def write_json(data, path: PathLike) -> None:
    path = _prepare_output(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")


# ==================== STATISTICS ====================

def corpus_statistics(mentions: Sequence[Mention], entities: Sequence[Entity]) -> Dict:
    """
    Descriptive statistics of a labelled corpus.

    Entities are counted from gold labels; NIL mentions without an entity id
    count as mentions only.
    """
    known_counts = Counter(m.gold.id for m in mentions if m.gold is not None and m.gold.is_known)
    nil_counts = Counter(m.gold.id for m in mentions
                         if m.gold is not None and not m.gold.is_known and m.gold.id is not None)
    nil_mentions = sum(1 for m in mentions if m.gold is not None and not m.gold.is_known)
    counts = list(known_counts.values()) + list(nil_counts.values())
    mentioned = len(counts)

    def share(predicate) -> float:
        return sum(1 for c in counts if predicate(c)) / mentioned if mentioned else 0.0

    return {
        "mentions": len(mentions),
        "mentions_known": sum(known_counts.values()),
        "mentions_nil": nil_mentions,
        "mentions_unlabelled": sum(1 for m in mentions if m.gold is None),
        "nil_mention_share": nil_mentions / len(mentions) if mentions else 0.0,
        "catalog_entities": len(entities),
        "entities_known": len(known_counts),
        "entities_nil": len(nil_counts),
        "share_mentioned_more_than_once": share(lambda c: c > 1),
        "share_mentioned_more_than_five_times": share(lambda c: c > 5),
        "mean_mentions_per_entity": float(np.mean(counts)) if counts else 0.0,
    }
