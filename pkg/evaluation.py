"""
Linking Evaluator

Scores a predicted clustering against gold labels. Classification metrics
(precision, recall, F1) are reported for known entities, for NIL entities and
over all mentions (micro). Predicted NIL clusters are matched to gold NIL
entities by an optimal one-to-one assignment. NMI and ARI are reported per
segment as clustering metrics.
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from jinja2 import Environment, FileSystemLoader
from scipy.optimize import linear_sum_assignment
from sklearn.metrics import adjusted_rand_score, normalized_mutual_info_score

from linking_model import Clustering, EvaluationError, GoldLabel, MentionId

logger = logging.getLogger(__name__)

FULL_GOLD = "full-gold"
PCA = "pca"
MODES = (FULL_GOLD, PCA)

KNOWN_SEGMENT = "known"
NIL_SEGMENT = "nil"
MICRO_SEGMENT = "micro"
SEGMENTS = (KNOWN_SEGMENT, NIL_SEGMENT, MICRO_SEGMENT)

TEMPLATE_DIR = Path(__file__).resolve().parent / "templates"


@dataclass
class SegmentScores:
    """Metrics for one segment of the mentions."""
    precision: float
    recall: float
    f1: float
    predictions: int
    correct: int
    support: int
    empty: bool = False  # no predictions and no gold mentions; scores set to 1.0
    nmi: Optional[float] = None
    ari: Optional[float] = None


@dataclass
class ClusterSummary:
    """Shape of a clustering, as relevant for populating a KB."""
    known_clusters: int
    nil_clusters: int
    abstentions: int
    mean_known_cluster_size: float
    mean_nil_cluster_size: float

    @property
    def nil_entities_added(self) -> int:
        """New entities the KB would gain: one per NIL cluster."""
        return self.nil_clusters


@dataclass
class EvalReport:
    mode: str
    known: SegmentScores
    micro: SegmentScores
    nil: Optional[SegmentScores] = None
    mapping: Dict[str, str] = field(default_factory=dict)
    summary: Optional[ClusterSummary] = None
    evaluated_at: str = field(default_factory=lambda: datetime.now().isoformat())

    def segments(self) -> Dict[str, SegmentScores]:
        scores = {KNOWN_SEGMENT: self.known}
        if self.nil is not None:
            scores[NIL_SEGMENT] = self.nil
        scores[MICRO_SEGMENT] = self.micro
        return scores

    def as_flat_dict(self) -> Dict[str, str]:
        """Flat key/value view, e.g. {"micro.f1": "0.9", "mapping.c3": "n1"}."""
        flat = {"mode": self.mode}
        for name, scores in self.segments().items():
            for key, value in asdict(scores).items():
                if value is None:
                    continue
                flat[f"{name}.{key}"] = _format_value(value)
        if self.summary is not None:
            for key, value in asdict(self.summary).items():
                flat[f"summary.{key}"] = _format_value(value)
            flat["summary.nil_entities_added"] = str(self.summary.nil_entities_added)
        for cluster_id, gold_id in sorted(self.mapping.items()):
            flat[f"mapping.{cluster_id}"] = gold_id
        return flat


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


# ==================== CLASSIFICATION METRICS ====================

def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def score_segment(correct: int, predictions: int, support: int) -> SegmentScores:
    """
    Precision, recall and F1 from counts.

    An entirely empty segment scores 1.0 and is flagged; otherwise an empty
    denominator yields 0.
    """
    if predictions == 0 and support == 0:
        return SegmentScores(1.0, 1.0, 1.0, 0, 0, 0, empty=True)
    precision = correct / predictions if predictions else 0.0
    recall = correct / support if support else 0.0
    return SegmentScores(precision, recall, f1_score(precision, recall), predictions, correct, support)


def solve_overlap_assignment(overlap: np.ndarray) -> Tuple[List[Tuple[int, int]], int]:
    """
    One-to-one assignment of rows to columns maximising the summed overlap.

    Returns:
        (assigned (row, column) pairs, total overlap of the assignment)
    """
    overlap = np.asarray(overlap)
    if overlap.size == 0:
        return [], 0
    rows, cols = linear_sum_assignment(overlap, maximize=True)
    pairs = [(int(r), int(c)) for r, c in zip(rows, cols)]
    return pairs, int(overlap[rows, cols].sum())


def nil_clusters_of(clustering: Clustering) -> Dict[str, Tuple[MentionId, ...]]:
    """Predicted NIL clusters keyed by cluster id (abstentions excluded)."""
    return {clustering.cluster_id(i): c.mentions for i, c in enumerate(clustering.clusters) if c.is_nil}


def optimal_nil_mapping(nil_clusters: Mapping[str, Sequence[MentionId]],
                        gold: Mapping[MentionId, GoldLabel]) -> Dict[str, str]:
    """
    Map predicted NIL clusters one-to-one onto gold NIL entities.

    The mapping maximises the number of mentions whose cluster maps to their
    gold NIL entity. Clusters without any gold NIL mention are left out.

    Returns:
        {predicted cluster id: gold NIL id}
    """
    counts: Dict[str, Dict[str, int]] = {}
    for cluster_id, members in nil_clusters.items():
        for mention_id in members:
            label = gold.get(mention_id)
            if label is None or label.is_known:
                continue
            if label.id is None:
                raise EvaluationError(f"Mention {mention_id} has a NIL label without an entity id")
            row = counts.setdefault(cluster_id, {})
            row[label.id] = row.get(label.id, 0) + 1

    row_ids = sorted(counts)
    col_ids = sorted({g for row in counts.values() for g in row})
    if not row_ids:
        return {}
    col_index = {g: j for j, g in enumerate(col_ids)}
    overlap = np.zeros((len(row_ids), len(col_ids)), dtype=np.int64)
    for i, cluster_id in enumerate(row_ids):
        for gold_id, count in counts[cluster_id].items():
            overlap[i, col_index[gold_id]] = count

    pairs, total = solve_overlap_assignment(overlap)
    logger.debug(f"Mapped {len(pairs):,} NIL clusters onto gold NIL entities ({total:,} mentions)")
    return {row_ids[r]: col_ids[c] for r, c in pairs}


def _check_gold(clustering: Clustering, gold: Mapping[MentionId, GoldLabel]) -> None:
    for mention_id in clustering.mention_ids:
        if mention_id not in gold:
            raise EvaluationError(f"Mention {mention_id} has no gold label")
    extra = [m for m in gold if m not in clustering.assignment]
    if extra:
        raise EvaluationError(f"Gold mention {sorted(extra)[0]} has no prediction")


def classification_metrics(clustering: Clustering,
                           gold: Mapping[MentionId, GoldLabel],
                           mapping: Optional[Mapping[str, str]] = None,
                           mode: str = FULL_GOLD) -> Dict[str, SegmentScores]:
    """
    Per-segment precision, recall and F1.

    In full-gold mode, a known prediction is correct if it names the gold
    entity and a NIL prediction is correct if its cluster maps to the gold
    NIL entity. In PCA mode only known predictions count: those made for
    gold-NIL mentions are wrong, NIL clusters are treated as abstentions,
    and no NIL segment is reported.

    Args:
        clustering: Predicted clustering
        gold: Gold label per mention
        mapping: NIL cluster mapping; computed optimally if omitted
        mode: "full-gold" or "pca"
    """
    if mode not in MODES:
        raise EvaluationError(f"Unknown evaluation mode {mode!r}")
    _check_gold(clustering, gold)

    if mode == PCA:
        known_predictions = known_correct = all_known_predictions = known_support = 0
        for index, cluster in enumerate(clustering.clusters):
            for mention_id in cluster.mentions:
                label = gold[mention_id]
                if label.is_known:
                    known_support += 1
                if cluster.entity is None:
                    continue
                all_known_predictions += 1
                if label.is_known:
                    known_predictions += 1
                    known_correct += int(label.id == cluster.entity)
        return {
            KNOWN_SEGMENT: score_segment(known_correct, known_predictions, known_support),
            MICRO_SEGMENT: score_segment(known_correct, all_known_predictions, known_support),
        }

    if mapping is None:
        mapping = optimal_nil_mapping(nil_clusters_of(clustering), gold)

    counts = {segment: {"correct": 0, "predictions": 0} for segment in (KNOWN_SEGMENT, NIL_SEGMENT)}
    support = {KNOWN_SEGMENT: 0, NIL_SEGMENT: 0}
    for index, cluster in enumerate(clustering.clusters):
        cluster_id = clustering.cluster_id(index)
        for mention_id in cluster.mentions:
            label = gold[mention_id]
            if not label.is_known and label.id is None:
                raise EvaluationError(f"Mention {mention_id} has a NIL label without an entity id")
            support[KNOWN_SEGMENT if label.is_known else NIL_SEGMENT] += 1
            if cluster.abstain:
                continue
            if cluster.entity is not None:
                counts[KNOWN_SEGMENT]["predictions"] += 1
                counts[KNOWN_SEGMENT]["correct"] += int(label.is_known and label.id == cluster.entity)
            else:
                counts[NIL_SEGMENT]["predictions"] += 1
                counts[NIL_SEGMENT]["correct"] += int(not label.is_known and mapping.get(cluster_id) == label.id)

    scores = {
        segment: score_segment(counts[segment]["correct"], counts[segment]["predictions"], support[segment])
        for segment in (KNOWN_SEGMENT, NIL_SEGMENT)
    }
    scores[MICRO_SEGMENT] = score_segment(
        sum(c["correct"] for c in counts.values()),
        sum(c["predictions"] for c in counts.values()),
        sum(support.values()),
    )
    return scores


# ==================== CLUSTERING METRICS ====================

def _segment_labels(clustering: Clustering,
                    gold: Mapping[MentionId, GoldLabel],
                    segment: str) -> Tuple[List[str], List[int]]:
    if segment not in SEGMENTS:
        raise EvaluationError(f"Unknown segment {segment!r}")
    true_labels, predicted = [], []
    for mention_id in clustering.mention_ids:
        label = gold.get(mention_id)
        if label is None:
            raise EvaluationError(f"Mention {mention_id} has no gold label")
        if label.id is None:
            raise EvaluationError(f"Clustering metrics need NIL entity ids (mention {mention_id})")
        if segment == KNOWN_SEGMENT and not label.is_known:
            continue
        if segment == NIL_SEGMENT and label.is_known:
            continue
        true_labels.append(f"{label.kind}:{label.id}")
        predicted.append(clustering.assignment[mention_id])
    return true_labels, predicted


def nmi(clustering: Clustering, gold: Mapping[MentionId, GoldLabel], segment: str = MICRO_SEGMENT) -> float:
    """Normalised mutual information (arithmetic-mean normalisation) of one segment."""
    true_labels, predicted = _segment_labels(clustering, gold, segment)
    if not true_labels:
        return 1.0
    return float(normalized_mutual_info_score(true_labels, predicted, average_method="arithmetic"))


def ari(clustering: Clustering, gold: Mapping[MentionId, GoldLabel], segment: str = MICRO_SEGMENT) -> float:
    """Adjusted Rand index of one segment; every predicted cluster counts separately."""
    true_labels, predicted = _segment_labels(clustering, gold, segment)
    if not true_labels:
        return 1.0
    return float(adjusted_rand_score(true_labels, predicted))


def summarize_clusters(clustering: Clustering) -> ClusterSummary:
    known_sizes = [len(c) for c in clustering if c.entity is not None]
    nil_sizes = [len(c) for c in clustering if c.is_nil]
    return ClusterSummary(
        known_clusters=len(known_sizes),
        nil_clusters=len(nil_sizes),
        abstentions=sum(len(c) for c in clustering if c.abstain),
        mean_known_cluster_size=float(np.mean(known_sizes)) if known_sizes else 0.0,
        mean_nil_cluster_size=float(np.mean(nil_sizes)) if nil_sizes else 0.0,
    )


# ==================== REPORTING ====================

class LinkingEvaluator:
    """Evaluates clusterings and renders evaluation reports."""

    def __init__(self, template_dir: Path = TEMPLATE_DIR):
        self.environment = Environment(
            loader=FileSystemLoader(str(template_dir)),
            trim_blocks=True,
            lstrip_blocks=True,
            keep_trailing_newline=True,
        )

    def evaluate(self,
                 clustering: Clustering,
                 gold: Mapping[MentionId, GoldLabel],
                 mode: str = FULL_GOLD) -> EvalReport:
        """
        Compute the full evaluation report.

        Args:
            clustering: Predicted clustering
            gold: Gold label per mention
            mode: "full-gold" or "pca"

        Returns:
            EvalReport with per-segment scores, the NIL mapping and a cluster summary
        """
        mapping = {}
        if mode == FULL_GOLD:
            _check_gold(clustering, gold)
            mapping = optimal_nil_mapping(nil_clusters_of(clustering), gold)
        scores = classification_metrics(clustering, gold, mapping=mapping, mode=mode)

        if mode == FULL_GOLD:
            for segment, segment_scores in scores.items():
                segment_scores.nmi = nmi(clustering, gold, segment)
                segment_scores.ari = ari(clustering, gold, segment)

        report = EvalReport(
            mode=mode,
            known=scores[KNOWN_SEGMENT],
            nil=scores.get(NIL_SEGMENT),
            micro=scores[MICRO_SEGMENT],
            mapping=mapping,
            summary=summarize_clusters(clustering),
        )
        logger.info(f"Evaluated {len(clustering.assignment):,} mentions ({mode}): "
                    f"micro P={report.micro.precision:.3f} R={report.micro.recall:.3f} F1={report.micro.f1:.3f}")
        return report

    def render_report(self, report: EvalReport, title: str = "Linking evaluation") -> str:
        """Human-readable text report."""
        template = self.environment.get_template("report.txt.j2")
        return template.render(report=report, title=title, segments=report.segments())

    def export_report_data(self, report: EvalReport) -> str:
        """Export the report as JSON for external use."""
        data = {
            "mode": report.mode,
            "evaluated_at": report.evaluated_at,
            "segments": {name: asdict(scores) for name, scores in report.segments().items()},
            "mapping": dict(sorted(report.mapping.items())),
            "summary": asdict(report.summary) if report.summary else None,
        }
        return json.dumps(data, indent=2)


# Global instance
linking_evaluator = LinkingEvaluator()


def evaluate_clustering(clustering: Clustering,
                        gold: Mapping[MentionId, GoldLabel],
                        mode: str = FULL_GOLD) -> EvalReport:
    """Convenience function to evaluate a clustering."""
    return linking_evaluator.evaluate(clustering, gold, mode=mode)
