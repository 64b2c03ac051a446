"""Nearest-centroid relevance classifier over document embeddings.

Training produces, per label, a normalized ground-truth vector (sum of the
label's document embeddings), an allowed distance (max or mean of the
training documents' own angles to that vector), and a sentence budget. At
crawl time a document earns a label when its relative distance (distance
divided by allowed distance) is at most 1; the smallest relative distance
picks the label and doubles as the inverted relevance score.
"""
from __future__ import annotations

import base64
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .embedding import (
    AdaptiveBudget,
    Budget,
    DocumentEmbedding,
    EmbeddingBackend,
    FixedBudget,
    angular_distance,
    embed_document,
    normalize,
)

logger = logging.getLogger(__name__)

# The four CTI sub-labels; every page holding one or more of them is relevant.
LABEL_TTPS = "TTPs"
LABEL_BROAD = "BroadInformation"
LABEL_MALWARE = "MalwareUsed"
LABEL_VULN = "VulnerabilityTargeted"
CANONICAL_LABELS = (LABEL_TTPS, LABEL_BROAD, LABEL_MALWARE, LABEL_VULN)

LABEL_RELEVANT = "Relevant"      # synthetic aggregate, no ground truth of its own
LABEL_NOT_RELEVANT = "NotRelevant"  # the complement class, never trained

MODEL_FORMAT_VERSION = 1


class TrainingError(ValueError):
    """Empty label sets, degenerate corpora, or malformed training input."""


@dataclass
class GroundTruth:
    label: str
    vector: np.ndarray
    allowed_distance: float
    sentence_budget: int
    distance_mode: str  # "max" or "average"


@dataclass
class LabelScore:
    distance: float
    relative_distance: float


@dataclass
class ClassificationResult:
    scores: dict[str, LabelScore] = field(default_factory=dict)
    assigned_label: Optional[str] = None
    relevant: bool = False


def _relative(distance: float, allowed: float) -> float:
    if allowed > 0.0:
        return distance / allowed
    # One-point classes have allowed distance 0: only an exact hit is inside.
    return 0.0 if distance == 0.0 else math.inf


def aggregate_allowed_distance(distances: Sequence[float], mode: str) -> float:
    """Allowed distance from a label's own training distances: max or average."""
    if not distances:
        raise TrainingError("no distances to aggregate")
    if mode == "max":
        return float(max(distances))
    if mode == "average":
        return float(sum(distances) / len(distances))
    raise ValueError(f"unknown distance mode {mode!r}")


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def train_ground_truth(
    docs: Sequence[tuple[Sequence[str], str]],
    backend: EmbeddingBackend,
    budget_mode: Budget,
    distance_mode: str = "max",
    train_aggregate: bool = False,
) -> dict[str, GroundTruth]:
    """Train per-label ground truths from (sentences, label) documents.

    With an adaptive budget the per-document stop indices under the gradient
    limit are averaged (rounded half-up) into the label's sentence budget;
    the documents are then re-embedded with that fixed budget. NotRelevant
    documents carry no ground truth and are ignored here (evaluation only).

    With train_aggregate a fifth vector for the synthetic Relevant label is
    trained over all relevant documents; it widens the relevance verdict in
    classify but never competes for the assigned label.
    """
    by_label: dict[str, list[Sequence[str]]] = {}
    for sentences, label in docs:
        if label == LABEL_NOT_RELEVANT:
            continue
        if not sentences:
            raise TrainingError(f"document with empty sentence list under {label!r}")
        by_label.setdefault(label, []).append(sentences)
    if not by_label:
        raise TrainingError("no labeled documents to train on")

    truths: dict[str, GroundTruth] = {}
    for label in sorted(by_label):
        truths[label] = _train_label(
            label, by_label[label], backend, budget_mode, distance_mode
        )
    if train_aggregate:
        all_docs = [doc for docs_ in by_label.values() for doc in docs_]
        truths[LABEL_RELEVANT] = _train_label(
            LABEL_RELEVANT, all_docs, backend, budget_mode, distance_mode
        )
    return truths


def _train_label(
    label: str,
    documents: list[Sequence[str]],
    backend: EmbeddingBackend,
    budget_mode: Budget,
    distance_mode: str,
) -> GroundTruth:
    if isinstance(budget_mode, AdaptiveBudget):
        stops = [
            embed_document(doc, backend, budget_mode).sentences_used
            for doc in documents
        ]
        budget = max(1, _round_half_up(sum(stops) / len(stops)))
    else:
        budget = budget_mode.n

    vectors = [
        embed_document(doc, backend, FixedBudget(budget)).vector
        for doc in documents
    ]
    total = np.sum(vectors, axis=0)
    if float(np.linalg.norm(total)) == 0.0:
        raise TrainingError(f"degenerate corpus: label {label!r} sums to zero vector")
    centroid = normalize(total)
    distances = [angular_distance(vec, centroid) for vec in vectors]
    return GroundTruth(
        label=label,
        vector=centroid,
        allowed_distance=aggregate_allowed_distance(distances, distance_mode),
        sentence_budget=budget,
        distance_mode=distance_mode,
    )


def classify(
    sentences: Sequence[str],
    truths: dict[str, GroundTruth],
    backend: EmbeddingBackend,
    assignment: str = "relative",
) -> ClassificationResult:
    """Label a document by relative distance to each ground-truth vector.

    The document is embedded once, incrementally, with the normalized running
    sum snapshotted at every label's sentence budget; each label scores its
    own snapshot. A document is relevant when some label's relative distance
    is <= 1; the assigned label is the argmin of relative distance among
    those, ties broken by ascending label name. assignment="absolute" is a
    test-only mode that assigns by raw distance instead.
    """
    if not truths:
        raise ValueError("classify requires at least one ground truth")
    if assignment not in ("relative", "absolute"):
        raise ValueError(f"unknown assignment mode {assignment!r}")
    if not sentences:
        return ClassificationResult(scores={}, assigned_label=None, relevant=False)

    budgets = {label: gt.sentence_budget for label, gt in truths.items()}
    emb = embed_document(
        sentences,
        backend,
        FixedBudget(max(budgets.values())),
        snapshots_at=set(budgets.values()),
    )

    scores: dict[str, LabelScore] = {}
    for label in sorted(truths):
        gt = truths[label]
        snapshot = emb.snapshots[gt.sentence_budget]
        distance = angular_distance(snapshot, gt.vector)
        scores[label] = LabelScore(
            distance=distance,
            relative_distance=_relative(distance, gt.allowed_distance),
        )

    sub_labels = [name for name in sorted(scores) if name != LABEL_RELEVANT]
    relevant = any(scores[name].relative_distance <= 1.0 for name in scores)
    assigned = None
    if assignment == "relative":
        admissible = [n for n in sub_labels if scores[n].relative_distance <= 1.0]
        if admissible:
            assigned = min(admissible, key=lambda n: (scores[n].relative_distance, n))
    else:
        admissible = [
            n for n in sub_labels
            if scores[n].distance <= truths[n].allowed_distance
        ]
        if admissible:
            assigned = min(admissible, key=lambda n: (scores[n].distance, n))
    return ClassificationResult(scores=scores, assigned_label=assigned,
                                relevant=relevant)


def relevance_rank_key(result: ClassificationResult) -> float:
    """Smallest relative distance; ascending sort gives the ranked output."""
    if not result.relevant:
        raise ValueError("rank key is only defined for relevant documents")
    return min(score.relative_distance for score in result.scores.values())


def embed_for_classification(
    sentences: Sequence[str],
    truths: dict[str, GroundTruth],
    backend: EmbeddingBackend,
) -> DocumentEmbedding:
    """Document embedding at the largest label budget (shared by diagnostics)."""
    budget = max(gt.sentence_budget for gt in truths.values())
    return embed_document(sentences, backend, FixedBudget(budget))


# -- result (de)serialization used by the document store --

def result_to_dict(result: ClassificationResult) -> dict:
    return {
        "scores": {
            name: {"distance": s.distance, "relative_distance": s.relative_distance}
            for name, s in result.scores.items()
        },
        "assigned_label": result.assigned_label,
        "relevant": result.relevant,
    }


def result_from_dict(raw: dict) -> ClassificationResult:
    scores = {
        name: LabelScore(distance=row["distance"],
                         relative_distance=row["relative_distance"])
        for name, row in raw.get("scores", {}).items()
    }
    return ClassificationResult(scores=scores,
                                assigned_label=raw.get("assigned_label"),
                                relevant=bool(raw.get("relevant", False)))


# -- model file --

def save_model(
    path: str | Path,
    truths: dict[str, GroundTruth],
    backend_name: str,
    dim: int,
    distance_mode: str,
) -> None:
    """Write the versioned JSON model file (vectors as base64 of LE float64)."""
    labels = []
    for name in sorted(truths):
        gt = truths[name]
        raw = np.asarray(gt.vector, dtype="<f8").tobytes()
        labels.append({
            "name": name,
            "vector": base64.b64encode(raw).decode("ascii"),
            "allowed_distance": gt.allowed_distance,
            "sentence_budget": gt.sentence_budget,
        })
    doc = {
        "version": MODEL_FORMAT_VERSION,
        "backend_name": backend_name,
        "D": dim,
        "distance_mode": distance_mode,
        "labels": labels,
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1),
                          encoding="utf-8")


def load_model(path: str | Path) -> tuple[dict[str, GroundTruth], dict]:
    """Read a model file back into ground truths plus {backend_name, D, ...}."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')!r}")
    dim = int(doc["D"])
    truths: dict[str, GroundTruth] = {}
    for row in doc["labels"]:
        raw = base64.b64decode(row["vector"])
        vector = np.frombuffer(raw, dtype="<f8").astype(np.float64)
        if vector.shape != (dim,):
            raise ValueError(
                f"label {row['name']!r} vector has {vector.shape[0]} dims, expected {dim}"
            )
        truths[row["name"]] = GroundTruth(
            label=row["name"],
            vector=vector,
            allowed_distance=float(row["allowed_distance"]),
            sentence_budget=int(row["sentence_budget"]),
            distance_mode=doc["distance_mode"],
        )
    meta = {"backend_name": doc["backend_name"], "D": dim,
            "distance_mode": doc["distance_mode"]}
    return truths, meta
