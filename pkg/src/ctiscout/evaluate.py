"""Offline evaluation: k-fold metrics, key sentences, harvest rate, crawl graph.

The k-fold harness trains on K-1 stratified folds and scores the held-out
fold with one-vs-rest precision/recall/F1 per label, averaged over folds,
plus an aggregate relevance row. The crawl graph is a directed multigraph
over stored documents with one edge per stored reference.
"""
from __future__ import annotations

import csv
import logging
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence
from xml.sax.saxutils import escape, quoteattr

from .classify import (
    LABEL_NOT_RELEVANT,
    LABEL_RELEVANT,
    train_ground_truth,
    classify,
)
from .embedding import Budget, EmbeddingBackend, cosine_similarity, embed_document
from .storage import DocumentStore, IndexRecord

logger = logging.getLogger(__name__)


# -- k-fold cross-validation -------------------------------------------------

@dataclass
class FoldMetrics:
    label: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class PredictionRecord:
    index: int
    fold: int
    true_label: str
    predicted_label: str
    relevant_true: bool
    relevant_pred: bool


@dataclass
class EvaluationReport:
    k: int
    metrics: dict[str, FoldMetrics]
    fold_sizes: list[int]
    predictions: list[PredictionRecord]
    per_fold: dict[str, list[FoldMetrics]] = field(default_factory=dict)
    wall_clock_s: float = 0.0


def stratified_folds(labels: Sequence[str], k: int) -> list[list[int]]:
    """Assign item indices to k folds, balancing each label greedily.

    Each label's items go one at a time to the fold with the fewest items of
    that label, ties broken by smallest fold, then lowest fold index. Labels
    with fewer than k items cannot appear in every fold; they are assigned
    the same way with a warning.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    by_label: dict[str, list[int]] = {}
    for idx, label in enumerate(labels):
        by_label.setdefault(label, []).append(idx)
    folds: list[list[int]] = [[] for _ in range(k)]
    per_label_counts = [dict.fromkeys(by_label, 0) for _ in range(k)]
    for label in sorted(by_label):
        items = by_label[label]
        if len(items) < k:
            logger.warning("label %r has only %d documents for %d folds; "
                           "some folds will lack it", label, len(items), k)
        for idx in items:
            fold = min(range(k), key=lambda f: (per_label_counts[f][label],
                                                len(folds[f]), f))
            folds[fold].append(idx)
            per_label_counts[fold][label] += 1
    return folds


def _fold_metrics(label: str, truths: list[str], preds: list[str]) -> FoldMetrics:
    tp = sum(1 for t, p in zip(truths, preds) if t == label and p == label)
    fp = sum(1 for t, p in zip(truths, preds) if t != label and p == label)
    fn = sum(1 for t, p in zip(truths, preds) if t == label and p != label)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    support = sum(1 for t in truths if t == label)
    return FoldMetrics(label=label, precision=precision, recall=recall,
                       f1=f1, support=support)


def kfold_evaluate(
    corpus: Sequence[tuple[Sequence[str], str]],
    k: int,
    backend: EmbeddingBackend,
    budget: Budget,
    distance_mode: str = "max",
    train_aggregate: bool = False,
) -> EvaluationReport:
    """Cross-validate the classifier over a labeled corpus.

    Documents labeled NotRelevant are never trained on but are classified
    (their correct prediction is "nothing admissible"). Reported labels are
    the trained ones plus a synthetic relevance row scoring the binary
    relevant/irrelevant verdict.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    started = time.perf_counter()
    labels = [label for _, label in corpus]
    folds = stratified_folds(labels, k)
    trained_labels = sorted({l for l in labels if l != LABEL_NOT_RELEVANT})

    predictions: list[PredictionRecord] = []
    per_fold: dict[str, list[FoldMetrics]] = {
        label: [] for label in trained_labels + [LABEL_RELEVANT]
    }
    for fold_no, test_idx in enumerate(folds):
        test_set = set(test_idx)
        train_docs = [corpus[i] for i in range(len(corpus)) if i not in test_set]
        truths = train_ground_truth(train_docs, backend, budget,
                                    distance_mode=distance_mode,
                                    train_aggregate=train_aggregate)
        fold_truths: list[str] = []
        fold_preds: list[str] = []
        for i in sorted(test_set):
            sentences, true_label = corpus[i]
            result = classify(sentences, truths, backend)
            predicted = result.assigned_label or LABEL_NOT_RELEVANT
            fold_truths.append(true_label)
            fold_preds.append(predicted)
            predictions.append(PredictionRecord(
                index=i, fold=fold_no, true_label=true_label,
                predicted_label=predicted,
                relevant_true=true_label != LABEL_NOT_RELEVANT,
                relevant_pred=result.relevant,
            ))
        for label in trained_labels:
            per_fold[label].append(_fold_metrics(label, fold_truths, fold_preds))
        rel_truths = ["y" if t != LABEL_NOT_RELEVANT else "n" for t in fold_truths]
        rel_preds = ["y" if predictions[j].relevant_pred else "n"
                     for j in range(len(predictions) - len(test_set),
                                    len(predictions))]
        relevant_row = _fold_metrics("y", rel_truths, rel_preds)
        relevant_row.label = LABEL_RELEVANT
        per_fold[LABEL_RELEVANT].append(relevant_row)

    metrics: dict[str, FoldMetrics] = {}
    for label, rows in per_fold.items():
        metrics[label] = FoldMetrics(
            label=label,
            precision=sum(r.precision for r in rows) / len(rows),
            recall=sum(r.recall for r in rows) / len(rows),
            f1=sum(r.f1 for r in rows) / len(rows),
            support=sum(r.support for r in rows),
        )
    return EvaluationReport(
        k=k,
        metrics=metrics,
        fold_sizes=[len(f) for f in folds],
        predictions=predictions,
        per_fold=per_fold,
        wall_clock_s=time.perf_counter() - started,
    )


# -- sentence importance ------------------------------------------------------

def most_important_sentences(
    sentences: Sequence[str],
    backend: EmbeddingBackend,
    budget: Budget,
    top_k: int = 15,
) -> list[tuple[str, float]]:
    """Sentences ranked by cosine similarity to the document embedding.

    Every sentence is scored, including those past the document's budget;
    descending similarity, ties kept in document order.
    """
    if not sentences:
        raise ValueError("need at least one sentence")
    doc_vector = embed_document(sentences, backend, budget).vector
    embeddings = backend.embed_sentences(list(sentences))
    scored = [(sentence, cosine_similarity(vec, doc_vector))
              for sentence, vec in zip(sentences, embeddings)]
    scored.sort(key=lambda pair: -pair[1])
    return scored[:top_k]


# -- harvest rate -------------------------------------------------------------

def record_is_relevant(record: IndexRecord) -> bool:
    """A processed row is relevant when its best relative distance is <= 1."""
    return bool(record.processed) and record.relative_distance is not None \
        and record.relative_distance <= 1.0


def harvest_rate(records: Iterable[IndexRecord]) -> float:
    """relevant / processed over the crawl index (error when none processed)."""
    processed = 0
    relevant = 0
    for record in records:
        if not record.processed:
            continue
        processed += 1
        if record_is_relevant(record):
            relevant += 1
    if processed == 0:
        raise ValueError("harvest rate is undefined on an empty crawl index")
    return relevant / processed


# -- crawl multigraph ---------------------------------------------------------

@dataclass
class GraphNode:
    url: str
    relevant: bool
    label: Optional[str]
    rank_key: Optional[float]


@dataclass
class CrawlGraph:
    nodes: dict[str, GraphNode]
    edges: list[tuple[str, str]]  # one entry per reference (parallel edges kept)

    def weakly_connected_components(self) -> int:
        adjacency: dict[str, set[str]] = {url: set() for url in self.nodes}
        for src, dst in self.edges:
            adjacency[src].add(dst)
            adjacency[dst].add(src)
        seen: set[str] = set()
        components = 0
        for start in self.nodes:
            if start in seen:
                continue
            components += 1
            queue = deque([start])
            seen.add(start)
            while queue:
                node = queue.popleft()
                for neighbor in adjacency[node]:
                    if neighbor not in seen:
                        seen.add(neighbor)
                        queue.append(neighbor)
        return components


def build_crawl_graph(store: DocumentStore) -> CrawlGraph:
    """Directed multigraph over stored documents.

    Nodes are all stored documents; edges follow stored references whose
    target was itself crawled, one edge per reference occurrence.
    """
    latest = store.latest()
    nodes: dict[str, GraphNode] = {}
    for url, record in latest.items():
        relevant = record_is_relevant(record)
        nodes[url] = GraphNode(
            url=url,
            relevant=relevant,
            label=record.label,
            rank_key=record.relative_distance if relevant else None,
        )
    edges: list[tuple[str, str]] = []
    for url, record in latest.items():
        if not record.processed:
            continue
        for ref in store.links_of(url):
            if ref in nodes:
                edges.append((url, ref))
    return CrawlGraph(nodes=nodes, edges=edges)


def _dot_quote(value: str) -> str:
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'


def write_dot(graph: CrawlGraph, path: str | Path) -> None:
    lines = ["digraph crawl {"]
    for url in sorted(graph.nodes):
        node = graph.nodes[url]
        attrs = [f"relevant={str(node.relevant).lower()}"]
        if node.label is not None:
            attrs.append(f"label={_dot_quote(node.label)}")
        if node.rank_key is not None:
            attrs.append(f"rank_key={node.rank_key:.6f}")
        lines.append(f"  {_dot_quote(url)} [{', '.join(attrs)}];")
    for src, dst in graph.edges:
        lines.append(f"  {_dot_quote(src)} -> {_dot_quote(dst)};")
    lines.append("}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_graphml(graph: CrawlGraph, path: str | Path) -> None:
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<graphml xmlns="http://graphml.graphdrawing.org/xmlns">',
        '<key id="relevant" for="node" attr.name="relevant" attr.type="boolean"/>',
        '<key id="label" for="node" attr.name="label" attr.type="string"/>',
        '<key id="rank_key" for="node" attr.name="rank_key" attr.type="double"/>',
        '<graph edgedefault="directed">',
    ]
    for url in sorted(graph.nodes):
        node = graph.nodes[url]
        out.append(f"<node id={quoteattr(url)}>")
        out.append(f'<data key="relevant">{str(node.relevant).lower()}</data>')
        if node.label is not None:
            out.append(f'<data key="label">{escape(node.label)}</data>')
        if node.rank_key is not None:
            out.append(f'<data key="rank_key">{node.rank_key:.6f}</data>')
        out.append("</node>")
    for src, dst in graph.edges:
        out.append(f"<edge source={quoteattr(src)} target={quoteattr(dst)}/>")
    out.append("</graph>")
    out.append("</graphml>")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


# -- reports ------------------------------------------------------------------

def write_metrics_csv(report: EvaluationReport, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["label", "precision", "recall", "f1", "support"])
        for label in sorted(report.metrics):
            row = report.metrics[label]
            writer.writerow([label, f"{row.precision:.4f}", f"{row.recall:.4f}",
                             f"{row.f1:.4f}", row.support])


def format_metrics_table(report: EvaluationReport) -> str:
    header = f"{'label':24} {'prec':>7} {'rec':>7} {'f1':>7} {'support':>8}"
    lines = [header, "-" * len(header)]
    for label in sorted(report.metrics):
        row = report.metrics[label]
        lines.append(f"{label:24} {row.precision:7.4f} {row.recall:7.4f} "
                     f"{row.f1:7.4f} {row.support:8d}")
    lines.append(f"folds: {report.fold_sizes}  "
                 f"wall clock: {report.wall_clock_s:.2f}s")
    return "\n".join(lines)
