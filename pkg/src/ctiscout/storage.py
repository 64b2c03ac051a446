"""Durable document store: append-only JSONL index + content-addressed blobs.

Index lines carry {url, status, content_type, blob, processed, label,
distance, relative_distance, timestamp}; the latest line per URL wins, which
is how store_processed overwrites the raw record. Raw bytes live in
blobs/<digest[:2]>/<digest> keyed by SHA-256; extraction and classification
detail for processed documents lives next to them under meta/.
"""
from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

from .classify import ClassificationResult, result_from_dict, result_to_dict


class StorageError(RuntimeError):
    """Retriable persistence failure."""


@dataclass
class StoredDocument:
    """Raw bytes plus fetch metadata, later enriched by the extractor."""

    url: str
    fetch_status: int
    content_type: str
    raw_body: bytes
    extracted_text: Optional[str] = None
    extracted_links: Optional[list[str]] = None  # per-reference, keeps multiplicity
    classification: Optional[ClassificationResult] = None
    processed: bool = False
    fetched_at: float = field(default_factory=time.time)


@dataclass
class IndexRecord:
    url: str
    status: int
    content_type: str
    blob: Optional[str]
    processed: bool
    label: Optional[str]
    distance: Optional[float]
    relative_distance: Optional[float]
    timestamp: float


class DocumentStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.blob_dir = self.root / "blobs"
        self.meta_dir = self.root / "meta"
        self.index_path = self.root / "index.jsonl"
        self.blob_dir.mkdir(parents=True, exist_ok=True)
        self.meta_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def store_raw(self, doc: StoredDocument) -> None:
        digest = self._write_blob(doc.raw_body)
        self._append_index(doc, digest)

    def store_processed(self, doc: StoredDocument) -> None:
        if not doc.processed:
            raise ValueError("store_processed requires doc.processed = True")
        if doc.extracted_text is None or doc.classification is None:
            raise ValueError(
                "processed documents must carry extracted_text and classification"
            )
        digest = self._write_blob(doc.raw_body)
        meta = {
            "url": doc.url,
            "extracted_text": doc.extracted_text,
            "extracted_links": doc.extracted_links or [],
            "classification": result_to_dict(doc.classification),
        }
        meta_path = self.meta_dir / f"{digest}.json"
        meta_path.write_text(json.dumps(meta, sort_keys=True), encoding="utf-8")
        self._append_index(doc, digest)

    def get(self, url: str) -> Optional[StoredDocument]:
        record = self.latest().get(url)
        if record is None:
            return None
        body = b""
        if record.blob:
            blob_path = self._blob_path(record.blob)
            if blob_path.exists():
                body = blob_path.read_bytes()
        doc = StoredDocument(
            url=record.url,
            fetch_status=record.status,
            content_type=record.content_type,
            raw_body=body,
            processed=record.processed,
            fetched_at=record.timestamp,
        )
        if record.processed and record.blob:
            meta_path = self.meta_dir / f"{record.blob}.json"
            if meta_path.exists():
                meta = json.loads(meta_path.read_text(encoding="utf-8"))
                doc.extracted_text = meta.get("extracted_text")
                doc.extracted_links = meta.get("extracted_links")
                raw = meta.get("classification")
                doc.classification = result_from_dict(raw) if raw else None
        return doc

    def links_of(self, url: str) -> list[str]:
        """Stored outgoing references (with multiplicity) of a processed doc."""
        record = self.latest().get(url)
        if record is None or not record.processed or not record.blob:
            return []
        meta_path = self.meta_dir / f"{record.blob}.json"
        if not meta_path.exists():
            return []
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        return list(meta.get("extracted_links", []))

    def iter_index(self) -> Iterator[IndexRecord]:
        """Yield every index line in append order."""
        if not self.index_path.exists():
            return
        with self.index_path.open(encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                yield IndexRecord(
                    url=row["url"],
                    status=row["status"],
                    content_type=row["content_type"],
                    blob=row["blob"],
                    processed=bool(row["processed"]),
                    label=row.get("label"),
                    distance=row.get("distance"),
                    relative_distance=row.get("relative_distance"),
                    timestamp=row.get("timestamp", 0.0),
                )

    def latest(self) -> dict[str, IndexRecord]:
        """Latest record per URL, keyed by URL, insertion-ordered by first sighting."""
        records: dict[str, IndexRecord] = {}
        for record in self.iter_index():
            records[record.url] = record
        return records

    def _blob_path(self, digest: str) -> Path:
        return self.blob_dir / digest[:2] / digest

    def _write_blob(self, body: bytes) -> str:
        digest = hashlib.sha256(body).hexdigest()
        path = self._blob_path(digest)
        if not path.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            try:
                tmp.write_bytes(body)
                tmp.replace(path)
            except OSError as exc:
                raise StorageError(f"blob write failed: {exc}") from exc
        return digest

    def _append_index(self, doc: StoredDocument, digest: str) -> None:
        label = None
        distance = None
        relative = None
        result = doc.classification
        if result is not None and result.scores:
            if result.assigned_label:
                label = result.assigned_label
                score = result.scores[label]
            else:
                # keep the best score so the row still tells how close the
                # document came (and whether an aggregate-only verdict fired)
                score = min(result.scores.values(),
                            key=lambda s: s.relative_distance)
            distance = score.distance
            relative = score.relative_distance
        row = {
            "url": doc.url,
            "status": doc.fetch_status,
            "content_type": doc.content_type,
            "blob": digest,
            "processed": doc.processed,
            "label": label,
            "distance": distance,
            "relative_distance": relative,
            "timestamp": doc.fetched_at,
        }
        line = json.dumps(row, sort_keys=True)
        with self._lock:
            try:
                with self.index_path.open("a", encoding="utf-8") as handle:
                    handle.write(line + "\n")
            except OSError as exc:
                raise StorageError(f"index append failed: {exc}") from exc


@dataclass
class SkipRecord:
    """Typed record of a URL that was not stored (politeness, content, errors)."""

    url: str
    reason: str
    detail: str = ""
    timestamp: float = field(default_factory=time.time)


class SkipLog:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def add(self, record: SkipRecord) -> None:
        row = {
            "url": record.url,
            "reason": record.reason,
            "detail": record.detail,
            "timestamp": record.timestamp,
        }
        with self._lock:
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(json.dumps(row, sort_keys=True) + "\n")

    def read_all(self) -> list[SkipRecord]:
        if not self.path.exists():
            return []
        out = []
        with self.path.open(encoding="utf-8") as handle:
            for line in handle:
                if not line.strip():
                    continue
                row = json.loads(line)
                out.append(SkipRecord(url=row["url"], reason=row["reason"],
                                      detail=row.get("detail", ""),
                                      timestamp=row.get("timestamp", 0.0)))
        return out
