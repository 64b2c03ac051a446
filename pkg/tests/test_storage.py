import json

import pytest

from ctiscout.classify import ClassificationResult, LabelScore
from ctiscout.storage import (DocumentStore, SkipLog, SkipRecord,
                              StoredDocument)


def raw_doc(url="http://a.com/x", body=b"<html>hi</html>"):
    return StoredDocument(url=url, fetch_status=200, content_type="text/html",
                          raw_body=body)


def processed_doc(url="http://a.com/x", body=b"<html>hi</html>",
                  label="TTPs", links=None):
    result = ClassificationResult(
        scores={label: LabelScore(distance=0.2, relative_distance=0.5)},
        assigned_label=label,
        relevant=True,
    )
    return StoredDocument(
        url=url, fetch_status=200, content_type="text/html", raw_body=body,
        extracted_text="hi", extracted_links=links or [],
        classification=result, processed=True,
    )


class TestRawStorage:
    def test_round_trip_bytes(self, tmp_path):
        store = DocumentStore(tmp_path)
        body = bytes(range(256)) * 3
        store.store_raw(raw_doc(body=body))
        loaded = store.get("http://a.com/x")
        assert loaded.raw_body == body
        assert loaded.fetch_status == 200
        assert loaded.content_type == "text/html"
        assert not loaded.processed

    def test_blob_layout_fans_out_by_digest_prefix(self, tmp_path):
        store = DocumentStore(tmp_path)
        store.store_raw(raw_doc(body=b"payload"))
        blobs = list((tmp_path / "blobs").rglob("*"))
        files = [p for p in blobs if p.is_file()]
        assert len(files) == 1
        blob = files[0]
        assert blob.parent.name == blob.name[:2]
        assert len(blob.name) == 64  # sha-256 hex

    def test_identical_bodies_share_one_blob(self, tmp_path):
        store = DocumentStore(tmp_path)
        store.store_raw(raw_doc(url="http://a.com/1", body=b"same"))
        store.store_raw(raw_doc(url="http://a.com/2", body=b"same"))
        files = [p for p in (tmp_path / "blobs").rglob("*") if p.is_file()]
        assert len(files) == 1
        assert len(store.latest()) == 2

    def test_hundred_documents_oracle(self, tmp_path):
        # oracle: unique bodies -> exactly 100 blobs and 100 index rows
        store = DocumentStore(tmp_path)
        for i in range(100):
            store.store_raw(raw_doc(url=f"http://a.com/p{i}",
                                    body=f"body-{i}".encode()))
        files = [p for p in (tmp_path / "blobs").rglob("*") if p.is_file()]
        assert len(files) == 100
        rows = list(store.iter_index())
        assert len(rows) == 100
        assert len(store.latest()) == 100


class TestProcessedStorage:
    def test_requires_processed_flag(self, tmp_path):
        store = DocumentStore(tmp_path)
        doc = processed_doc()
        doc.processed = False
        with pytest.raises(ValueError):
            store.store_processed(doc)

    def test_requires_text_and_classification(self, tmp_path):
        store = DocumentStore(tmp_path)
        doc = processed_doc()
        doc.classification = None
        with pytest.raises(ValueError):
            store.store_processed(doc)
        doc = processed_doc()
        doc.extracted_text = None
        with pytest.raises(ValueError):
            store.store_processed(doc)

    def test_last_line_wins(self, tmp_path):
        store = DocumentStore(tmp_path)
        store.store_raw(raw_doc())
        store.store_processed(processed_doc())
        record = store.latest()["http://a.com/x"]
        assert record.processed
        assert record.label == "TTPs"
        assert record.relative_distance == 0.5
        # both lines remain in the append-only index
        assert len(list(store.iter_index())) == 2

    def test_meta_enrichment_round_trip(self, tmp_path):
        store = DocumentStore(tmp_path)
        doc = processed_doc(links=["http://b.com/1", "http://b.com/1",
                                   "http://c.com/2"])
        store.store_processed(doc)
        loaded = store.get("http://a.com/x")
        assert loaded.extracted_text == "hi"
        assert loaded.extracted_links == ["http://b.com/1", "http://b.com/1",
                                          "http://c.com/2"]
        assert loaded.classification.assigned_label == "TTPs"
        assert loaded.classification.relevant
        score = loaded.classification.scores["TTPs"]
        assert score.distance == 0.2
        assert score.relative_distance == 0.5

    def test_links_of_keeps_multiplicity(self, tmp_path):
        store = DocumentStore(tmp_path)
        store.store_processed(processed_doc(
            links=["http://b.com/1", "http://b.com/1"]))
        assert store.links_of("http://a.com/x") == ["http://b.com/1",
                                                    "http://b.com/1"]

    def test_links_of_unknown_or_raw_url_empty(self, tmp_path):
        store = DocumentStore(tmp_path)
        store.store_raw(raw_doc())
        assert store.links_of("http://a.com/x") == []
        assert store.links_of("http://nowhere.com/") == []

    def test_unassigned_classification_records_best_score(self, tmp_path):
        store = DocumentStore(tmp_path)
        doc = processed_doc()
        doc.classification = ClassificationResult(
            scores={"TTPs": LabelScore(distance=0.9, relative_distance=1.8),
                    "MalwareUsed": LabelScore(distance=0.7,
                                              relative_distance=1.4)},
            assigned_label=None,
            relevant=False,
        )
        store.store_processed(doc)
        record = store.latest()["http://a.com/x"]
        assert record.label is None
        assert record.relative_distance == 1.4
        assert record.distance == 0.7

    def test_get_unknown_url_returns_none(self, tmp_path):
        store = DocumentStore(tmp_path)
        assert store.get("http://nope.com/") is None


class TestIndexFormat:
    def test_lines_are_json_objects(self, tmp_path):
        store = DocumentStore(tmp_path)
        store.store_raw(raw_doc())
        text = (tmp_path / "index.jsonl").read_text()
        row = json.loads(text.strip())
        assert set(row) == {"url", "status", "content_type", "blob",
                            "processed", "label", "distance",
                            "relative_distance", "timestamp"}


class TestSkipLog:
    def test_append_and_read(self, tmp_path):
        log = SkipLog(tmp_path / "skips.jsonl")
        log.add(SkipRecord(url="http://a.com/x", reason="skipped-robots"))
        log.add(SkipRecord(url="http://a.com/y", reason="non-html",
                           detail="application/pdf"))
        records = log.read_all()
        assert [r.reason for r in records] == ["skipped-robots", "non-html"]
        assert records[1].detail == "application/pdf"

    def test_read_missing_file_empty(self, tmp_path):
        assert SkipLog(tmp_path / "none.jsonl").read_all() == []
