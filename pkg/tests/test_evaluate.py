import random
import xml.etree.ElementTree as ET

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ctiscout.classify import (CANONICAL_LABELS, LABEL_NOT_RELEVANT,
                               LABEL_RELEVANT, ClassificationResult,
                               LabelScore)
from ctiscout.embedding import AdaptiveBudget, FixedBudget, MockBackend
from ctiscout.evaluate import (build_crawl_graph, format_metrics_table,
                               harvest_rate, kfold_evaluate,
                               most_important_sentences, record_is_relevant,
                               stratified_folds, write_dot, write_graphml,
                               write_metrics_csv)
from ctiscout.storage import DocumentStore, IndexRecord, StoredDocument
from ctiscout.synth import make_mixed_corpus, make_separable_corpus


class TestStratifiedFolds:
    def test_fold_sizes_on_imbalanced_corpus(self):
        # 259 documents over five classes; five folds must come out 52/52/52/52/51
        labels = (["TTPs"] * 55 + ["BroadInformation"] * 24 +
                  ["MalwareUsed"] * 36 + ["VulnerabilityTargeted"] * 38 +
                  [LABEL_NOT_RELEVANT] * 106)
        folds = stratified_folds(labels, 5)
        assert sorted(len(f) for f in folds) == [51, 52, 52, 52, 52]

    def test_partition_is_exact(self):
        labels = ["A"] * 7 + ["B"] * 5 + ["C"] * 3
        folds = stratified_folds(labels, 3)
        indices = [i for fold in folds for i in fold]
        assert sorted(indices) == list(range(15))

    def test_per_label_balance_within_one(self):
        rng = random.Random(4)
        labels = [rng.choice("ABCD") for _ in range(100)]
        folds = stratified_folds(labels, 5)
        for label in "ABCD":
            counts = [sum(1 for i in fold if labels[i] == label)
                      for fold in folds]
            assert max(counts) - min(counts) <= 1

    def test_k_below_two_rejected(self):
        with pytest.raises(ValueError):
            stratified_folds(["A", "B"], 1)

    def test_scarce_label_warns_but_assigns(self, caplog):
        labels = ["A"] * 10 + ["B"]  # B cannot reach every fold
        with caplog.at_level("WARNING", logger="ctiscout.evaluate"):
            folds = stratified_folds(labels, 3)
        assert any("only 1 documents" in r.message for r in caplog.records)
        assert sorted(i for f in folds for i in f) == list(range(11))

    def test_deterministic(self):
        labels = ["A", "B", "A", "C", "B", "A", "C", "C", "B"]
        assert stratified_folds(labels, 3) == stratified_folds(labels, 3)


class TestKFold:
    def test_separable_corpus_scores_perfectly(self, backend):
        corpus = make_separable_corpus(per_label=8, not_relevant=12, seed=1)
        report = kfold_evaluate(corpus, 4, backend,
                                AdaptiveBudget(gradient_limit=0.02))
        assert set(report.metrics) == set(CANONICAL_LABELS) | {LABEL_RELEVANT}
        for label, row in report.metrics.items():
            assert row.precision == 1.0, label
            assert row.recall == 1.0, label
            assert row.f1 == 1.0, label
        for label in CANONICAL_LABELS:
            assert report.metrics[label].support == 8
        assert report.metrics[LABEL_RELEVANT].support == 32
        assert sum(report.fold_sizes) == len(corpus)
        assert len(report.predictions) == len(corpus)

    def test_metrics_match_recount_from_predictions(self, backend):
        # independent oracle: rebuild every mean metric from the prediction log
        corpus = make_mixed_corpus(n_labels=3, docs_per_label=6, seed=9)
        corpus += [(doc, LABEL_NOT_RELEVANT) for doc, _ in
                   make_mixed_corpus(1, 5, seed=77)]
        k = 3
        report = kfold_evaluate(corpus, k, backend, FixedBudget(3))

        trained = sorted({label for _, label in corpus
                          if label != LABEL_NOT_RELEVANT})
        for label in trained:
            precisions, recalls, f1s = [], [], []
            for fold in range(k):
                rows = [p for p in report.predictions if p.fold == fold]
                tp = sum(1 for p in rows if p.true_label == label
                         and p.predicted_label == label)
                fp = sum(1 for p in rows if p.true_label != label
                         and p.predicted_label == label)
                fn = sum(1 for p in rows if p.true_label == label
                         and p.predicted_label != label)
                precisions.append(tp / (tp + fp) if tp + fp else 0.0)
                recalls.append(tp / (tp + fn) if tp + fn else 0.0)
                pr = precisions[-1] + recalls[-1]
                f1s.append(2 * precisions[-1] * recalls[-1] / pr if pr else 0.0)
            row = report.metrics[label]
            assert row.precision == pytest.approx(sum(precisions) / k, abs=1e-12)
            assert row.recall == pytest.approx(sum(recalls) / k, abs=1e-12)
            assert row.f1 == pytest.approx(sum(f1s) / k, abs=1e-12)
            assert row.support == sum(1 for _, l in corpus if l == label)

        rel_precisions = []
        for fold in range(k):
            rows = [p for p in report.predictions if p.fold == fold]
            tp = sum(1 for p in rows if p.relevant_true and p.relevant_pred)
            fp = sum(1 for p in rows if not p.relevant_true and p.relevant_pred)
            rel_precisions.append(tp / (tp + fp) if tp + fp else 0.0)
        assert report.metrics[LABEL_RELEVANT].precision == pytest.approx(
            sum(rel_precisions) / k, abs=1e-12)

    def test_k_below_two_rejected(self, backend):
        with pytest.raises(ValueError):
            kfold_evaluate(make_separable_corpus(2, 2), 1, backend,
                           FixedBudget(2))


class TestMostImportant:
    def test_single_sentence_scores_one(self, backend):
        ranked = most_important_sentences(["alpha beta gamma"], backend,
                                          FixedBudget(5))
        assert len(ranked) == 1
        assert ranked[0][0] == "alpha beta gamma"
        assert ranked[0][1] == pytest.approx(1.0, abs=1e-9)

    def test_dominant_sentence_ranks_first(self, backend):
        sentences = ["alpha beta gamma"] * 5 + ["unrelated noise words"]
        ranked = most_important_sentences(sentences, backend, FixedBudget(10))
        assert ranked[0][0] == "alpha beta gamma"
        assert ranked[-1][0] == "unrelated noise words"
        assert ranked[0][1] > ranked[-1][1]

    def test_matches_argsort_oracle(self, backend):
        import numpy as np
        from ctiscout.embedding import cosine_similarity, embed_document
        sentences = [f"tok{i} tok{i * 3} tok{i * 7}" for i in range(12)]
        budget = FixedBudget(6)
        ranked = most_important_sentences(sentences, backend, budget,
                                          top_k=12)
        doc = embed_document(sentences, backend, budget).vector
        sims = [cosine_similarity(backend.embed_sentence(s), doc)
                for s in sentences]
        order = sorted(range(12), key=lambda i: -sims[i])
        assert [s for s, _ in ranked] == [sentences[i] for i in order]
        assert [v for _, v in ranked] == pytest.approx(
            [sims[i] for i in order], abs=1e-12)

    def test_top_k_truncation(self, backend):
        sentences = [f"t{i} u{i} v{i}" for i in range(30)]
        ranked = most_important_sentences(sentences, backend, FixedBudget(5))
        assert len(ranked) == 15  # default cutoff

    def test_empty_rejected(self, backend):
        with pytest.raises(ValueError):
            most_important_sentences([], backend, FixedBudget(3))


def index_record(url, processed=True, relative=0.5, label="TTPs"):
    return IndexRecord(url=url, status=200, content_type="text/html",
                       blob="ab" * 32, processed=processed, label=label,
                       distance=relative, relative_distance=relative,
                       timestamp=0.0)


class TestHarvestRate:
    def test_512_of_1000(self):
        records = [index_record(f"u{i}", relative=0.5) for i in range(512)]
        records += [index_record(f"v{i}", relative=2.0, label=None)
                    for i in range(488)]
        assert harvest_rate(records) == pytest.approx(0.512)

    def test_zero_relevant_is_zero(self):
        records = [index_record(f"u{i}", relative=3.0) for i in range(5)]
        assert harvest_rate(records) == 0.0

    def test_no_processed_documents_is_an_error(self):
        with pytest.raises(ValueError):
            harvest_rate([])
        with pytest.raises(ValueError):
            harvest_rate([index_record("u", processed=False)])

    def test_unprocessed_rows_ignored(self):
        records = [index_record("a", relative=0.5),
                   index_record("b", processed=False, relative=0.5)]
        assert harvest_rate(records) == 1.0

    def test_boundary_relative_distance_counts(self):
        assert record_is_relevant(index_record("a", relative=1.0))
        assert not record_is_relevant(index_record("a", relative=1.0 + 1e-9))
        assert not record_is_relevant(index_record("a", relative=None))
        assert not record_is_relevant(index_record("a", processed=False))

    @given(st.lists(st.floats(0.0, 3.0), min_size=1, max_size=60),
           st.randoms())
    def test_property_order_invariant(self, relatives, rnd):
        records = [index_record(f"u{i}", relative=r)
                   for i, r in enumerate(relatives)]
        base = harvest_rate(records)
        rnd.shuffle(records)
        assert harvest_rate(records) == base


def processed(url, links=(), relevant=True):
    rel = 0.5 if relevant else 2.0
    result = ClassificationResult(
        scores={"TTPs": LabelScore(distance=rel, relative_distance=rel)},
        assigned_label="TTPs" if relevant else None, relevant=relevant)
    return StoredDocument(url=url, fetch_status=200, content_type="text/html",
                          raw_body=url.encode(), extracted_text="text",
                          extracted_links=list(links), classification=result,
                          processed=True)


def union_find_components(nodes, edges):
    parent = {n: n for n in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        parent[find(a)] = find(b)
    return len({find(n) for n in nodes})


class TestCrawlGraph:
    def build_store(self, tmp_path):
        store = DocumentStore(tmp_path / "store")
        store.store_processed(processed(
            "http://x.com/a",
            links=["http://x.com/b", "http://x.com/b", "http://x.com/c",
                   "http://elsewhere.com/never-crawled"]))
        store.store_processed(processed("http://x.com/b",
                                        links=["http://x.com/c"]))
        store.store_processed(processed("http://x.com/c", relevant=False))
        store.store_processed(processed("http://x.com/island"))
        store.store_raw(StoredDocument(url="http://x.com/raw",
                                       fetch_status=200,
                                       content_type="text/html",
                                       raw_body=b"<p>x</p>"))
        return store

    def test_nodes_edges_and_attributes(self, tmp_path):
        graph = build_crawl_graph(self.build_store(tmp_path))
        assert set(graph.nodes) == {"http://x.com/a", "http://x.com/b",
                                    "http://x.com/c", "http://x.com/island",
                                    "http://x.com/raw"}
        # parallel edge kept; dangling reference dropped
        assert sorted(graph.edges) == [
            ("http://x.com/a", "http://x.com/b"),
            ("http://x.com/a", "http://x.com/b"),
            ("http://x.com/a", "http://x.com/c"),
            ("http://x.com/b", "http://x.com/c"),
        ]
        a = graph.nodes["http://x.com/a"]
        assert a.relevant and a.label == "TTPs" and a.rank_key == 0.5
        c = graph.nodes["http://x.com/c"]
        assert not c.relevant and c.rank_key is None

    def test_wcc_matches_union_find_oracle(self, tmp_path):
        graph = build_crawl_graph(self.build_store(tmp_path))
        expected = union_find_components(set(graph.nodes), graph.edges)
        assert graph.weakly_connected_components() == expected == 3

    def test_wcc_on_random_graphs_matches_oracle(self, tmp_path):
        rng = random.Random(13)
        for trial in range(10):
            store = DocumentStore(tmp_path / f"t{trial}")
            n = rng.randint(2, 12)
            urls = [f"http://g.com/{i}" for i in range(n)]
            links = {u: [rng.choice(urls) for _ in range(rng.randint(0, 3))]
                     for u in urls}
            for u in urls:
                store.store_processed(processed(u, links=links[u]))
            graph = build_crawl_graph(store)
            assert graph.weakly_connected_components() == \
                union_find_components(set(graph.nodes), graph.edges)

    def test_dot_output(self, tmp_path):
        graph = build_crawl_graph(self.build_store(tmp_path))
        path = tmp_path / "graph.dot"
        write_dot(graph, path)
        text = path.read_text()
        assert text.startswith("digraph crawl {")
        assert text.rstrip().endswith("}")
        assert text.count('"http://x.com/a" -> "http://x.com/b";') == 2
        assert '"http://x.com/a" [relevant=true, label="TTPs", ' \
            "rank_key=0.500000];" in text
        assert '"http://x.com/c" [relevant=false];' in text

    def test_graphml_output_parses(self, tmp_path):
        graph = build_crawl_graph(self.build_store(tmp_path))
        path = tmp_path / "graph.graphml"
        write_graphml(graph, path)
        ns = {"g": "http://graphml.graphdrawing.org/xmlns"}
        root = ET.parse(path).getroot()
        nodes = root.findall(".//g:node", ns)
        edges = root.findall(".//g:edge", ns)
        assert len(nodes) == 5
        assert len(edges) == 4
        pairs = [(e.get("source"), e.get("target")) for e in edges]
        assert pairs.count(("http://x.com/a", "http://x.com/b")) == 2


class TestReportOutputs:
    def test_metrics_csv_and_table(self, tmp_path, backend):
        corpus = make_separable_corpus(per_label=4, not_relevant=4, seed=2)
        report = kfold_evaluate(corpus, 2, backend, FixedBudget(4))
        path = tmp_path / "metrics.csv"
        write_metrics_csv(report, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "label,precision,recall,f1,support"
        assert len(lines) == 1 + len(report.metrics)
        table = format_metrics_table(report)
        for label in report.metrics:
            assert label in table
