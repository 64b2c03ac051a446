"""End-to-end smoke test against the crawler's HTTP backend client.

Runs the service under a real uvicorn server and drives the ctiscout
crawler through it: health check, training, and a three-page crawl whose
geometry is forced by construction — each label is trained on two
lexically similar documents plus one disjoint widener, so pages sharing
the similar documents' vocabulary land decisively inside the allowed
radius while unrelated text stays decisively outside, regardless of the
randomly initialized encoder weights.
"""
import threading
import time

import numpy as np
import pytest
import uvicorn

from embedding_sidecar import EMBEDDING_DIM
from embedding_sidecar.model import SentenceEmbedder
from embedding_sidecar.service import ServiceState, create_app

ctiscout = pytest.importorskip("ctiscout")

from ctiscout.classify import save_model, train_ground_truth  # noqa: E402
from ctiscout.embedding import FixedBudget, HttpBackend  # noqa: E402
from ctiscout.orchestrator import CrawlConfig, run_crawl  # noqa: E402
from ctiscout.synth import FixtureWeb, render_page, serve_fixture_web  # noqa: E402

TTPS_DOCS = [
    ["the actor used spearphishing attachments for initial access",
     "persistence was established through scheduled tasks",
     "lateral movement relied on stolen credentials"],
    ["spearphishing attachments delivered the initial access payload",
     "scheduled tasks provided persistence on the host",
     "stolen credentials enabled lateral movement"],
    ["quarterly reports praised the tulip festival downtown",
     "the orchestra rehearsed a brand new symphony",
     "fresh sourdough requires a lively starter culture"],
]
MALWARE_DOCS = [
    ["the implant dropped a loader named frostbite",
     "command traffic used the frostbite custom protocol",
     "the loader injected shellcode into the browser"],
    ["frostbite loader samples shared the custom protocol",
     "shellcode injection targeted the browser process",
     "the implant deployed the frostbite loader"],
    ["garden gnomes lined the museum courtyard fence",
     "a violin solo opened the evening concert",
     "the bakery sells rye bread on thursdays"],
]
SEED_TEXT = [
    "the intrusion began with spearphishing attachments",
    "operators used scheduled tasks for persistence",
    "stolen credentials supported lateral movement",
]
MORE_TEXT = [
    "analysts recovered the frostbite loader implant",
    "its custom protocol carried command traffic",
    "shellcode was injected into the browser",
]
NOISE_TEXT = [
    "the recipe called for two cups of flour",
    "fold the batter gently before resting it",
    "serve the cake once it has cooled",
]
TRAINING_DOCS = ([(doc, "TTPs") for doc in TTPS_DOCS]
                 + [(doc, "MalwareUsed") for doc in MALWARE_DOCS])


@pytest.fixture(scope="module")
def endpoint(model_dir):
    state = ServiceState(model_id="default")
    state.embedder = SentenceEmbedder(model_dir)
    config = uvicorn.Config(create_app(state), host="127.0.0.1", port=0,
                            log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 30
    while not server.started:
        if time.monotonic() > deadline:
            raise RuntimeError("uvicorn did not start within 30s")
        time.sleep(0.02)
    port = server.servers[0].sockets[0].getsockname()[1]
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=10)


class TestClientHandshake:
    def test_health_negotiates_dimension(self, endpoint):
        backend = HttpBackend(endpoint)
        assert backend.dim == EMBEDDING_DIM
        assert backend.name == "http:default"

    def test_embeddings_round_trip(self, endpoint):
        backend = HttpBackend(endpoint)
        vectors = backend.embed_sentences(["alpha beta", "gamma"])
        assert len(vectors) == 2
        assert all(v.shape == (EMBEDDING_DIM,) for v in vectors)
        again = backend.embed_sentences(["alpha beta", "gamma"])
        np.testing.assert_allclose(vectors, again, atol=1e-5)


class TestCrawlThroughService:
    def test_train_and_crawl(self, endpoint, tmp_path):
        backend = HttpBackend(endpoint)
        truths = train_ground_truth(TRAINING_DOCS, backend, FixedBudget(3))
        assert set(truths) == {"TTPs", "MalwareUsed"}
        assert all(gt.allowed_distance > 0 for gt in truths.values())
        assert all(len(gt.vector) == EMBEDDING_DIM for gt in truths.values())

        model_file = tmp_path / "model.json"
        save_model(model_file, truths, backend.name, backend.dim, "max")

        web = FixtureWeb(
            pages={
                "/seed.html": render_page("briefing", SEED_TEXT,
                                          ["/more.html", "/noise.html"]),
                "/more.html": render_page("analysis", MORE_TEXT, []),
                "/noise.html": render_page("kitchen", NOISE_TEXT, []),
            },
            labels={"/seed.html": "TTPs", "/more.html": "MalwareUsed",
                    "/noise.html": None},
            links={"/seed.html": ["/more.html", "/noise.html"],
                   "/more.html": [], "/noise.html": []},
            seed_path="/seed.html",
            training_docs=TRAINING_DOCS,
        )
        seed_file = tmp_path / "seeds.txt"
        with serve_fixture_web(web) as site:
            seed_file.write_text(site.url(web.seed_path) + "\n")
            report = run_crawl(CrawlConfig(
                seed_file=str(seed_file),
                model_file=str(model_file),
                output_dir=str(tmp_path / "out"),
                backend=endpoint,
                default_delay_s=0.0,
                max_pages=50,
                retriever_workers=2,
                extractor_workers=1,
            ))

        assert report.stop_reason == "completed"
        assert not report.backend_failed
        assert report.processed == 3  # the seed's links were followed
        assert report.ranked, "crawl through the service ranked no documents"
        ranked_urls = [doc.url for doc in report.ranked]
        assert site.url("/seed.html") in ranked_urls
        assert set(ranked_urls) <= {site.url(p) for p in web.pages}
        assert len(report.ranked) == report.relevant
        assert all(doc.label in truths for doc in report.ranked)
