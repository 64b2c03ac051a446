"""Deterministic synthetic corpora, fixture web sites, and a canned HTTP server.

Every generator is seeded. Relevant documents are built from per-label anchor
vocabularies: with the hash-based mock embedding backend, a sentence that is
a permutation of one vocabulary always embeds to the same vector (token sums
are order-free), so label clusters are exact and tests stay reproducible.
Irrelevant documents use unique noise tokens, which land nearly orthogonal.
"""
from __future__ import annotations

import random
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional

from .classify import CANONICAL_LABELS, LABEL_NOT_RELEVANT

_VOCAB_SIZE = 8


def anchor_vocab(label: str) -> list[str]:
    """Fixed anchor tokens for a label (deterministic, no RNG involved)."""
    stem = "".join(ch for ch in label.lower() if ch.isalnum())
    return [f"{stem}anchor{i}" for i in range(_VOCAB_SIZE)]


def anchor_sentence(label: str, rng: random.Random) -> str:
    # no trailing period: it would fuse with whichever token shuffles last
    # and break the exact permutation-invariance of the token-sum embedding
    tokens = anchor_vocab(label)
    rng.shuffle(tokens)
    return " ".join(tokens)


def noise_sentence(uid: str, rng: random.Random, n_tokens: int = 6) -> str:
    tokens = [f"noise{uid}tok{rng.randrange(10_000)}" for _ in range(n_tokens)]
    return " ".join(tokens) + "."


def make_relevant_doc(label: str, n_sentences: int,
                      rng: random.Random) -> list[str]:
    return [anchor_sentence(label, rng) for _ in range(n_sentences)]


def make_noise_doc(uid: str, n_sentences: int, rng: random.Random) -> list[str]:
    return [noise_sentence(uid, rng) for _ in range(n_sentences)]


def make_separable_corpus(
    per_label: int = 8,
    not_relevant: int = 12,
    seed: int = 1,
    labels: tuple[str, ...] = CANONICAL_LABELS,
) -> list[tuple[list[str], str]]:
    """A corpus every classifier fold gets perfectly right.

    All documents of a label embed to exactly the label centroid (identical
    anchor permutations sum to the same vector), so held-out documents sit at
    distance zero while noise documents sit near orthogonal.
    """
    rng = random.Random(seed)
    corpus: list[tuple[list[str], str]] = []
    for label in labels:
        for _ in range(per_label):
            corpus.append((make_relevant_doc(label, 4, rng), label))
    for i in range(not_relevant):
        corpus.append((make_noise_doc(f"nr{i}", 4, rng), LABEL_NOT_RELEVANT))
    return corpus


def make_mixed_corpus(
    n_labels: int,
    docs_per_label: int,
    seed: int,
    sentences_per_doc: tuple[int, int] = (2, 6),
) -> list[tuple[list[str], str]]:
    """Random small corpora for oracle-equivalence sweeps (distinct docs)."""
    rng = random.Random(seed)
    corpus = []
    for li in range(n_labels):
        label = f"Label{li}"
        for di in range(docs_per_label):
            n = rng.randint(*sentences_per_doc)
            doc = [
                anchor_sentence(label, rng) if rng.random() < 0.7
                else noise_sentence(f"{li}x{di}", rng)
                for _ in range(n)
            ]
            corpus.append((doc, label))
    return corpus


# -- fixture web sites ---------------------------------------------------------

@dataclass
class FixtureWeb:
    pages: dict[str, bytes]                # path -> HTML body
    labels: dict[str, Optional[str]]       # path -> planted label (None = noise)
    links: dict[str, list[str]]            # path -> hrefs in page order
    seed_path: str
    training_docs: list[tuple[list[str], str]]
    robots_txt: str = "User-agent: *\nCrawl-delay: 0\n"

    @property
    def relevant_paths(self) -> set[str]:
        return {p for p, label in self.labels.items() if label is not None}


def render_page(title: str, sentences: list[str], hrefs: list[str]) -> bytes:
    paragraphs = "\n".join(f"<p>{s}</p>" for s in sentences)
    anchors = "\n".join(f'<p><a href="{h}">{h}</a></p>' for h in hrefs)
    html = (
        "<html><head><title>{t}</title></head><body>\n"
        "<article>\n{p}\n</article>\n{a}\n</body></html>"
    ).format(t=title, p=paragraphs, a=anchors)
    return html.encode("utf-8")


def build_fixture_web(seed: int = 7) -> FixtureWeb:
    """60 pages: 20 interlinked relevant, 20 dead-end chains of 2 noise pages.

    Relevant page i links to relevant pages i+1 and i+5 (mod 20) and to the
    head of noise chain i; each chain head links only to its tail. A crawl
    that follows links from relevant pages only therefore sees the 20
    relevant pages plus the 20 chain heads (harvest 0.5), while an
    unconditional crawl also drags in the 20 tails (harvest 1/3). Page r00
    carries one duplicate link so the crawl graph has a parallel edge.
    """
    rng = random.Random(seed)
    pages: dict[str, bytes] = {}
    labels: dict[str, Optional[str]] = {}
    links: dict[str, list[str]] = {}
    n_rel = 20
    for i in range(n_rel):
        label = CANONICAL_LABELS[i % len(CANONICAL_LABELS)]
        path = f"/r{i:02d}.html"
        hrefs = [
            f"/r{(i + 1) % n_rel:02d}.html",
            f"/r{(i + 5) % n_rel:02d}.html",
            f"/d{i:02d}a.html",
        ]
        if i == 0:
            hrefs.append(f"/r{(i + 1) % n_rel:02d}.html")  # parallel edge
        sentences = make_relevant_doc(label, 5, rng)
        pages[path] = render_page(f"report {i}", sentences, hrefs)
        labels[path] = label
        links[path] = hrefs
    for i in range(n_rel):
        head, tail = f"/d{i:02d}a.html", f"/d{i:02d}b.html"
        pages[head] = render_page(f"misc {i}a",
                                  make_noise_doc(f"h{i}", 4, rng), [tail])
        labels[head] = None
        links[head] = [tail]
        pages[tail] = render_page(f"misc {i}b",
                                  make_noise_doc(f"t{i}", 4, rng), [])
        labels[tail] = None
        links[tail] = []

    training: list[tuple[list[str], str]] = []
    counts = {label: 0 for label in CANONICAL_LABELS}
    for j in range(10):
        label = CANONICAL_LABELS[j % len(CANONICAL_LABELS)]
        counts[label] += 1
        training.append((make_relevant_doc(label, 4, rng), label))
    return FixtureWeb(pages=pages, labels=labels, links=links,
                      seed_path="/r00.html", training_docs=training)


def build_mini_site(seed: int = 11) -> FixtureWeb:
    """10 pages: a relevant seed linking 3 relevant and 6 noise leaves."""
    rng = random.Random(seed)
    pages: dict[str, bytes] = {}
    labels: dict[str, Optional[str]] = {}
    links: dict[str, list[str]] = {}
    rel_leaves = [f"/rel{i}.html" for i in range(3)]
    noise_leaves = [f"/noise{i}.html" for i in range(6)]
    seed_path = "/seed.html"
    hrefs = rel_leaves + noise_leaves
    pages[seed_path] = render_page(
        "seed", make_relevant_doc(CANONICAL_LABELS[0], 4, rng), hrefs)
    labels[seed_path] = CANONICAL_LABELS[0]
    links[seed_path] = hrefs
    for i, path in enumerate(rel_leaves):
        label = CANONICAL_LABELS[(i + 1) % len(CANONICAL_LABELS)]
        pages[path] = render_page(f"rel {i}",
                                  make_relevant_doc(label, 4, rng), [])
        labels[path] = label
        links[path] = []
    for i, path in enumerate(noise_leaves):
        pages[path] = render_page(f"noise {i}",
                                  make_noise_doc(f"m{i}", 4, rng), [])
        labels[path] = None
        links[path] = []
    training = [(make_relevant_doc(label, 4, rng), label)
                for label in CANONICAL_LABELS for _ in range(2)]
    return FixtureWeb(pages=pages, labels=labels, links=links,
                      seed_path=seed_path, training_docs=training)


# -- canned HTTP server ----------------------------------------------------------

@dataclass
class CannedResponse:
    body: bytes = b""
    status: int = 200
    content_type: str = "text/html"
    headers: dict[str, str] = field(default_factory=dict)
    delay_s: float = 0.0  # served after this pause (timeout tests)


@dataclass
class RecordedRequest:
    path: str
    timestamp: float  # monotonic, taken when the request line is handled
    user_agent: str


class FixtureServer:
    """Threaded loopback HTTP server over a dict of canned responses.

    Records every request (path, monotonic timestamp, user-agent) so tests
    can assert politeness gaps and header contents from the server's side.
    """

    def __init__(self, responses: dict[str, CannedResponse | bytes],
                 host: str = "127.0.0.1"):
        self.responses = {
            path: (value if isinstance(value, CannedResponse)
                   else CannedResponse(body=value))
            for path, value in responses.items()
        }
        self.requests: list[RecordedRequest] = []
        self._lock = threading.Lock()
        server = self

        class _Handler(BaseHTTPRequestHandler):
            def do_GET(self):  # noqa: N802 - http.server API
                stamp = time.monotonic()
                with server._lock:
                    server.requests.append(RecordedRequest(
                        path=self.path, timestamp=stamp,
                        user_agent=self.headers.get("User-Agent", ""),
                    ))
                canned = server.responses.get(self.path)
                if canned is None:
                    self.send_response(404)
                    self.send_header("Content-Type", "text/plain")
                    self.end_headers()
                    self.wfile.write(b"not found")
                    return
                if canned.delay_s > 0:
                    time.sleep(canned.delay_s)
                self.send_response(canned.status)
                self.send_header("Content-Type", canned.content_type)
                for key, value in canned.headers.items():
                    self.send_header(key, value)
                self.send_header("Content-Length", str(len(canned.body)))
                self.end_headers()
                self.wfile.write(canned.body)

            def log_message(self, *args):  # silence per-request log lines
                pass

        self._httpd = ThreadingHTTPServer((host, 0), _Handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever,
                                        daemon=True)

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def host(self) -> str:
        return self._httpd.server_address[0]

    def url(self, path: str = "/") -> str:
        return f"http://{self.host}:{self.port}{path}"

    def requests_for(self, path: str) -> list[RecordedRequest]:
        with self._lock:
            return [r for r in self.requests if r.path == path]

    def all_requests(self) -> list[RecordedRequest]:
        with self._lock:
            return list(self.requests)

    def start(self) -> "FixtureServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()

    def __enter__(self) -> "FixtureServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def serve_fixture_web(web: FixtureWeb) -> FixtureServer:
    responses: dict[str, CannedResponse | bytes] = {
        "/robots.txt": CannedResponse(body=web.robots_txt.encode("utf-8"),
                                      content_type="text/plain"),
    }
    for path, body in web.pages.items():
        responses[path] = CannedResponse(body=body)
    return FixtureServer(responses)
