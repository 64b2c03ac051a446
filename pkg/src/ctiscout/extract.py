"""HTML text extraction, sentence splitting, and link filtering.

Main content comes from a text-density/link-density pass over block elements
(chrome elements dropped first); the extractor is a plain class so other
strategies can be swapped in. Outgoing anchors are collected from the whole
DOM regardless of the density filter, since link handling is a separate
concern from text extraction.
"""
from __future__ import annotations

import logging
import random
import re
import time
from dataclasses import dataclass
from html.parser import HTMLParser
from pathlib import Path
from typing import Callable, Optional, Sequence

from .classify import classify
from .embedding import BackendError, EmbeddingBackend
from .frontier import Frontier, UrlTask
from .storage import DocumentStore, StoredDocument
from .urls import UrlError, host_matches_domain, normalize_url, url_host

logger = logging.getLogger(__name__)

# Elements whose text never belongs to the main content.
_CHROME_TAGS = {"script", "style", "noscript", "nav", "header", "footer",
                "aside", "template", "svg"}
# Elements that delimit text blocks for density scoring.
_BLOCK_TAGS = {
    "p", "div", "article", "section", "main", "li", "ul", "ol", "dl", "dd",
    "dt", "h1", "h2", "h3", "h4", "h5", "h6", "pre", "blockquote", "table",
    "tr", "td", "th", "figure", "figcaption", "form", "fieldset", "details",
    "summary", "br", "hr", "body",
}
_VOID_TAGS = {"br", "hr", "img", "input", "meta", "link"}

_MIN_BLOCK_CHARS = 25
_MAX_LINK_DENSITY = 0.4


@dataclass
class ExtractedPage:
    url: str
    main_text: str
    sentences: list[str]
    candidate_links: list[tuple[str, str, str]]  # (href, rel, anchor text)
    meta_nofollow: bool = False


class _PageParser(HTMLParser):
    """One-pass walker: text blocks with link-char counts, plus all anchors."""

    def __init__(self, agent_token: str = ""):
        super().__init__(convert_charrefs=True)
        self.blocks: list[tuple[str, int]] = []
        self.anchors: list[dict] = []
        self.meta_nofollow = False
        self._agent_token = agent_token.lower()
        self._chrome_depth = 0
        self._anchor_depth = 0
        self._buffer: list[str] = []
        self._link_chars = 0

    def handle_starttag(self, tag, attrs):
        attrs_map = dict(attrs)
        if tag == "meta":
            name = (attrs_map.get("name") or "").lower()
            content = (attrs_map.get("content") or "").lower()
            if name in ("robots", self._agent_token) and "nofollow" in content:
                self.meta_nofollow = True
        if tag == "a":
            self._anchor_depth += 1
            href = attrs_map.get("href")
            if href is not None:
                self.anchors.append({
                    "href": href,
                    "rel": attrs_map.get("rel") or "",
                    "text": [],
                })
        if tag in _CHROME_TAGS and tag not in _VOID_TAGS:
            self._chrome_depth += 1
        if tag in _BLOCK_TAGS:
            self._flush()

    def handle_endtag(self, tag):
        if tag == "a" and self._anchor_depth > 0:
            self._anchor_depth -= 1
        if tag in _CHROME_TAGS and self._chrome_depth > 0:
            self._chrome_depth -= 1
        if tag in _BLOCK_TAGS:
            self._flush()

    def handle_data(self, data):
        if self._anchor_depth > 0 and self.anchors:
            self.anchors[-1]["text"].append(data)
        if self._chrome_depth > 0:
            return
        if not data.strip():
            if self._buffer and not self._buffer[-1].endswith(" "):
                self._buffer.append(" ")
            return
        self._buffer.append(data)
        if self._anchor_depth > 0:
            self._link_chars += len(data.strip())

    def _flush(self):
        text = re.sub(r"\s+", " ", "".join(self._buffer)).strip()
        if text:
            self.blocks.append((text, self._link_chars))
        self._buffer = []
        self._link_chars = 0

    def close(self):
        super().close()
        self._flush()


def _decode_html(raw: bytes) -> str:
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError:
        return raw.decode("latin-1", errors="replace")


class DensityExtractor:
    """Default main-content strategy: drop chrome, keep dense low-link blocks.

    Blocks shorter than min_chars or with too much anchor text are treated as
    boilerplate. When nothing passes the length bar (tiny pages), all
    low-link-density blocks are kept so plain documents survive intact.
    """

    def __init__(self, min_chars: int = _MIN_BLOCK_CHARS,
                 max_link_density: float = _MAX_LINK_DENSITY):
        self.min_chars = min_chars
        self.max_link_density = max_link_density

    def extract(self, html: bytes) -> str:
        parser = _PageParser()
        try:
            parser.feed(_decode_html(html))
            parser.close()
        except Exception:  # noqa: BLE001 - malformed markup becomes empty text
            logger.warning("unparseable HTML, treating document as empty")
            return ""
        kept = []
        fallback = []
        for text, link_chars in parser.blocks:
            density = link_chars / len(text) if text else 1.0
            if density > self.max_link_density:
                continue
            fallback.append(text)
            if len(text) >= self.min_chars:
                kept.append(text)
        if not kept:
            kept = fallback
        return "\n\n".join(kept)


_DEFAULT_EXTRACTOR = DensityExtractor()


def extract_main_content(html: bytes, extractor: DensityExtractor | None = None) -> str:
    """Boilerplate-stripped plain text with paragraph breaks ('' if unparseable)."""
    return (extractor or _DEFAULT_EXTRACTOR).extract(html)


# Sentence-final periods after these never split (common abbreviations).
_ABBREVIATIONS = {
    "e.g.", "i.e.", "etc.", "vs.", "cf.", "ca.", "al.", "mr.", "mrs.", "ms.",
    "dr.", "prof.", "st.", "no.", "fig.", "vol.", "inc.", "ltd.", "co.",
    "jr.", "sr.", "approx.", "dept.", "est.", "min.", "max.", "resp.", "u.s.",
}

_SPLIT_RE = re.compile(r"[.!?]+(?=\s+[\"'(\[]?[A-Z0-9])")
_TOKEN_RE = re.compile(r"\w+(?:[\w./-]*\w)?|[^\w\s]+")


def _word_tokens(sentence: str) -> list[str]:
    return _TOKEN_RE.findall(sentence)


def split_sentences(text: str, min_tokens: int = 3) -> list[str]:
    """Split text into sentences, protecting abbreviations and version strings.

    A split happens at . ! ? runs followed by whitespace and an uppercase
    letter or digit; dotted tokens like "v1.2.3" never contain such a
    boundary. Fragments with fewer than min_tokens word/punctuation tokens
    (menu leftovers) are dropped; paragraph breaks always split.
    """
    sentences: list[str] = []
    for paragraph in text.splitlines():
        paragraph = paragraph.strip()
        if not paragraph:
            continue
        start = 0
        for match in _SPLIT_RE.finditer(paragraph):
            end = match.end()
            head = paragraph[start:end]
            last_word = head.rsplit(None, 1)[-1].lower() if head.strip() else ""
            if last_word in _ABBREVIATIONS:
                continue
            sentence = head.strip()
            if sentence:
                sentences.append(sentence)
            start = end
        tail = paragraph[start:].strip()
        if tail:
            sentences.append(tail)
    return [s for s in sentences if len(_word_tokens(s)) >= min_tokens]


class Blacklist:
    """Registrable domains to never follow, matched against the host suffix."""

    def __init__(self, domains: Sequence[str] = ()):
        self.domains = [d.strip().lower() for d in domains
                        if d.strip() and not d.strip().startswith("#")]

    @classmethod
    def from_file(cls, path: str | Path) -> "Blacklist":
        return cls(Path(path).read_text(encoding="utf-8").splitlines())

    @classmethod
    def default(cls) -> "Blacklist":
        return cls.from_file(Path(__file__).parent / "data" / "blacklist.txt")

    def blocks(self, url: str) -> bool:
        try:
            host = url_host(url)
        except UrlError:
            return True
        return any(host_matches_domain(host, domain) for domain in self.domains)


def extract_page(html: bytes, url: str, agent_token: str = "",
                 extractor: DensityExtractor | None = None,
                 min_sentence_tokens: int = 3) -> ExtractedPage:
    """Parse stored HTML into main text, sentences, and candidate links."""
    parser = _PageParser(agent_token=agent_token)
    candidates: list[tuple[str, str, str]] = []
    meta_nofollow = False
    try:
        parser.feed(_decode_html(html))
        parser.close()
    except Exception:  # noqa: BLE001
        logger.warning("unparseable HTML at %s", url)
    else:
        meta_nofollow = parser.meta_nofollow
        for anchor in parser.anchors:
            text = re.sub(r"\s+", " ", "".join(anchor["text"])).strip()
            candidates.append((anchor["href"], anchor["rel"], text))
    main_text = extract_main_content(html, extractor)
    return ExtractedPage(
        url=url,
        main_text=main_text,
        sentences=split_sentences(main_text, min_tokens=min_sentence_tokens),
        candidate_links=candidates,
        meta_nofollow=meta_nofollow,
    )


def filter_references(page: ExtractedPage, base: str,
                      blacklist: Blacklist) -> tuple[list[str], int]:
    """Normalized outgoing references with multiplicity, plus malformed count.

    Drops mailto/javascript/tel/data schemes, rel=nofollow anchors, and
    blacklisted domains; honors a page-level robots-meta nofollow by dropping
    everything.
    """
    if page.meta_nofollow:
        return [], 0
    refs: list[str] = []
    malformed = 0
    for href, rel, _text in page.candidate_links:
        href = href.strip()
        if not href or href.startswith("#"):
            continue
        scheme = href.split(":", 1)[0].lower() if ":" in href.split("/", 1)[0] else ""
        if scheme in ("mailto", "javascript", "tel", "data"):
            continue
        if "nofollow" in rel.lower().split():
            continue
        try:
            absolute = normalize_url(href, base=base)
        except UrlError:
            malformed += 1
            continue
        if blacklist.blocks(absolute):
            continue
        refs.append(absolute)
    if malformed:
        logger.info("%s: skipped %d malformed hrefs", page.url, malformed)
    return refs, malformed


def extract_links(page: ExtractedPage, base: str, blacklist: Blacklist,
                  parent_depth: int = 0) -> list[UrlTask]:
    """Deduplicated, enqueue-ready link tasks for one page."""
    refs, _ = filter_references(page, base, blacklist)
    seen: set[str] = set()
    tasks = []
    for ref in refs:
        if ref in seen:
            continue
        seen.add(ref)
        tasks.append(UrlTask(url=ref, parent=page.url, depth=parent_depth + 1,
                             enqueued_at=time.monotonic()))
    return tasks


@dataclass
class ProcessedOutcome:
    url: str
    relevant: bool = False
    assigned_label: Optional[str] = None
    enqueued: int = 0
    errored: bool = False
    error: str = ""


@dataclass
class DocumentProcessor:
    """Runs extract -> classify -> (links for relevant docs) for one document.

    follow_all disables the dynamic-pathing rule (baseline crawls): links are
    extracted regardless of the verdict, optionally shuffled for a randomized
    breadth-first order.
    """

    truths: dict
    backend: EmbeddingBackend
    blacklist: Blacklist
    frontier: Frontier
    store: DocumentStore
    agent_token: str = ""
    follow_all: bool = False
    shuffle_rng: Optional[random.Random] = None
    min_sentence_tokens: int = 3
    extractor: Optional[DensityExtractor] = None

    def process(self, task: UrlTask, doc: StoredDocument,
                phase_hook: Optional[Callable[[str], None]] = None) -> ProcessedOutcome:
        page = extract_page(doc.raw_body, doc.url, agent_token=self.agent_token,
                            extractor=self.extractor,
                            min_sentence_tokens=self.min_sentence_tokens)
        if phase_hook is not None:
            phase_hook("classify")
        try:
            result = classify(page.sentences, self.truths, self.backend)
        except BackendError:
            raise  # backend outages stop the crawl, handled by the caller
        except Exception as exc:  # noqa: BLE001 - per-document failure
            logger.error("classifier failed on %s: %s", doc.url, exc)
            return ProcessedOutcome(url=doc.url, errored=True, error=str(exc))

        doc.extracted_text = page.main_text
        doc.classification = result
        follow = result.relevant or self.follow_all
        if follow:
            refs, _ = filter_references(page, doc.url, self.blacklist)
            doc.extracted_links = refs
            tasks = extract_links(page, doc.url, self.blacklist,
                                  parent_depth=task.depth)
            if self.shuffle_rng is not None:
                self.shuffle_rng.shuffle(tasks)
            enqueued = sum(1 for t in tasks if self.frontier.enqueue(t))
        else:
            doc.extracted_links = []
            enqueued = 0
        doc.processed = True
        self.store.store_processed(doc)
        return ProcessedOutcome(url=doc.url, relevant=result.relevant,
                                assigned_label=result.assigned_label,
                                enqueued=enqueued)
