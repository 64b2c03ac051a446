"""HTTP retrieval: robots-checked GETs with redirects, retries, and size caps.

Every outgoing request re-checks the robots rules at send time, carries a
user-agent header with a contact URL, and respects the domain's crawl delay
even across retries and same-host redirect hops. Anything that cannot be
stored (disallowed, non-HTML, oversize, errors) becomes a typed skip record
instead of an exception.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Callable, Optional
from urllib.parse import urlsplit

import requests

from . import __version__
from .frontier import UrlTask
from .robots import RobotsRecord, allow_all_record, deny_all_record, parse_robots_txt
from .storage import SkipRecord, StoredDocument
from .urls import UrlError, normalize_url, url_domain

logger = logging.getLogger(__name__)

HTML_CONTENT_TYPES = ("text/html", "application/xhtml+xml")
DEFAULT_MAX_BODY_BYTES = 5 * 1024 * 1024
DEFAULT_AGENT_TOKEN = "ctiscout"
DEFAULT_INFO_URL = "https://example.invalid/crawler-info"
_REDIRECT_STATUSES = {301, 302, 303, 307, 308}
_MAX_REDIRECTS = 5

# Skip reasons (stable strings consumed by reports and tests).
SKIP_ROBOTS = "skipped-robots"
SKIP_NON_HTML = "non-html"
SKIP_OVERSIZE = "oversize"
SKIP_HTTP_ERROR = "http-error"
SKIP_FETCH_ERROR = "fetch-error"
SKIP_REDIRECT_ERROR = "redirect-error"
SKIP_REDIRECT_LOOP = "redirect-loop"
SKIP_CROSS_HOST = "cross-host-redirect"
SKIP_REDIRECT_VISITED = "redirect-visited"


@dataclass
class FetchResult:
    """One successfully retrieved HTML document."""

    url: str
    final_url: str
    status: int
    content_type: str
    body: bytes
    elapsed_ms: float

    def to_document(self) -> StoredDocument:
        return StoredDocument(
            url=self.final_url,
            fetch_status=self.status,
            content_type=self.content_type,
            raw_body=self.body,
        )


@dataclass
class FetchOutcome:
    """Either a result or a skip; `requested` records whether any request
    actually went out (drives the frontier's domain timer)."""

    task: UrlTask
    result: Optional[FetchResult] = None
    skip: Optional[SkipRecord] = None
    requested: bool = False


class _Skip(Exception):
    def __init__(self, reason: str, detail: str = ""):
        super().__init__(reason)
        self.reason = reason
        self.detail = detail


def _request_path(url: str) -> str:
    parts = urlsplit(url)
    path = parts.path or "/"
    if parts.query:
        path += "?" + parts.query
    return path


class Fetcher:
    """Issues polite GETs for one worker (sessions are not shared across
    threads; the orchestrator builds one Fetcher per retriever worker)."""

    def __init__(
        self,
        agent_token: str = DEFAULT_AGENT_TOKEN,
        info_url: str = DEFAULT_INFO_URL,
        *,
        timeout_s: float = 30.0,
        max_retries: int = 2,
        backoff_base_s: float = 1.0,
        max_body_bytes: int = DEFAULT_MAX_BODY_BYTES,
        default_delay_s: float = 5.0,
        robots_ttl_s: float = 86400.0,
        robots_error_ttl_s: float = 1800.0,
        session: Optional[requests.Session] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.agent_token = agent_token
        self.info_url = info_url
        self.user_agent = f"{agent_token}/{__version__} (+{info_url})"
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self.backoff_base_s = backoff_base_s
        self.max_body_bytes = max_body_bytes
        self.default_delay_s = default_delay_s
        self.robots_ttl_s = robots_ttl_s
        self.robots_error_ttl_s = robots_error_ttl_s
        self._session = session or requests.Session()
        self._sleep = sleep

    @property
    def headers(self) -> dict[str, str]:
        return {
            "User-Agent": self.user_agent,
            "Accept": ",".join(HTML_CONTENT_TYPES),
        }

    def close(self) -> None:
        self._session.close()

    # -- robots.txt ---------------------------------------------------------

    def fetch_robots(self, domain: str, scheme: str = "http") -> RobotsRecord:
        """Retrieve and parse robots.txt for a domain.

        Definitive 4xx answers mean allow-all with the default delay; 5xx and
        unreachable hosts mean deny-all for a shorter TTL so the domain is
        retried later; garbage content degrades to allow-all with a warning.
        """
        url = f"{scheme}://{domain}/robots.txt"
        attempt = 0
        while True:
            try:
                resp = self._session.get(
                    url, headers=self.headers, timeout=self.timeout_s,
                    allow_redirects=True,
                )
            except requests.RequestException as exc:
                attempt += 1
                if attempt > self.max_retries:
                    logger.warning("robots.txt unreachable for %s (%s); "
                                   "denying all for %.0fs",
                                   domain, exc, self.robots_error_ttl_s)
                    return deny_all_record(domain, self.default_delay_s,
                                           self.robots_error_ttl_s)
                self._sleep(self.backoff_base_s * 2 ** (attempt - 1))
                continue
            status = resp.status_code
            if 200 <= status < 300:
                text = resp.content.decode("utf-8", errors="replace")
                try:
                    return parse_robots_txt(text, domain, self.agent_token,
                                            self.default_delay_s,
                                            self.robots_ttl_s)
                except Exception:  # noqa: BLE001 - defensive; parser is tolerant
                    logger.warning("unparseable robots.txt for %s; allowing all",
                                   domain)
                    return allow_all_record(domain, self.default_delay_s,
                                            self.robots_ttl_s)
            if status >= 500:
                attempt += 1
                if attempt > self.max_retries:
                    logger.warning("robots.txt %d for %s; denying all for %.0fs",
                                   status, domain, self.robots_error_ttl_s)
                    return deny_all_record(domain, self.default_delay_s,
                                           self.robots_error_ttl_s)
                self._sleep(self.backoff_base_s * 2 ** (attempt - 1))
                continue
            # Definitive non-success (404 and friends): no rules exist.
            return allow_all_record(domain, self.default_delay_s,
                                    self.robots_ttl_s)

    # -- documents ----------------------------------------------------------

    def fetch(
        self,
        task: UrlTask,
        robots: RobotsRecord,
        *,
        is_visited: Optional[Callable[[str], bool]] = None,
        crawl_delay_s: Optional[float] = None,
    ) -> FetchOutcome:
        """GET one document under the given robots record.

        Follows up to five same-host redirects, re-checking robots and the
        visited set at every hop; cross-host redirects are skipped rather
        than silently crossing a politeness boundary. Retries sleep at least
        the crawl delay so the target domain never sees a tighter gap.
        """
        delay = robots.crawl_delay_s if crawl_delay_s is None else crawl_delay_s
        state = {"requested": False}
        start = time.monotonic()
        try:
            result = self._fetch_chain(task, robots, is_visited, delay, state)
            result.elapsed_ms = (time.monotonic() - start) * 1000.0
            return FetchOutcome(task=task, result=result,
                                requested=state["requested"])
        except _Skip as skip:
            logger.info("skipping %s: %s %s", task.url, skip.reason, skip.detail)
            record = SkipRecord(url=task.url, reason=skip.reason,
                                detail=skip.detail)
            return FetchOutcome(task=task, skip=record,
                                requested=state["requested"])

    def _fetch_chain(self, task, robots, is_visited, delay, state) -> FetchResult:
        current = task.url
        hops = 0
        while True:
            if not robots.allows(_request_path(current)):
                raise _Skip(SKIP_ROBOTS, current)
            resp = self._get_with_retries(current, delay, state)
            try:
                status = resp.status_code
                if status in _REDIRECT_STATUSES:
                    location = resp.headers.get("Location")
                    if not location:
                        raise _Skip(SKIP_REDIRECT_ERROR,
                                    f"{status} without Location")
                    hops += 1
                    if hops > _MAX_REDIRECTS:
                        raise _Skip(SKIP_REDIRECT_LOOP,
                                    f"more than {_MAX_REDIRECTS} redirects")
                    try:
                        target = normalize_url(location, base=current)
                    except UrlError as exc:
                        raise _Skip(SKIP_REDIRECT_ERROR, str(exc)) from exc
                    if url_domain(target) != url_domain(current):
                        raise _Skip(SKIP_CROSS_HOST, target)
                    if target != task.url and is_visited and is_visited(target):
                        raise _Skip(SKIP_REDIRECT_VISITED, target)
                    current = target
                    # next hop hits the same domain: honor its delay
                    if delay > 0:
                        self._sleep(delay)
                    continue
                if not 200 <= status < 300:
                    raise _Skip(SKIP_HTTP_ERROR, str(status))
                content_type = (resp.headers.get("Content-Type") or "")
                content_type = content_type.split(";", 1)[0].strip().lower()
                if content_type not in HTML_CONTENT_TYPES:
                    raise _Skip(SKIP_NON_HTML, content_type or "missing")
                declared = resp.headers.get("Content-Length")
                if declared and declared.isdigit() and \
                        int(declared) > self.max_body_bytes:
                    raise _Skip(SKIP_OVERSIZE, f"declared {declared} bytes")
                body = bytearray()
                for chunk in resp.iter_content(chunk_size=65536):
                    body.extend(chunk)
                    if len(body) > self.max_body_bytes:
                        raise _Skip(SKIP_OVERSIZE,
                                    f"more than {self.max_body_bytes} bytes")
                return FetchResult(url=task.url, final_url=current,
                                   status=status, content_type=content_type,
                                   body=bytes(body), elapsed_ms=0.0)
            finally:
                resp.close()

    def _get_with_retries(self, url: str, delay: float, state: dict):
        attempt = 0
        while True:
            try:
                resp = self._session.get(
                    url, headers=self.headers, timeout=self.timeout_s,
                    allow_redirects=False, stream=True,
                )
                state["requested"] = True
            except requests.RequestException as exc:
                state["requested"] = True
                attempt += 1
                if attempt > self.max_retries:
                    raise _Skip(SKIP_FETCH_ERROR, str(exc)) from exc
                self._sleep(max(self.backoff_base_s * 2 ** (attempt - 1), delay))
                continue
            if resp.status_code >= 500 and attempt < self.max_retries:
                resp.close()
                attempt += 1
                self._sleep(max(self.backoff_base_s * 2 ** (attempt - 1), delay))
                continue
            return resp
