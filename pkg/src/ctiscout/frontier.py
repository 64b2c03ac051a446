"""URL frontier: FIFO queue, visited set, per-domain timers, robots cache.

All operations are safe under concurrent access from many worker threads.
next_fetchable claims a domain atomically, so two workers can never fetch one
domain inside a single delay window; the timer is stamped when the worker
releases the claim after its request completes, which keeps server-observed
inter-request gaps at or above the crawl delay.
"""
from __future__ import annotations

import json
import logging
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .robots import RobotsRecord
from .urls import UrlError, normalize_url, url_domain

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class UrlTask:
    """A normalized absolute URL with provenance."""

    url: str
    parent: Optional[str] = None
    depth: int = 0
    enqueued_at: float = field(default=0.0, compare=False)

    @property
    def domain(self) -> str:
        return url_domain(self.url)


class Frontier:
    """FIFO crawl queue with enqueue-time dedup and per-domain throttling."""

    def __init__(self, delay_for: Callable[[str], float] | None = None,
                 default_delay_s: float = 5.0):
        self._lock = threading.Lock()
        self._queue: deque[UrlTask] = deque()
        self._seen: set[str] = set()
        self._last_release: dict[str, float] = {}
        self._claimed: set[str] = set()
        self._in_flight: dict[str, UrlTask] = {}
        self._default_delay_s = default_delay_s
        self._delay_for = delay_for or (lambda domain: default_delay_s)

    def enqueue(self, task: UrlTask) -> bool:
        """Append a task unless its URL was ever enqueued before.

        The URL must already be normalized; malformed URLs are rejected with
        a diagnostic instead of ever entering the queue.
        """
        try:
            normalized = normalize_url(task.url)
        except UrlError as exc:
            logger.warning("rejected malformed URL: %s", exc)
            return False
        if normalized != task.url:
            task = UrlTask(url=normalized, parent=task.parent, depth=task.depth,
                           enqueued_at=task.enqueued_at)
        if task.depth < 0:
            logger.warning("rejected task with negative depth: %s", task.url)
            return False
        with self._lock:
            if task.url in self._seen:
                return False
            self._seen.add(task.url)
            self._queue.append(task)
            return True

    def next_fetchable(self, now: float) -> Optional[UrlTask]:
        """Pop the earliest-enqueued task whose domain timer has expired.

        Returns None when the queue is empty or every queued domain is
        throttled or already claimed by another worker. The returned task's
        domain is claimed until release() is called for it.
        """
        with self._lock:
            for idx, task in enumerate(self._queue):
                domain = task.domain
                if domain in self._claimed:
                    continue
                last = self._last_release.get(domain)
                if last is not None and now - last < self._delay_for(domain):
                    continue
                del self._queue[idx]
                self._claimed.add(domain)
                self._in_flight[task.url] = task
                return task
            return None

    def release(self, task: UrlTask, now: float, fetched: bool = True) -> None:
        """Release the domain claim; stamp the timer only if a request was made."""
        with self._lock:
            self._claimed.discard(task.domain)
            self._in_flight.pop(task.url, None)
            if fetched:
                self._last_release[task.domain] = now

    def requeue_front(self, task: UrlTask) -> None:
        """Re-insert a granted-but-unfetched task at the queue head.

        Used when a grant was spent priming robots.txt for the task's domain;
        the task itself was never fetched and stays first in line.
        """
        with self._lock:
            self._in_flight.pop(task.url, None)
            self._queue.appendleft(task)

    def is_seen(self, url: str) -> bool:
        with self._lock:
            return url in self._seen

    def mark_seen(self, url: str) -> bool:
        """Record a URL as visited without queueing it (e.g. redirect targets).

        Returns False if it was already known.
        """
        with self._lock:
            if url in self._seen:
                return False
            self._seen.add(url)
            return True

    def queue_size(self) -> int:
        with self._lock:
            return len(self._queue)

    def in_flight_count(self) -> int:
        with self._lock:
            return len(self._in_flight)

    def idle(self) -> bool:
        """True when nothing is queued and nothing is claimed."""
        with self._lock:
            return not self._queue and not self._in_flight

    def snapshot_pending(self) -> list[UrlTask]:
        with self._lock:
            return list(self._in_flight.values()) + list(self._queue)

    # -- persistence (resume support) --

    def save(self, path: str | Path) -> None:
        """Persist the visited set and pending tasks (in-flight ones first,
        so an interrupted fetch is retried on resume)."""
        with self._lock:
            state = {
                "seen": sorted(self._seen),
                "pending": [
                    {"url": t.url, "parent": t.parent, "depth": t.depth}
                    for t in list(self._in_flight.values()) + list(self._queue)
                ],
            }
        path = Path(path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(json.dumps(state), encoding="utf-8")
        tmp.replace(path)

    def load(self, path: str | Path) -> None:
        state = json.loads(Path(path).read_text(encoding="utf-8"))
        with self._lock:
            self._seen.update(state.get("seen", []))
            for entry in state.get("pending", []):
                task = UrlTask(url=entry["url"], parent=entry.get("parent"),
                               depth=int(entry.get("depth", 0)),
                               enqueued_at=time.monotonic())
                self._seen.add(task.url)
                self._queue.append(task)


class RobotsCache:
    """TTL cache of RobotsRecord per domain, also the delay source for the frontier."""

    def __init__(self, default_delay_s: float = 5.0, ttl_s: float = 86400.0):
        self._lock = threading.Lock()
        self._records: dict[str, RobotsRecord] = {}
        self.default_delay_s = default_delay_s
        self.ttl_s = ttl_s

    def get(self, domain: str, now: float | None = None) -> Optional[RobotsRecord]:
        now = time.monotonic() if now is None else now
        with self._lock:
            record = self._records.get(domain)
            if record is None or record.expired(now):
                return None
            return record

    def put(self, record: RobotsRecord) -> None:
        with self._lock:
            self._records[record.domain] = record

    def delay_for(self, domain: str) -> float:
        """Crawl delay for a domain; the configured default until robots is known."""
        with self._lock:
            record = self._records.get(domain)
        if record is None:
            return self.default_delay_s
        return record.crawl_delay_s
