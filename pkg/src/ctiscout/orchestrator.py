"""Crawl coordination: worker threads, monitor, configuration, and reports.

A crawl runs R retriever workers (frontier -> fetch -> raw store) and E
extractor workers (extract -> classify -> links for relevant docs) around
thread-safe queues. The monitor owns every worker's state and the stop
signal; a stop request, a processed-page cap, a drained frontier, or a
backend outage all end the run through the same graceful path, after which
the ranked relevant-document list, harvest rate, and crawl graph are written.
"""
from __future__ import annotations

import csv
import json
import logging
import queue
import random
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional
from urllib.parse import urlsplit

from .classify import load_model
from .embedding import BackendError, backend_from_spec
from .evaluate import build_crawl_graph, record_is_relevant, write_dot, write_graphml
from .extract import Blacklist, DocumentProcessor
from .frontier import Frontier, RobotsCache, UrlTask
from .retriever import (
    DEFAULT_AGENT_TOKEN,
    DEFAULT_INFO_URL,
    DEFAULT_MAX_BODY_BYTES,
    Fetcher,
    SKIP_ROBOTS,
)
from .storage import DocumentStore, SkipLog, SkipRecord
from .urls import UrlError, normalize_url

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid configuration (maps to CLI exit code 2)."""


# -- monitor ------------------------------------------------------------------

STATE_IDLE = "Idle"
STATE_FETCHING = "Fetching"
STATE_WAITING_DELAY = "WaitingDelay"
STATE_EXTRACTING = "Extracting"
STATE_CLASSIFYING = "Classifying"
STATE_STOPPED = "Stopped"
STATE_ERRORED = "Errored"

_TERMINAL_STATES = {STATE_STOPPED, STATE_ERRORED}
_ROLE_STATES = {
    "retriever": {STATE_IDLE, STATE_FETCHING, STATE_WAITING_DELAY} | _TERMINAL_STATES,
    "extractor": {STATE_IDLE, STATE_EXTRACTING, STATE_CLASSIFYING} | _TERMINAL_STATES,
}


@dataclass
class WorkerState:
    worker_id: str
    role: str
    state: str
    since: float


class Monitor:
    """Single writer of the worker-state registry plus the shared stop flag."""

    def __init__(self):
        self._lock = threading.Lock()
        self._workers: dict[str, WorkerState] = {}
        self._stop = threading.Event()
        self._stop_reason: Optional[str] = None

    def register(self, worker_id: str, role: str) -> None:
        if role not in _ROLE_STATES:
            raise ValueError(f"unknown role {role!r}")
        with self._lock:
            if worker_id in self._workers:
                raise ValueError(f"worker {worker_id!r} already registered")
            self._workers[worker_id] = WorkerState(
                worker_id=worker_id, role=role, state=STATE_IDLE,
                since=time.monotonic(),
            )

    def transition(self, worker_id: str, state: str) -> None:
        with self._lock:
            worker = self._workers[worker_id]
            if state == worker.state:
                return  # idempotent (repeated stop requests are fine)
            if worker.state in _TERMINAL_STATES:
                raise ValueError(
                    f"worker {worker_id!r} is {worker.state}; no transition "
                    f"to {state!r} allowed"
                )
            if state not in _ROLE_STATES[worker.role]:
                raise ValueError(f"state {state!r} invalid for {worker.role}")
            worker.state = state
            worker.since = time.monotonic()

    def states(self) -> dict[str, WorkerState]:
        with self._lock:
            return {
                wid: WorkerState(w.worker_id, w.role, w.state, w.since)
                for wid, w in self._workers.items()
            }

    def request_stop(self, reason: str = "requested") -> None:
        with self._lock:
            if self._stop_reason is None:
                self._stop_reason = reason
        self._stop.set()

    @property
    def stop_requested(self) -> bool:
        return self._stop.is_set()

    @property
    def stop_reason(self) -> Optional[str]:
        with self._lock:
            return self._stop_reason

    def all_terminal(self) -> bool:
        with self._lock:
            return all(w.state in _TERMINAL_STATES
                       for w in self._workers.values())

    def emergency_stop(self, grace_s: float = 10.0) -> bool:
        """Signal stop and wait until every worker is terminal (or grace ends)."""
        self.request_stop("emergency-stop")
        deadline = time.monotonic() + grace_s
        while time.monotonic() < deadline:
            if self.all_terminal():
                return True
            time.sleep(0.02)
        return self.all_terminal()


# -- configuration --------------------------------------------------------------

@dataclass
class CrawlConfig:
    seed_file: str
    model_file: str
    output_dir: str
    blacklist_file: Optional[str] = None  # None selects the packaged list
    backend: str = "mock:0:256"
    retriever_workers: int = 4
    extractor_workers: int = 2
    default_delay_s: float = 5.0
    timeout_s: float = 30.0
    max_pages: int = 1000
    distance_mode: str = "max"
    fixed_budget: Optional[int] = None  # None means adaptive
    gradient_limit: float = 0.02
    max_body_bytes: int = DEFAULT_MAX_BODY_BYTES
    robots_ttl_s: float = 86400.0
    agent_token: str = DEFAULT_AGENT_TOKEN
    info_url: str = DEFAULT_INFO_URL
    follow_all_links: bool = False  # baseline: ignore relevance for pathing
    shuffle_seed: Optional[int] = None  # randomize baseline link order
    resume: bool = False

    def validate(self) -> None:
        if self.max_pages < 1:
            raise ConfigError("max_pages must be >= 1")
        if self.gradient_limit <= 0:
            raise ConfigError("gradient limit must be > 0")
        if self.retriever_workers < 1 or self.extractor_workers < 1:
            raise ConfigError("worker counts must be >= 1")
        if self.fixed_budget is not None and self.fixed_budget < 1:
            raise ConfigError("fixed sentence budget must be >= 1")
        if self.distance_mode not in ("max", "average"):
            raise ConfigError("distance_mode must be 'max' or 'average'")
        if self.default_delay_s < 0 or self.timeout_s <= 0:
            raise ConfigError("delays must be >= 0 and timeout > 0")


@dataclass
class RankedDoc:
    url: str
    rank_key: float
    label: Optional[str]


@dataclass
class CrawlReport:
    processed: int
    relevant: int
    harvest_rate: float
    runtime_s: float
    ranked: list[RankedDoc]
    skipped: int
    errors: int
    stop_reason: str
    backend_failed: bool = False


def read_seed_file(path: str | Path) -> list[str]:
    seeds = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            seeds.append(normalize_url(line))
        except UrlError as exc:
            raise ConfigError(f"bad seed URL {line!r}: {exc}") from exc
    if not seeds:
        raise ConfigError(f"seed file {path} contains no URLs")
    return seeds


# -- crawl run ------------------------------------------------------------------

class _Counters:
    def __init__(self):
        self._lock = threading.Lock()
        self.processed = 0
        self.relevant = 0
        self.errors = 0
        self.in_pipeline = 0

    def claim_slot(self, max_pages: int) -> bool:
        with self._lock:
            if self.processed >= max_pages:
                return False
            self.processed += 1
            return True

    def add_relevant(self) -> None:
        with self._lock:
            self.relevant += 1

    def add_error(self) -> None:
        with self._lock:
            self.errors += 1

    def unclaim_slot(self) -> None:
        with self._lock:
            self.processed -= 1

    def enter_pipeline(self) -> None:
        with self._lock:
            self.in_pipeline += 1

    def leave_pipeline(self) -> None:
        with self._lock:
            self.in_pipeline -= 1

    @property
    def pipeline_size(self) -> int:
        with self._lock:
            return self.in_pipeline


def _retriever_loop(worker_id: str, monitor: Monitor, frontier: Frontier,
                    robots_cache: RobotsCache, fetcher: Fetcher,
                    store: DocumentStore, skiplog: SkipLog,
                    extract_queue: "queue.Queue", counters: _Counters) -> None:
    try:
        while not monitor.stop_requested:
            task = frontier.next_fetchable(time.monotonic())
            if task is None:
                waiting = frontier.queue_size() > 0
                monitor.transition(worker_id,
                                   STATE_WAITING_DELAY if waiting else STATE_IDLE)
                time.sleep(0.05)
                continue
            domain = task.domain
            robots = robots_cache.get(domain)
            if robots is None:
                monitor.transition(worker_id, STATE_FETCHING)
                scheme = urlsplit(task.url).scheme
                record = fetcher.fetch_robots(domain, scheme=scheme)
                robots_cache.put(record)
                # the robots request consumed this politeness grant; the task
                # goes back to the head of the line
                frontier.requeue_front(task)
                frontier.release(task, time.monotonic(), fetched=True)
                monitor.transition(worker_id, STATE_IDLE)
                continue
            path = urlsplit(task.url).path or "/"
            if urlsplit(task.url).query:
                path += "?" + urlsplit(task.url).query
            if not robots.allows(path):
                skiplog.add(SkipRecord(url=task.url, reason=SKIP_ROBOTS,
                                       detail="disallowed by robots rules"))
                frontier.release(task, time.monotonic(), fetched=False)
                continue
            monitor.transition(worker_id, STATE_FETCHING)
            outcome = fetcher.fetch(
                task, robots,
                is_visited=frontier.is_seen,
                crawl_delay_s=robots_cache.delay_for(domain),
            )
            if outcome.result is not None:
                doc = outcome.result.to_document()
                if outcome.result.final_url != task.url:
                    frontier.mark_seen(outcome.result.final_url)
                counters.enter_pipeline()
                store.store_raw(doc)
                extract_queue.put((task, doc))
            else:
                skiplog.add(outcome.skip)
            frontier.release(task, time.monotonic(), fetched=outcome.requested)
            monitor.transition(worker_id, STATE_IDLE)
        monitor.transition(worker_id, STATE_STOPPED)
    except Exception:  # noqa: BLE001 - record the failure, then die visibly
        logger.exception("retriever %s failed", worker_id)
        monitor.transition(worker_id, STATE_ERRORED)
        monitor.request_stop("worker-error")
    finally:
        fetcher.close()


def _extractor_loop(worker_id: str, monitor: Monitor,
                    processor: DocumentProcessor, skiplog: SkipLog,
                    extract_queue: "queue.Queue", counters: _Counters,
                    max_pages: int) -> None:
    try:
        while True:
            try:
                task, doc = extract_queue.get(timeout=0.05)
            except queue.Empty:
                if monitor.stop_requested:
                    break
                monitor.transition(worker_id, STATE_IDLE)
                continue
            if monitor.stop_requested:
                counters.leave_pipeline()  # abandoned in-flight document
                continue
            if not counters.claim_slot(max_pages):
                counters.leave_pipeline()
                monitor.request_stop("max-pages")
                continue
            monitor.transition(worker_id, STATE_EXTRACTING)
            try:
                outcome = processor.process(
                    task, doc,
                    phase_hook=lambda _phase: monitor.transition(
                        worker_id, STATE_CLASSIFYING),
                )
            except BackendError as exc:
                logger.error("embedding backend failed: %s", exc)
                counters.unclaim_slot()
                counters.leave_pipeline()
                monitor.request_stop("backend-failure")
                continue
            except Exception as exc:  # noqa: BLE001 - keep the worker alive
                logger.exception("processing failed for %s", doc.url)
                counters.add_error()
                counters.unclaim_slot()
                counters.leave_pipeline()
                skiplog.add(SkipRecord(url=doc.url, reason="process-error",
                                       detail=str(exc)))
                monitor.transition(worker_id, STATE_IDLE)
                continue
            if outcome.errored:
                counters.add_error()
                counters.unclaim_slot()  # processed counts classified docs only
                skiplog.add(SkipRecord(url=doc.url, reason="process-error",
                                       detail=outcome.error))
            elif outcome.relevant:
                counters.add_relevant()
            counters.leave_pipeline()
            monitor.transition(worker_id, STATE_IDLE)
        monitor.transition(worker_id, STATE_STOPPED)
    except Exception:  # noqa: BLE001
        logger.exception("extractor %s failed", worker_id)
        monitor.transition(worker_id, STATE_ERRORED)
        monitor.request_stop("worker-error")


def run_crawl(config: CrawlConfig, monitor: Optional[Monitor] = None) -> CrawlReport:
    """Run one focused crawl to completion (or stop) and write its reports."""
    config.validate()
    started = time.monotonic()
    truths, meta = load_model(config.model_file)
    # an unreachable backend raises BackendError here: startup failure
    backend = backend_from_spec(config.backend)
    if meta.get("D") != backend.dim:
        raise ConfigError(
            f"model file expects {meta.get('D')}-dim embeddings but backend "
            f"{backend.name!r} produces {backend.dim}"
        )
    seeds = read_seed_file(config.seed_file)
    blacklist = (Blacklist.from_file(config.blacklist_file)
                 if config.blacklist_file else Blacklist.default())

    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    store = DocumentStore(out_dir / "store")
    skiplog = SkipLog(out_dir / "skips.jsonl")
    robots_cache = RobotsCache(default_delay_s=config.default_delay_s,
                               ttl_s=config.robots_ttl_s)
    frontier = Frontier(delay_for=robots_cache.delay_for,
                        default_delay_s=config.default_delay_s)
    frontier_path = out_dir / "frontier.json"
    if config.resume and frontier_path.exists():
        frontier.load(frontier_path)
        logger.info("resumed frontier with %d pending tasks",
                    frontier.queue_size())
    for seed in seeds:
        frontier.enqueue(UrlTask(url=seed, depth=0,
                                 enqueued_at=time.monotonic()))

    monitor = monitor or Monitor()
    counters = _Counters()
    extract_queue: "queue.Queue" = queue.Queue()
    shuffle_rng = (random.Random(config.shuffle_seed)
                   if config.shuffle_seed is not None else None)

    threads: list[threading.Thread] = []
    for i in range(config.retriever_workers):
        worker_id = f"retriever-{i}"
        monitor.register(worker_id, "retriever")
        fetcher = Fetcher(
            agent_token=config.agent_token, info_url=config.info_url,
            timeout_s=config.timeout_s, max_body_bytes=config.max_body_bytes,
            default_delay_s=config.default_delay_s,
            robots_ttl_s=config.robots_ttl_s,
        )
        thread = threading.Thread(
            target=_retriever_loop,
            args=(worker_id, monitor, frontier, robots_cache, fetcher, store,
                  skiplog, extract_queue, counters),
            name=worker_id, daemon=True,
        )
        threads.append(thread)
    for i in range(config.extractor_workers):
        worker_id = f"extractor-{i}"
        monitor.register(worker_id, "extractor")
        processor = DocumentProcessor(
            truths=truths, backend=backend, blacklist=blacklist,
            frontier=frontier, store=store, agent_token=config.agent_token,
            follow_all=config.follow_all_links, shuffle_rng=shuffle_rng,
        )
        thread = threading.Thread(
            target=_extractor_loop,
            args=(worker_id, monitor, processor, skiplog, extract_queue,
                  counters, config.max_pages),
            name=worker_id, daemon=True,
        )
        threads.append(thread)
    for thread in threads:
        thread.start()

    # quiescence: nothing queued or claimed, nothing between fetch and store
    while not monitor.stop_requested:
        if (counters.pipeline_size == 0 and extract_queue.empty()
                and frontier.idle()):
            time.sleep(0.1)
            if (counters.pipeline_size == 0 and extract_queue.empty()
                    and frontier.idle()):
                monitor.request_stop("completed")
                break
        time.sleep(0.05)

    for thread in threads:
        thread.join(timeout=max(10.0, config.timeout_s + 5.0))
    frontier.save(frontier_path)

    processed = counters.processed
    relevant = counters.relevant
    rate = relevant / processed if processed else 0.0
    ranked = ranked_documents(store)
    report = CrawlReport(
        processed=processed,
        relevant=relevant,
        harvest_rate=rate,
        runtime_s=time.monotonic() - started,
        ranked=ranked,
        skipped=len(skiplog.read_all()),
        errors=counters.errors,
        stop_reason=monitor.stop_reason or "completed",
        backend_failed=(monitor.stop_reason == "backend-failure"),
    )
    write_crawl_outputs(report, store, out_dir)
    return report


def ranked_documents(store: DocumentStore) -> list[RankedDoc]:
    """Relevant processed documents, most relevant first, URL as tiebreak."""
    ranked = []
    for url, record in store.latest().items():
        if record.processed and record_is_relevant(record):
            ranked.append(RankedDoc(url=url, rank_key=record.relative_distance,
                                    label=record.label))
    ranked.sort(key=lambda d: (d.rank_key, d.url))
    return ranked


def write_crawl_outputs(report: CrawlReport, store: DocumentStore,
                        out_dir: Path) -> None:
    summary = {
        "processed": report.processed,
        "relevant": report.relevant,
        "harvest_rate": report.harvest_rate,
        "runtime_s": report.runtime_s,
        "skipped": report.skipped,
        "errors": report.errors,
        "stop_reason": report.stop_reason,
    }
    (out_dir / "report.json").write_text(
        json.dumps(summary, indent=1, sort_keys=True), encoding="utf-8")
    with (out_dir / "ranked.csv").open("w", encoding="utf-8",
                                       newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["rank", "url", "rank_key", "label"])
        for pos, doc in enumerate(report.ranked, start=1):
            writer.writerow([pos, doc.url, f"{doc.rank_key:.6f}",
                             doc.label or ""])
    graph = build_crawl_graph(store)
    write_dot(graph, out_dir / "graph.dot")
    write_graphml(graph, out_dir / "graph.graphml")


def format_crawl_summary(report: CrawlReport) -> str:
    lines = [
        f"processed documents : {report.processed}",
        f"relevant documents  : {report.relevant}",
        f"harvest rate        : {report.harvest_rate:.3f}",
        f"runtime             : {report.runtime_s:.1f}s",
        f"skipped             : {report.skipped}",
        f"errors              : {report.errors}",
        f"stop reason         : {report.stop_reason}",
        "",
        "top ranked documents:",
    ]
    for pos, doc in enumerate(report.ranked[:10], start=1):
        label = doc.label or "-"
        lines.append(f"  {pos:2d}. {doc.url}  ({label}, {doc.rank_key:.4f})")
    if not report.ranked:
        lines.append("  (none)")
    return "\n".join(lines)
