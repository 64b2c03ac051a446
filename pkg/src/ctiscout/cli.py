"""Command-line interface: train, evaluate, crawl, graph, report.

Configuration precedence for `crawl`: built-in defaults, then the TOML config
file, then explicit command-line flags. Exit codes: 0 on success, 2 for
configuration problems, 3 for embedding-backend failures.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import signal
import sys
from pathlib import Path
from typing import Optional, Sequence

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - version-dependent import
    import tomli as tomllib

from .classify import (
    CANONICAL_LABELS,
    LABEL_NOT_RELEVANT,
    TrainingError,
    save_model,
    train_ground_truth,
)
from .embedding import AdaptiveBudget, BackendError, Budget, FixedBudget, backend_from_spec
from .evaluate import (
    build_crawl_graph,
    format_metrics_table,
    harvest_rate,
    kfold_evaluate,
    write_dot,
    write_graphml,
    write_metrics_csv,
)
from .extract import extract_main_content, split_sentences
from .orchestrator import (
    ConfigError,
    CrawlConfig,
    Monitor,
    format_crawl_summary,
    run_crawl,
)
from .storage import DocumentStore

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3

KNOWN_LABELS = set(CANONICAL_LABELS) | {LABEL_NOT_RELEVANT}


def load_corpus(corpus_dir: str | Path) -> list[tuple[list[str], str]]:
    """Read a labeled corpus laid out as one subdirectory per label.

    Files may be .txt (used verbatim) or .html (main content extracted).
    Unknown label directories fail loudly, listing every offender; files
    that yield no sentences are skipped with a warning.
    """
    root = Path(corpus_dir)
    if not root.is_dir():
        raise ConfigError(f"corpus directory {root} does not exist")
    label_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    unknown = [p.name for p in label_dirs if p.name not in KNOWN_LABELS]
    if unknown:
        raise ConfigError(
            "unknown label directories: " + ", ".join(sorted(unknown))
            + f" (expected a subset of {sorted(KNOWN_LABELS)})"
        )
    if not label_dirs:
        raise ConfigError(f"corpus directory {root} has no label subdirectories")
    corpus: list[tuple[list[str], str]] = []
    for label_dir in label_dirs:
        for path in sorted(label_dir.iterdir()):
            if path.suffix not in (".txt", ".html"):
                continue
            if path.suffix == ".html":
                text = extract_main_content(path.read_bytes())
            else:
                text = path.read_text(encoding="utf-8")
            sentences = split_sentences(text)
            if not sentences:
                logger.warning("no sentences in %s; skipping", path)
                continue
            corpus.append((sentences, label_dir.name))
    if not corpus:
        raise ConfigError(f"corpus directory {root} yielded no documents")
    return corpus


def _budget_from_args(args) -> Budget:
    if getattr(args, "fixed_budget", None) is not None:
        return FixedBudget(args.fixed_budget)
    return AdaptiveBudget(gradient_limit=args.gradient_limit)


def _add_backend_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--backend", default="mock:0:256",
                        help="embedding backend: mock:<seed>[:<dim>] or an "
                             "http(s) endpoint URL")


def _add_budget_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--fixed-budget", type=int, default=None,
                        help="fixed sentence budget (omit for adaptive)")
    parser.add_argument("--gradient-limit", type=float, default=0.02,
                        help="adaptive budget gradient cutoff")
    parser.add_argument("--distance-mode", choices=("max", "average"),
                        default="max", help="allowed-distance aggregation")


def _cmd_train(args) -> int:
    corpus = load_corpus(args.corpus)
    backend = backend_from_spec(args.backend)
    budget = _budget_from_args(args)
    truths = train_ground_truth(
        corpus, backend, budget,
        distance_mode=args.distance_mode,
        train_aggregate=args.train_aggregate,
    )
    save_model(args.model, truths, backend_name=backend.name,
               dim=backend.dim, distance_mode=args.distance_mode)
    print(f"trained {len(truths)} label vectors "
          f"({', '.join(sorted(truths))}) -> {args.model}")
    for label in sorted(truths):
        gt = truths[label]
        print(f"  {label:24} allowed_distance={gt.allowed_distance:.6f} "
              f"sentence_budget={gt.sentence_budget}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    corpus = load_corpus(args.corpus)
    backend = backend_from_spec(args.backend)
    budget = _budget_from_args(args)
    report = kfold_evaluate(
        corpus, args.k, backend, budget,
        distance_mode=args.distance_mode,
        train_aggregate=args.train_aggregate,
    )
    print(format_metrics_table(report))
    if args.report:
        write_metrics_csv(report, args.report)
        print(f"metrics written to {args.report}")
    return EXIT_OK


def _config_from_file(path: str) -> dict:
    try:
        with open(path, "rb") as handle:
            raw = tomllib.load(handle)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}") from exc
    fields = {f.name for f in dataclasses.fields(CrawlConfig)}
    unknown = set(raw) - fields
    if unknown:
        raise ConfigError("unknown config keys: " + ", ".join(sorted(unknown)))
    return raw


_FLAG_TO_FIELD = {
    "seeds": "seed_file",
    "model": "model_file",
    "output": "output_dir",
    "blacklist": "blacklist_file",
    "backend": "backend",
    "retriever_workers": "retriever_workers",
    "extractor_workers": "extractor_workers",
    "default_delay_s": "default_delay_s",
    "timeout_s": "timeout_s",
    "max_pages": "max_pages",
    "distance_mode": "distance_mode",
    "fixed_budget": "fixed_budget",
    "gradient_limit": "gradient_limit",
    "agent_token": "agent_token",
    "info_url": "info_url",
    "follow_all_links": "follow_all_links",
    "shuffle_seed": "shuffle_seed",
    "resume": "resume",
}


def _cmd_crawl(args) -> int:
    settings: dict = {}
    if args.config:
        settings.update(_config_from_file(args.config))
    for flag, field_name in _FLAG_TO_FIELD.items():
        value = getattr(args, flag, None)
        if value is not None and value is not False:
            settings[field_name] = value
    for required in ("seed_file", "model_file", "output_dir"):
        if required not in settings:
            raise ConfigError(f"missing required setting {required!r} "
                              f"(flag or config file)")
    config = CrawlConfig(**settings)

    monitor = Monitor()
    previous = signal.getsignal(signal.SIGINT)

    def _interrupt(_signum, _frame):
        print("interrupt received; stopping crawl...", file=sys.stderr)
        monitor.request_stop("interrupt")
        signal.signal(signal.SIGINT, previous)

    signal.signal(signal.SIGINT, _interrupt)
    try:
        report = run_crawl(config, monitor=monitor)
    finally:
        signal.signal(signal.SIGINT, previous)
    print(format_crawl_summary(report))
    print(f"outputs in {config.output_dir}")
    if report.backend_failed:
        print("embedding backend failed mid-run; report is partial",
              file=sys.stderr)
        return EXIT_BACKEND
    return EXIT_OK


def _cmd_graph(args) -> int:
    store = DocumentStore(args.store)
    graph = build_crawl_graph(store)
    write_dot(graph, args.out)
    outputs = [str(args.out)]
    if args.graphml:
        write_graphml(graph, args.graphml)
        outputs.append(str(args.graphml))
    print(f"{len(graph.nodes)} nodes, {len(graph.edges)} edges, "
          f"{graph.weakly_connected_components()} weakly connected components")
    print("written: " + ", ".join(outputs))
    return EXIT_OK


def _cmd_report(args) -> int:
    out_dir = Path(args.output)
    report_path = out_dir / "report.json"
    if not report_path.exists():
        raise ConfigError(f"no report.json under {out_dir}")
    summary = json.loads(report_path.read_text(encoding="utf-8"))
    for key in sorted(summary):
        print(f"{key:13}: {summary[key]}")
    store_dir = out_dir / "store"
    if store_dir.exists():
        store = DocumentStore(store_dir)
        records = list(store.latest().values())
        processed = [r for r in records if r.processed]
        if processed:
            print(f"index check  : {len(processed)} processed rows, "
                  f"harvest {harvest_rate(records):.3f}")
    ranked_path = out_dir / "ranked.csv"
    if ranked_path.exists():
        lines = ranked_path.read_text(encoding="utf-8").splitlines()
        print(f"ranked list  : {max(len(lines) - 1, 0)} documents "
              f"({ranked_path})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctiscout",
        description="Focused crawler for security-intelligence documents: "
                    "train label vectors, evaluate them, crawl, and report.",
    )
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train label vectors from a corpus")
    p_train.add_argument("--corpus", required=True,
                         help="directory with one subdirectory per label")
    p_train.add_argument("--model", required=True, help="output model file")
    p_train.add_argument("--train-aggregate", action="store_true",
                         help="also train the aggregate relevance vector")
    _add_backend_args(p_train)
    _add_budget_args(p_train)

    p_eval = sub.add_parser("evaluate", help="k-fold cross-validation metrics")
    p_eval.add_argument("--corpus", required=True)
    p_eval.add_argument("--k", type=int, default=5)
    p_eval.add_argument("--report", default=None, help="CSV output path")
    p_eval.add_argument("--train-aggregate", action="store_true")
    _add_backend_args(p_eval)
    _add_budget_args(p_eval)

    p_crawl = sub.add_parser("crawl", help="run a focused crawl")
    p_crawl.add_argument("--config", default=None,
                         help="TOML config file (flags override it)")
    p_crawl.add_argument("--seeds", default=None, help="seed URL file")
    p_crawl.add_argument("--model", default=None, help="trained model file")
    p_crawl.add_argument("--output", default=None, help="output directory")
    p_crawl.add_argument("--blacklist", default=None,
                         help="domain blacklist file (default: packaged list)")
    p_crawl.add_argument("--backend", default=None)
    p_crawl.add_argument("--retriever-workers", type=int, default=None)
    p_crawl.add_argument("--extractor-workers", type=int, default=None)
    p_crawl.add_argument("--default-delay-s", type=float, default=None)
    p_crawl.add_argument("--timeout-s", type=float, default=None)
    p_crawl.add_argument("--max-pages", type=int, default=None)
    p_crawl.add_argument("--distance-mode", choices=("max", "average"),
                         default=None)
    p_crawl.add_argument("--fixed-budget", type=int, default=None)
    p_crawl.add_argument("--gradient-limit", type=float, default=None)
    p_crawl.add_argument("--agent-token", default=None)
    p_crawl.add_argument("--info-url", default=None,
                         help="contact URL embedded in the user-agent")
    p_crawl.add_argument("--follow-all-links", action="store_true",
                         default=False,
                         help="baseline mode: follow links from every page")
    p_crawl.add_argument("--shuffle-seed", type=int, default=None,
                         help="shuffle extracted links (baseline crawls)")
    p_crawl.add_argument("--resume", action="store_true", default=False,
                         help="reload the frontier saved in the output dir")

    p_graph = sub.add_parser("graph", help="export the crawl multigraph")
    p_graph.add_argument("--store", required=True,
                         help="document store directory (output/store)")
    p_graph.add_argument("--out", required=True, help="DOT output path")
    p_graph.add_argument("--graphml", default=None,
                         help="optional GraphML output path")

    p_report = sub.add_parser("report", help="summarize a finished crawl")
    p_report.add_argument("--output", required=True,
                          help="crawl output directory")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    handlers = {
        "train": _cmd_train,
        "evaluate": _cmd_evaluate,
        "crawl": _cmd_crawl,
        "graph": _cmd_graph,
        "report": _cmd_report,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, TrainingError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())
