"""Run the embedding service.

Configuration comes from flags, falling back to environment variables:
--model-dir / SIDECAR_MODEL_DIR, --model-id / SIDECAR_MODEL_ID,
--host / SIDECAR_HOST, --port / SIDECAR_PORT. The model directory is built
(randomly initialized, seeded) on first use, so the service never
downloads anything. Health reports 503 until loading finishes.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import threading

import uvicorn

from .model import SentenceEmbedder, build_model
from .service import ServiceState, create_app

logger = logging.getLogger(__name__)


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embedding-sidecar", description=__doc__)
    parser.add_argument(
        "--model-dir",
        default=os.environ.get("SIDECAR_MODEL_DIR", "./sidecar-model"),
        help="encoder directory; built with random weights if absent")
    parser.add_argument(
        "--model-id",
        default=os.environ.get("SIDECAR_MODEL_ID", "default"),
        help="identifier echoed by /health and required by /embed")
    parser.add_argument(
        "--host", default=os.environ.get("SIDECAR_HOST", "127.0.0.1"))
    parser.add_argument(
        "--port", type=int,
        default=int(os.environ.get("SIDECAR_PORT", "8750")))
    parser.add_argument(
        "--seed", type=int, default=1234,
        help="weight-initialization seed used when building the model")
    parser.add_argument(
        "--build-only", action="store_true",
        help="build the model directory and exit without serving")
    return parser


def load_in_background(state: ServiceState, model_dir: str, seed: int) -> threading.Thread:
    """Start model loading; /health turns 200 when the thread finishes."""

    def load():
        try:
            build_model(model_dir, seed=seed)
            embedder = SentenceEmbedder(model_dir)
        except Exception as exc:  # noqa: BLE001 - reported via /health
            logger.exception("model load failed")
            state.load_error = str(exc)
            return
        state.embedder = embedder
        logger.info("model %r ready (D=%d)", state.model_id, embedder.dim)

    thread = threading.Thread(target=load, name="model-loader", daemon=True)
    thread.start()
    return thread


def main(argv=None) -> int:
    args = build_arg_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    if args.build_only:
        build_model(args.model_dir, seed=args.seed)
        print(f"model built at {args.model_dir}")
        return 0

    state = ServiceState(model_id=args.model_id)
    app = create_app(state)
    load_in_background(state, args.model_dir, args.seed)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
