"""Run the embedding service: ``python -m embedsvc [--model ...] [--port ...]``."""

from __future__ import annotations

import argparse
import os

import uvicorn

from .app import DEFAULT_MAX_BATCH, create_app
from .encoders import make_encoder


def main() -> None:
    parser = argparse.ArgumentParser(description="sentence-embedding microservice")
    parser.add_argument(
        "--model",
        default=os.environ.get("EMBED_MODEL", "hashed"),
        help="'hashed', 'hashed:<dim>', or a sentence-transformers model name/path",
    )
    parser.add_argument(
        "--port", type=int, default=int(os.environ.get("EMBED_PORT", "8901"))
    )
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument(
        "--max-batch",
        type=int,
        default=int(os.environ.get("EMBED_MAX_BATCH", str(DEFAULT_MAX_BATCH))),
    )
    args = parser.parse_args()

    app = create_app(make_encoder(args.model), max_batch=args.max_batch)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")


if __name__ == "__main__":
    main()
