"""Serve the embedding endpoint: ``python -m embed_service --port 8650``."""

from __future__ import annotations

import argparse

import uvicorn

from .app import create_app
from .encoder import TINY_MODEL_ID


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="embed-service")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8650)
    parser.add_argument(
        "--model",
        default=TINY_MODEL_ID,
        help=f"encoder id: {TINY_MODEL_ID!r} or a transformers model id",
    )
    args = parser.parse_args(argv)
    uvicorn.run(create_app(args.model), host=args.host, port=args.port, log_level="info")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
