"""Entry point: ``python -m modelserver --config server.yaml``."""

from __future__ import annotations

import argparse
import sys

import uvicorn

from .app import create_app
from .config import ServerConfigError, load_server_config


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="modelserver",
        description="Serve relation extraction and NLI classification over HTTP.",
    )
    parser.add_argument("--config", metavar="PATH", help="YAML config file")
    parser.add_argument("--host", help="bind address (overrides the config file)")
    parser.add_argument("--port", type=int, help="bind port (overrides the config file)")
    args = parser.parse_args(argv)
    try:
        cfg = load_server_config(args.config)
    except ServerConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    host = args.host or cfg.host
    port = cfg.port if args.port is None else args.port
    uvicorn.run(create_app(cfg), host=host, port=port, log_level="info")
    return 0


if __name__ == "__main__":
    sys.exit(main())
