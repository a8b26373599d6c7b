"""Command-line entry point: configure and serve the sidecar."""

from __future__ import annotations

import argparse

import uvicorn

from .app import create_app
from .config import SidecarConfig


def build_parser() -> argparse.ArgumentParser:
    defaults = SidecarConfig()
    parser = argparse.ArgumentParser(
        prog="oocsidecar",
        description="Serve embedding and generation endpoints for the pollution pipeline",
    )
    parser.add_argument("--host", default=defaults.host)
    parser.add_argument("--port", type=int, default=defaults.port)
    parser.add_argument("--dim", type=int, default=defaults.dim)
    parser.add_argument("--max-batch", type=int, default=defaults.max_batch)
    parser.add_argument("--embed-model", default=defaults.embed_model)
    parser.add_argument("--text-model", default=defaults.text_model)
    parser.add_argument("--image-model", default=defaults.image_model)
    parser.add_argument("--temperature", type=float, default=defaults.temperature)
    parser.add_argument("--max-tokens", type=int, default=defaults.max_tokens)
    parser.add_argument("--top-p", type=float, default=defaults.top_p)
    parser.add_argument("--log-level", default="info")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = SidecarConfig(
            embed_model=args.embed_model,
            text_model=args.text_model,
            image_model=args.image_model,
            dim=args.dim,
            temperature=args.temperature,
            max_tokens=args.max_tokens,
            top_p=args.top_p,
            host=args.host,
            port=args.port,
            max_batch=args.max_batch,
        )
        app = create_app(config)
    except ValueError as exc:
        print(f"config error: {exc}")
        return 2
    uvicorn.run(app, host=config.host, port=config.port, log_level=args.log_level)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
