"""Run the worker: python -m mccd_worker or the mccd-worker script."""

from __future__ import annotations

import argparse

import uvicorn

from .app import WorkerConfig, create_app


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(
        prog="mccd-worker",
        description="Serve the latent denoising wire protocol over HTTP.",
    )
    parser.add_argument(
        "--model",
        default="mini-attention",
        help="Model identifier; 'echo' serves the conformance stub.",
    )
    parser.add_argument("--device", default="cpu", help="Torch device string.")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=7860)
    parser.add_argument(
        "--max-sessions", type=int, default=32, dest="max_sessions",
        help="Bound on per-session locks and prompt caches.",
    )
    parser.add_argument("--seed", type=int, default=0, help="Weight-init seed.")
    parser.add_argument(
        "--checkpoint", default=None, help="Optional state-dict file to load."
    )
    parser.add_argument(
        "--nondeterministic",
        action="store_true",
        help="Inject scheduler noise instead of the deterministic update.",
    )
    args = parser.parse_args(argv)

    config = WorkerConfig(
        model=args.model,
        device=args.device,
        port=args.port,
        max_sessions=args.max_sessions,
        seed=args.seed,
        deterministic=not args.nondeterministic,
        checkpoint=args.checkpoint,
    )
    uvicorn.run(create_app(config), host=args.host, port=config.port, log_level="warning")


if __name__ == "__main__":
    main()
