"""Thin command-line client.

Experiment subcommands run the library and write reports under --out;
``serve`` launches the elicitation service. Exit codes: 0 on success, 2 on
configuration errors.
"""

from __future__ import annotations

import argparse
import sys

from .experiments import (
    ConfigError,
    cmd_scaling,
    cmd_sentiment,
    cmd_sweep,
    cmd_synthetic,
    resolve_config,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rulecast")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in [
        ("synthetic", "switching-Gaussian run: rule feedback vs labels vs none"),
        ("scaling", "repeat the synthetic run over several expert counts"),
        ("sentiment", "cross-domain text run with phrase/regex rules"),
        ("sweep", "alpha sweep of the mixture on the synthetic task"),
    ]:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", help="key=value config file")
        cmd.add_argument("--out", required=True, help="output directory for reports")
        cmd.add_argument("--seed", type=int, help="override the config seed")
        cmd.add_argument("--alpha", type=float, help="override the mixing weight")

    serve = sub.add_parser("serve", help="run the elicitation HTTP service")
    serve.add_argument("--addr", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--state-dir", default=None, help="directory for session persistence")
    return parser


_COMMANDS = {
    "synthetic": cmd_synthetic,
    "scaling": cmd_scaling,
    "sentiment": cmd_sentiment,
    "sweep": cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        import uvicorn

        from .service import create_app

        uvicorn.run(create_app(args.state_dir), host=args.addr, port=args.port)
        return 0
    try:
        cfg = resolve_config(args.config, seed=args.seed, alpha=args.alpha)
        _COMMANDS[args.command](cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
