"""Command-line interface: headless suite runs, log replay, live serving."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .config import load_config
from .harness import GOALS, emit_report, format_table, run_suite


def parse_goal_ids(text: str) -> list[int]:
    """Parse '1-5', '1,3,9' or combinations into an ordered id list."""
    ids: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            ids.extend(range(int(lo), int(hi) + 1))
        else:
            ids.append(int(part))
    unknown = [i for i in ids if i not in GOALS]
    if unknown:
        raise argparse.ArgumentTypeError(f"unknown goal ids: {unknown}")
    return ids


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="llmdirector")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the goal suite (or serve a live session)")
    run.add_argument("--goals", default="1-9", type=parse_goal_ids, help="e.g. 1-9 or 2,5")
    run.add_argument("--repeats", default=10, type=int)
    run.add_argument("--backend", default=None, choices=["scripted", "mixed", "http"])
    run.add_argument("--seed", default=1, type=int)
    run.add_argument("--config", default=None, help="JSON config file")
    run.add_argument("--report", default=None, help="directory for report files")
    run.add_argument("--endpoint", default=None, help="chat-completions URL (http backend)")
    run.add_argument("--model", default=None, help="model name (http backend)")
    run.add_argument("--serve", default=None, metavar="HOST:PORT",
                     help="serve a live interactive session instead of headless trials")

    replay = sub.add_parser("replay", help="pretty-print a recorded trial log")
    replay.add_argument("--log", required=True)

    return parser


def apply_backend_overrides(cfg, args):
    backend = cfg.backend
    if args.backend:
        backend = dataclasses.replace(backend, kind=args.backend)
    if args.endpoint:
        backend = dataclasses.replace(backend, endpoint=args.endpoint)
    if args.model:
        backend = dataclasses.replace(backend, model=args.model)
    if backend.kind == "http" and not backend.endpoint:
        raise SystemExit("http backend needs --endpoint (or backend.endpoint in the config)")
    return dataclasses.replace(cfg, backend=backend)


def cmd_run(args) -> int:
    cfg = apply_backend_overrides(load_config(args.config), args)
    if args.serve:
        from .gateway import LiveSession, serve

        host, _, port = args.serve.rpartition(":")
        goal_text = GOALS[args.goals[0]].request if args.goals else "Approach the ball"
        session = LiveSession(cfg=cfg, goal_text=goal_text, seed=args.seed)
        print(f"serving live session on ws://{host or '127.0.0.1'}:{port}/ws")
        serve(session, host or "127.0.0.1", int(port))
        return 0
    suite = run_suite(args.goals, args.repeats, cfg=cfg, base_seed=args.seed)
    print(format_table(suite), end="")
    if args.report:
        written = emit_report(suite, args.report)
        total = sum(len(paths) for paths in written.values())
        print(f"\nwrote {total} report files under {args.report}")
    aborted = sum(row.aborted for row in suite.rows)
    return 0 if aborted == 0 else 1


def cmd_replay(args) -> int:
    path = Path(args.log)
    if not path.exists():
        print(f"no such log: {path}", file=sys.stderr)
        return 1
    polls = executable = 0
    for line in path.read_text("utf-8").splitlines():
        event = json.loads(line)
        kind = event["kind"]
        detail = ""
        if kind == "poll":
            polls += 1
            executable += bool(event["executable"])
            detail = f"executable={event['executable']} reason={event['reason']} parsed={event['parsed']}"
        elif kind == "assignment":
            detail = f"holds={event['holds']} substitutions={event['substitutions']}"
        elif kind == "goal_set":
            detail = repr(event["text"])
        elif kind == "end":
            detail = event["termination"]
        elif kind == "kick":
            detail = f"ball={event['ball']}"
        print(f"{event['t']:>12.6f}  {kind:<14} {detail}")
    if polls:
        print(f"\npolls={polls} executable={executable} executability={executable / polls:.2f}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    if args.command == "replay":
        return cmd_replay(args)
    return 2


if __name__ == "__main__":
    sys.exit(main())
