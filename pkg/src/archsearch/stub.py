"""Reference evaluator child for the line-delimited JSON protocol.

Reads one request per line on stdin and writes ``{"id", "accuracy",
"extras"}`` per line on stdout using the synthetic landscape.  Malformed
requests get an ``{"id": ..., "error": ...}`` line and the process keeps
serving.  Two test hooks exist: ``--shuffle`` holds responses until stdin
has been idle briefly and then emits them in a seeded random order, and
``--drop-once ID`` silently ignores the first request carrying that id.
"""

from __future__ import annotations

import argparse
import json
import queue
import signal
import sys
import threading

import numpy as np

from .evaluation import VARIANTS, SyntheticEvaluator
from .searchspace import SearchSpaceError, canonicalize, decode_text

IDLE_SECONDS = 0.05


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="archsearch eval-stub", description=__doc__.splitlines()[0])
    p.add_argument("--variant", choices=VARIANTS, default="smooth")
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--noise-seed", type=int, default=0)
    p.add_argument("--landscape-seed", type=int, default=0)
    p.add_argument("--shuffle", action="store_true", help="answer buffered requests in a random order")
    p.add_argument("--shuffle-seed", type=int, default=0)
    p.add_argument("--drop-once", type=int, action="append", default=[], metavar="ID",
                   help="ignore the first request with this id (repeatable)")
    return p


def answer(line: str, evaluator: SyntheticEvaluator) -> dict:
    try:
        req = json.loads(line)
    except json.JSONDecodeError as exc:
        return {"id": None, "error": f"invalid JSON: {exc.msg}"}
    if not isinstance(req, dict) or not isinstance(req.get("id"), int) or not isinstance(req.get("genome"), str):
        return {"id": req.get("id") if isinstance(req, dict) else None, "error": "request needs integer 'id' and string 'genome'"}
    try:
        genome = canonicalize(decode_text(req["genome"]))
    except SearchSpaceError as exc:
        return {"id": req["id"], "error": f"bad genome: {exc}"}
    acc = float(evaluator.accuracy(genome[None, :])[0])
    return {"id": req["id"], "accuracy": acc, "extras": {"evaluator": evaluator.evaluator_id}}


def serve(args, stdin=None, stdout=None) -> int:
    stdin = sys.stdin if stdin is None else stdin
    stdout = sys.stdout if stdout is None else stdout
    evaluator = SyntheticEvaluator(args.variant, sigma=args.sigma, noise_seed=args.noise_seed,
                                   landscape_seed=args.landscape_seed)
    rng = np.random.default_rng(args.shuffle_seed)
    to_drop = set(args.drop_once)
    lines: queue.Queue = queue.Queue()

    def pump():
        for raw in stdin:
            lines.put(raw)
        lines.put(None)

    threading.Thread(target=pump, daemon=True).start()
    held: list[dict] = []

    def flush():
        order = rng.permutation(len(held)) if args.shuffle else range(len(held))
        for i in order:
            stdout.write(json.dumps(held[i]) + "\n")
        stdout.flush()
        held.clear()

    while True:
        try:
            raw = lines.get(timeout=IDLE_SECONDS) if held else lines.get()
        except queue.Empty:
            flush()
            continue
        if raw is None:
            flush()
            return 0
        if not raw.strip():
            continue
        reply = answer(raw, evaluator)
        if reply.get("id") in to_drop and "error" not in reply:
            to_drop.discard(reply["id"])
            continue
        held.append(reply)
        if not args.shuffle:
            flush()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    signal.signal(signal.SIGTERM, lambda *_: sys.exit(0))
    try:
        return serve(args)
    except (KeyboardInterrupt, BrokenPipeError):
        return 0


if __name__ == "__main__":
    sys.exit(main())
