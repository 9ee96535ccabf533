"""Newline-delimited JSON protocol loop over the standard streams.

Protocol version 1. Requests: hello, exec, status, output, shutdown.
Every well-formed request line gets exactly one reply line; replies are
written and flushed atomically so a crash yields a complete line or
nothing. The process is strictly single-threaded with one request in
flight; concurrency comes from running more kernel processes.
"""

from __future__ import annotations

import argparse
import json
import random
import sys

from .session import KernelSession

PROTOCOL_VERSION = 1

AWAITING_HELLO = "awaiting_hello"
READY = "ready"


def _seed_ambient_randomness() -> None:
    # defensive determinism; fixture workloads must not depend on randomness
    random.seed(0)
    try:
        import numpy
    except ImportError:
        return
    numpy.random.seed(0)


def _apply_memory_ceiling(max_memory_mb: int | None) -> None:
    if not max_memory_mb:
        return
    import resource

    ceiling = max_memory_mb << 20
    resource.setrlimit(resource.RLIMIT_AS, (ceiling, ceiling))


def serve(stdin=None, stdout=None) -> None:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    session = KernelSession()
    state = AWAITING_HELLO

    def reply(payload: dict) -> None:
        stdout.write(json.dumps(payload, ensure_ascii=True) + "\n")
        stdout.flush()

    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except ValueError:
            reply({"ok": False, "error": "protocol: request is not valid JSON"})
            continue
        if not isinstance(request, dict):
            reply({"ok": False, "error": "protocol: request must be a JSON object"})
            continue
        op = request.get("op")

        if op == "hello":
            if state is READY:
                reply({"ok": False, "error": "protocol: duplicate hello"})
            else:
                state = READY
                reply({"ok": True, "version": PROTOCOL_VERSION})
            continue
        if state is AWAITING_HELLO:
            reply({"ok": False, "error": "protocol: hello required first"})
            continue

        if op == "exec":
            code = request.get("code")
            if not isinstance(code, str):
                reply({"ok": False, "error": "protocol: exec needs a string 'code'"})
                continue
            reply(session.execute(code, str(request.get("cell_id", ""))))
        elif op == "status":
            reply(session.status())
        elif op == "output":
            reply(session.output(str(request.get("stage", ""))))
        elif op == "shutdown":
            reply({"ok": True})
            return
        else:
            reply({"ok": False, "error": f"protocol: unknown op {op!r}"})


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="tabkernel", description=__doc__)
    parser.add_argument(
        "--max-memory-mb",
        type=int,
        default=None,
        help="address-space ceiling for this process",
    )
    args = parser.parse_args(argv)
    _apply_memory_ceiling(args.max_memory_mb)
    _seed_ambient_randomness()
    serve()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
