"""Minimal protocol driver used by the conformance tests."""

from __future__ import annotations

import json
import os
import select
import subprocess
import sys
import time


class TransportError(Exception):
    """The kernel process closed its stream or sent a broken reply."""


class KernelDriver:
    def __init__(self, extra_args: tuple[str, ...] = (), hello: bool = True) -> None:
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "tabkernel", *extra_args],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            bufsize=0,
        )
        self._buffer = b""
        if hello:
            reply = self.request({"op": "hello"})
            assert reply == {"ok": True, "version": 1}, reply

    def send(self, payload: dict) -> None:
        line = json.dumps(payload) + "\n"
        try:
            self.proc.stdin.write(line.encode("utf-8"))
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise TransportError(f"kernel pipe closed: {exc}") from exc

    def read_reply(self, timeout: float = 15.0) -> dict:
        fd = self.proc.stdout.fileno()
        deadline = time.monotonic() + timeout
        while b"\n" not in self._buffer:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise TransportError("timed out waiting for a reply")
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                continue
            chunk = os.read(fd, 65536)
            if not chunk:
                raise TransportError("kernel closed its output stream")
            self._buffer += chunk
        line, _, self._buffer = self._buffer.partition(b"\n")
        return json.loads(line.decode("utf-8"))

    def request(self, payload: dict, timeout: float = 15.0) -> dict:
        self.send(payload)
        return self.read_reply(timeout)

    def execute(self, code: str, cell_id: str = "reasoning:1") -> dict:
        return self.request({"op": "exec", "cell_id": cell_id, "code": code})

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self.send({"op": "shutdown"})
                self.read_reply(timeout=5.0)
            except TransportError:
                pass
        if self.proc.poll() is None:
            self.proc.kill()
        self.proc.wait(timeout=5)
