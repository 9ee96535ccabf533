"""Client side of the stateful execution kernel.

Two interchangeable session implementations are provided: LocalSession runs
cells in-process (used by tests and as the default backend for trusted
runs), and SubprocessSession drives an external kernel process over the
newline-delimited JSON wire protocol (version 1). Rollback is always
restart-plus-replay of the accepted code base, never snapshotting.
"""

from __future__ import annotations

import contextlib
import hashlib
import io
import json
import math
import os
import select
import subprocess
import time
import traceback
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import pandas as pd

from .codegen import CodeBase, CodeCell
from .errors import InfrastructureError, ProtocolError, TableStatusError
from .stages import StageId
from .tables import Table, to_markdown

PROTOCOL_VERSION = 1
FRAME_NAME = "df"
TABLE_MISSING_MESSAGE = "table object missing"
TIMEOUT_MESSAGE = "execution timeout"


@dataclass(frozen=True)
class ExecOutcome:
    """Result of running one cell: captured stdout, or an error message."""

    ok: bool
    stdout: str = ""
    error: str | None = None

    def __post_init__(self) -> None:
        if not self.ok and not (self.error or "").strip():
            raise ValueError("a failed outcome needs a non-empty error message")


@dataclass(frozen=True)
class RetryPolicy:
    """Bound on regenerations per operation."""

    up_limit: int = 3

    def __post_init__(self) -> None:
        if self.up_limit < 0:
            raise ValueError("up_limit must be non-negative")


@dataclass(frozen=True)
class KernelConfig:
    """How to launch and talk to an external kernel process."""

    command: tuple[str, ...]
    cell_timeout: float = 30.0
    startup_timeout: float = 20.0
    extra_env: dict[str, str] = field(default_factory=dict)


class KernelSession(Protocol):
    def execute_cell(self, cell: CodeCell, timeout: float | None = None) -> ExecOutcome: ...

    def restart_and_replay(self, code_base: CodeBase) -> None: ...

    def current_table_status(self) -> str: ...

    def status_snapshot(self) -> tuple[str, str]: ...

    def program_output(self, stage: StageId) -> str: ...

    def close(self) -> None: ...


def stringify_cell(value: object) -> str:
    """Render one dataframe cell for status output.

    Integral floats drop the trailing ``.0`` and missing values render as
    empty cells, so the prompt rendering stays stable across the cleaning
    stage.
    """
    if value is None:
        return ""
    try:
        if pd.isna(value):
            return ""
    except (TypeError, ValueError):
        pass
    if isinstance(value, float):
        if math.isfinite(value) and value.is_integer():
            return str(int(value))
        return str(value)
    return str(value)


def frame_status(frame: pd.DataFrame, variable_names: Sequence[str]) -> tuple[str, str]:
    """Markdown rendering and stable digest of a dataframe's current state."""
    columns = [str(c) for c in frame.columns]
    cells = [[stringify_cell(v) for v in row] for row in frame.itertuples(index=False)]
    markdown = to_markdown(Table(columns=tuple(columns), rows=tuple(tuple(r) for r in cells)))
    payload = json.dumps(
        {
            "columns": columns,
            "shape": [len(cells), len(columns)],
            "cells": cells,
            "variables": sorted(variable_names),
        },
        ensure_ascii=True,
        separators=(",", ":"),
    )
    digest = hashlib.sha256(payload.encode("utf-8")).hexdigest()
    return markdown, digest


def user_variable_names(namespace: dict) -> list[str]:
    return [name for name in namespace if not name.startswith("_")]


def format_cell_error(exc: BaseException, filename: str, source: str) -> str:
    """Failure class name plus message plus the offending source line."""
    if isinstance(exc, SyntaxError) and exc.filename == filename:
        line = (exc.text or "").strip()
        location = f" (line {exc.lineno}: {line})" if exc.lineno else ""
        return f"SyntaxError: {exc.msg}{location}"
    lineno = None
    for frame in traceback.extract_tb(exc.__traceback__):
        if frame.filename == filename:
            lineno = frame.lineno
    message = f"{type(exc).__name__}: {exc}"
    if lineno is not None:
        lines = source.splitlines()
        text = lines[lineno - 1].strip() if 0 < lineno <= len(lines) else ""
        message += f" (line {lineno}: {text})"
    return message


class LocalSession:
    """In-process kernel: a persistent namespace plus a stage-tagged output log.

    Matches the wire kernel's observable behavior (error format, status
    rendering, digest) without a child process. Per-cell timeouts are not
    enforced here; use the subprocess kernel when untrusted code may loop.
    """

    def __init__(self) -> None:
        self._namespace: dict = {}
        self._output_log: list[tuple[str, str]] = []
        self._cell_counter = 0
        self._closed = False

    def _run(self, cell: CodeCell) -> ExecOutcome:
        self._cell_counter += 1
        filename = f"<cell:{cell.stage.value}:{self._cell_counter}>"
        source = cell.full_source
        stdout_buffer = io.StringIO()
        stderr_buffer = io.StringIO()
        try:
            compiled = compile(source, filename, "exec")
        except SyntaxError as exc:
            return ExecOutcome(ok=False, error=format_cell_error(exc, filename, source))
        try:
            with contextlib.redirect_stdout(stdout_buffer):
                with contextlib.redirect_stderr(stderr_buffer):
                    exec(compiled, self._namespace)
        except BaseException as exc:  # noqa: BLE001 - generated code may raise anything
            return ExecOutcome(
                ok=False,
                stdout=stdout_buffer.getvalue(),
                error=format_cell_error(exc, filename, source),
            )
        stdout = stdout_buffer.getvalue()
        self._output_log.append((cell.stage.value, stdout))
        return ExecOutcome(ok=True, stdout=stdout)

    def execute_cell(self, cell: CodeCell, timeout: float | None = None) -> ExecOutcome:
        if self._closed:
            raise ProtocolError("session is closed")
        return self._run(cell)

    def restart_and_replay(self, code_base: CodeBase) -> None:
        self._namespace = {}
        self._output_log = []
        self._cell_counter = 0
        for cell in code_base:
            outcome = self._run(cell)
            if not outcome.ok:
                raise InfrastructureError(
                    f"replay of accepted cell diverged ({cell.comment_header!r}): {outcome.error}"
                )

    def current_table_status(self) -> str:
        return self.status_snapshot()[0]

    def status_snapshot(self) -> tuple[str, str]:
        frame = self._namespace.get(FRAME_NAME)
        if not isinstance(frame, pd.DataFrame):
            raise TableStatusError(TABLE_MISSING_MESSAGE)
        return frame_status(frame, user_variable_names(self._namespace))

    def program_output(self, stage: StageId) -> str:
        text = "".join(chunk for tag, chunk in self._output_log if tag == stage.value)
        return text.rstrip("\n")

    def close(self) -> None:
        self._closed = True


class _Transport:
    """Line-oriented JSON over a child process's standard streams."""

    def __init__(self, config: KernelConfig) -> None:
        env = {
            "PATH": os.environ.get("PATH", ""),
            "LANG": "C.UTF-8",
            "PYTHONIOENCODING": "utf-8",
            "PYTHONHASHSEED": "0",
        }
        if "PYTHONPATH" in os.environ:
            env["PYTHONPATH"] = os.environ["PYTHONPATH"]
        env.update(config.extra_env)
        try:
            self.proc = subprocess.Popen(
                config.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                bufsize=0,
                env=env,
            )
        except FileNotFoundError as exc:
            raise InfrastructureError(
                f"kernel executable not found: {config.command[0]}"
            ) from exc
        self._buffer = b""

    def send(self, payload: dict) -> None:
        line = json.dumps(payload, ensure_ascii=True) + "\n"
        try:
            assert self.proc.stdin is not None
            self.proc.stdin.write(line.encode("utf-8"))
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError(f"kernel pipe closed while sending: {exc}") from exc

    def receive(self, timeout: float) -> dict:
        assert self.proc.stdout is not None
        fd = self.proc.stdout.fileno()
        deadline = time.monotonic() + timeout
        while b"\n" not in self._buffer:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise TimeoutError(TIMEOUT_MESSAGE)
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                continue
            chunk = os.read(fd, 65536)
            if not chunk:
                raise ProtocolError("kernel closed its output stream")
            self._buffer += chunk
        line, _, self._buffer = self._buffer.partition(b"\n")
        try:
            reply = json.loads(line.decode("utf-8"))
        except ValueError as exc:
            raise ProtocolError(f"kernel sent a non-JSON reply: {line[:120]!r}") from exc
        if not isinstance(reply, dict):
            raise ProtocolError("kernel reply is not a JSON object")
        return reply

    def kill(self) -> None:
        if self.proc.poll() is None:
            self.proc.kill()
        try:
            self.proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            pass


class SubprocessSession:
    """One kernel process; at most one in-flight request; replay on restart."""

    def __init__(self, config: KernelConfig) -> None:
        self._config = config
        self._transport: _Transport | None = None
        self._dead = True
        self._busy = False
        self._cell_counter = 0
        self._spawn()

    def _spawn(self) -> None:
        self._transport = _Transport(self._config)
        self._dead = False
        try:
            reply = self._request({"op": "hello"}, timeout=self._config.startup_timeout)
        except TimeoutError as exc:
            raise InfrastructureError(f"kernel handshake timed out: {exc}") from exc
        if not reply.get("ok") or reply.get("version") != PROTOCOL_VERSION:
            self._mark_dead()
            raise InfrastructureError(f"kernel handshake failed: {reply}")

    def _mark_dead(self) -> None:
        if self._transport is not None:
            self._transport.kill()
        self._dead = True

    def _request(self, payload: dict, timeout: float) -> dict:
        if self._busy:
            raise ProtocolError("a request is already in flight on this session")
        if self._dead or self._transport is None:
            raise ProtocolError("session requires restart_and_replay before use")
        self._busy = True
        try:
            self._transport.send(payload)
            return self._transport.receive(timeout)
        except (ProtocolError, TimeoutError):
            self._mark_dead()
            raise
        finally:
            self._busy = False

    def execute_cell(self, cell: CodeCell, timeout: float | None = None) -> ExecOutcome:
        self._cell_counter += 1
        cell_id = f"{cell.stage.value}:{self._cell_counter}"
        timeout = timeout if timeout is not None else self._config.cell_timeout
        try:
            reply = self._request(
                {"op": "exec", "cell_id": cell_id, "code": cell.full_source},
                timeout=timeout,
            )
        except TimeoutError:
            return ExecOutcome(ok=False, error=TIMEOUT_MESSAGE)
        except ProtocolError as exc:
            return ExecOutcome(ok=False, error=f"kernel transport failure: {exc}")
        if reply.get("ok"):
            return ExecOutcome(ok=True, stdout=reply.get("stdout", ""))
        return ExecOutcome(
            ok=False,
            stdout=reply.get("stdout", ""),
            error=str(reply.get("error") or "unspecified kernel error"),
        )

    def restart_and_replay(self, code_base: CodeBase) -> None:
        self._mark_dead()
        self._cell_counter = 0
        self._spawn()
        for cell in code_base:
            outcome = self.execute_cell(cell)
            if not outcome.ok:
                self._mark_dead()
                raise InfrastructureError(
                    f"replay of accepted cell diverged ({cell.comment_header!r}): {outcome.error}"
                )

    def current_table_status(self) -> str:
        return self.status_snapshot()[0]

    def status_snapshot(self) -> tuple[str, str]:
        try:
            reply = self._request({"op": "status"}, timeout=self._config.cell_timeout)
        except TimeoutError as exc:
            raise InfrastructureError(f"status request timed out: {exc}") from exc
        if not reply.get("ok"):
            error = str(reply.get("error") or "")
            if TABLE_MISSING_MESSAGE in error:
                raise TableStatusError(TABLE_MISSING_MESSAGE)
            raise InfrastructureError(f"status request failed: {error}")
        return str(reply["markdown"]), str(reply["digest"])

    def program_output(self, stage: StageId) -> str:
        try:
            reply = self._request(
                {"op": "output", "stage": stage.value}, timeout=self._config.cell_timeout
            )
        except TimeoutError as exc:
            raise InfrastructureError(f"output request timed out: {exc}") from exc
        if not reply.get("ok"):
            raise InfrastructureError(f"output request failed: {reply.get('error')}")
        return str(reply.get("text", "")).rstrip("\n")

    def close(self) -> None:
        if self._dead or self._transport is None:
            return
        try:
            self._request({"op": "shutdown"}, timeout=5.0)
        except (ProtocolError, TimeoutError):
            pass
        self._mark_dead()


def start_session(kernel_config: KernelConfig) -> SubprocessSession:
    """Spawn a kernel process and complete the version-1 handshake."""
    return SubprocessSession(kernel_config)
