"""Cell execution, status rendering, and stage-tagged output capture."""

from __future__ import annotations

import contextlib
import hashlib
import io
import json
import math
import traceback

import pandas as pd

FRAME_NAME = "df"
TABLE_MISSING = "table object missing"

# everything str.splitlines() treats as a line boundary
_LINE_BREAKS = "\n\r\v\f\x1c\x1d\x1e\x85  "
_LINE_BREAK_TABLE = {ord(c): " " for c in _LINE_BREAKS}


def _escape_cell(text: str) -> str:
    text = text.replace("\\", "\\\\").replace("|", "\\|")
    return text.replace("\r\n", " ").translate(_LINE_BREAK_TABLE)


def _grid_row(cells: list[str]) -> str:
    return "| " + " | ".join(_escape_cell(c) for c in cells) + " |"


def stringify(value: object) -> str:
    """Cell rendering rule: integral floats drop .0, missing values are empty."""
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


def format_error(exc: BaseException, filename: str, source: str) -> str:
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
        lines = source.split("\n")
        text = lines[lineno - 1].strip() if 0 < lineno <= len(lines) else ""
        message += f" (line {lineno}: {text})"
    return message


class KernelSession:
    """Persistent namespace plus a per-stage log of successful cells' stdout.

    There is no transactional execution: a failed cell leaves the namespace
    as the failure left it, and the client restores cleanliness through
    restart-and-replay.
    """

    def __init__(self) -> None:
        self.namespace: dict = {}
        self.outputs: list[tuple[str, str]] = []
        self._exec_counter = 0

    def execute(self, code: str, cell_id: str) -> dict:
        self._exec_counter += 1
        filename = f"<cell:{cell_id or self._exec_counter}>"
        stdout_buffer = io.StringIO()
        stderr_buffer = io.StringIO()
        try:
            compiled = compile(code, filename, "exec")
        except SyntaxError as exc:
            return {"ok": False, "stdout": "", "error": format_error(exc, filename, code)}
        try:
            with contextlib.redirect_stdout(stdout_buffer):
                with contextlib.redirect_stderr(stderr_buffer):
                    exec(compiled, self.namespace)
        except BaseException as exc:  # noqa: BLE001 - user code may raise anything
            return {
                "ok": False,
                "stdout": stdout_buffer.getvalue(),
                "error": format_error(exc, filename, code),
            }
        stdout = stdout_buffer.getvalue()
        stage = str(cell_id).split(":", 1)[0]
        self.outputs.append((stage, stdout))
        reply = {"ok": True, "stdout": stdout}
        diagnostics = stderr_buffer.getvalue()
        if diagnostics:
            reply["diagnostics"] = diagnostics
        return reply

    def status(self) -> dict:
        frame = self.namespace.get(FRAME_NAME)
        if not isinstance(frame, pd.DataFrame):
            return {"ok": False, "error": TABLE_MISSING}
        columns = [str(c) for c in frame.columns]
        cells = [
            [stringify(v) for v in row] for row in frame.itertuples(index=False)
        ]
        lines = [_grid_row(columns), _grid_row(["---"] * len(columns))]
        lines.extend(_grid_row(row) for row in cells)
        variables = sorted(k for k in self.namespace if not k.startswith("_"))
        payload = json.dumps(
            {
                "columns": columns,
                "shape": [len(cells), len(columns)],
                "cells": cells,
                "variables": variables,
            },
            ensure_ascii=True,
            separators=(",", ":"),
        )
        return {
            "ok": True,
            "markdown": "\n".join(lines),
            "digest": hashlib.sha256(payload.encode("utf-8")).hexdigest(),
        }

    def output(self, stage: str) -> dict:
        text = "".join(chunk for tag, chunk in self.outputs if tag == stage)
        return {"ok": True, "text": text.rstrip("\n")}
