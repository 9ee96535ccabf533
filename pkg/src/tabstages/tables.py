"""Table and task data model, Markdown serialization, and grouping rules.

All cell values are stored as strings at ingestion; typing happens later
inside the execution kernel during the data-type-cleaning stage.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable

from .errors import IngestionError

ELISION_CELL = "..."


class TaskKind(str, Enum):
    QA = "qa"
    FACT_VERIFICATION = "fact"


class Difficulty(str, Enum):
    SIMPLE = "simple"
    COMPLEX = "complex"


class SizeGroup(str, Enum):
    SMALL = "small"
    MEDIUM = "medium"
    LARGE = "large"


@dataclass(frozen=True)
class Table:
    """A rectangular grid of string cells with ordered headers."""

    columns: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]
    source_id: str = ""

    def __post_init__(self) -> None:
        if not self.columns:
            raise ValueError("table must have at least one column")
        object.__setattr__(self, "columns", tuple(str(c) for c in self.columns))
        normalized = []
        for idx, row in enumerate(self.rows):
            if len(row) != len(self.columns):
                raise ValueError(
                    f"row {idx} has {len(row)} cells, expected {len(self.columns)}"
                )
            normalized.append(tuple(str(c) for c in row))
        object.__setattr__(self, "rows", tuple(normalized))

    @property
    def row_count(self) -> int:
        return len(self.rows)

    @property
    def column_count(self) -> int:
        return len(self.columns)


@dataclass(frozen=True)
class AnswerKey:
    """Gold answer: either QA denotations or a binary fact label, never both."""

    denotations: tuple[str, ...] | None = None
    label: int | None = None

    def __post_init__(self) -> None:
        if (self.denotations is None) == (self.label is None):
            raise ValueError("exactly one of denotations/label must be set")
        if self.denotations is not None:
            if not self.denotations:
                raise ValueError("denotations must be non-empty")
            object.__setattr__(
                self, "denotations", tuple(str(d) for d in self.denotations)
            )
        if self.label is not None and self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")

    @property
    def kind(self) -> TaskKind:
        return TaskKind.QA if self.denotations is not None else TaskKind.FACT_VERIFICATION


@dataclass(frozen=True)
class TaskSample:
    """One benchmark item: a table, a query, and its gold answer."""

    id: str
    table: Table
    query: str
    gold: AnswerKey
    kind: TaskKind
    split: str
    difficulty: Difficulty | None = None

    def __post_init__(self) -> None:
        if self.gold.kind is not self.kind:
            raise ValueError(
                f"sample {self.id}: gold answer variant does not match kind {self.kind}"
            )


def content_cell_count(table: Table) -> int:
    """Number of data cells (headers excluded)."""
    return table.row_count * table.column_count


def size_group(cell_count: int) -> SizeGroup:
    """Bucket a content-cell count: <50 small, 50-99 medium, >=100 large."""
    if cell_count < 0:
        raise ValueError("cell count must be non-negative")
    if cell_count < 50:
        return SizeGroup.SMALL
    if cell_count < 100:
        return SizeGroup.MEDIUM
    return SizeGroup.LARGE


def wikitq_difficulty(query: str) -> Difficulty:
    """Questions shorter than 50 characters are simple, the rest complex."""
    return Difficulty.SIMPLE if len(query) < 50 else Difficulty.COMPLEX


# everything str.splitlines() treats as a line boundary
_LINE_BREAKS = "\n\r\v\f\x1c\x1d\x1e\x85  "
_LINE_BREAK_TABLE = {ord(c): " " for c in _LINE_BREAKS}


def _escape_cell(text: str) -> str:
    text = text.replace("\\", "\\\\").replace("|", "\\|")
    return text.replace("\r\n", " ").translate(_LINE_BREAK_TABLE)


def _unescape_cell(text: str) -> str:
    out = []
    i = 0
    while i < len(text):
        if text[i] == "\\" and i + 1 < len(text):
            out.append(text[i + 1])
            i += 2
        else:
            out.append(text[i])
            i += 1
    return "".join(out)


def _render_row(cells: Iterable[str]) -> str:
    return "| " + " | ".join(_escape_cell(c) for c in cells) + " |"


def to_markdown(table: Table, max_rows: int | None = None) -> str:
    """Render a pipe-delimited Markdown grid.

    With ``max_rows`` set and exceeded, the first ``max_rows`` rows are kept,
    followed by a single elision row and a trailing note with the total row
    count. Pipes and backslashes in cells are escaped; newlines collapse to a
    single space so the grid always stays parseable.
    """
    lines = [_render_row(table.columns), _render_row(["---"] * table.column_count)]
    body = table.rows
    truncated = max_rows is not None and table.row_count > max_rows
    if truncated:
        body = table.rows[:max_rows]
    lines.extend(_render_row(row) for row in body)
    if truncated:
        lines.append(_render_row([ELISION_CELL] * table.column_count))
        lines.append(f"({table.row_count} rows total)")
    return "\n".join(lines)


def _split_grid_row(line: str) -> list[str]:
    segments: list[str] = []
    current: list[str] = []
    i = 0
    while i < len(line):
        ch = line[i]
        if ch == "\\" and i + 1 < len(line):
            current.append(ch)
            current.append(line[i + 1])
            i += 2
            continue
        if ch == "|":
            segments.append("".join(current))
            current = []
            i += 1
            continue
        current.append(ch)
        i += 1
    segments.append("".join(current))
    if len(segments) < 3 or segments[0] or segments[-1].strip():
        raise ValueError(f"not a pipe-delimited grid row: {line!r}")
    cells = []
    for segment in segments[1:-1]:
        if segment.startswith(" "):
            segment = segment[1:]
        if segment.endswith(" "):
            segment = segment[:-1]
        cells.append(_unescape_cell(segment))
    return cells


def parse_markdown(text: str) -> Table:
    """Parse a grid produced by :func:`to_markdown` (untruncated) back to a Table."""
    lines = [line for line in text.split("\n") if line.startswith("|")]
    if len(lines) < 2:
        raise ValueError("markdown grid needs a header and a separator row")
    columns = _split_grid_row(lines[0])
    separator = _split_grid_row(lines[1])
    if any(cell.strip("-") for cell in separator):
        raise ValueError("second grid row must be the --- separator")
    rows = [_split_grid_row(line) for line in lines[2:]]
    return Table(columns=tuple(columns), rows=tuple(tuple(r) for r in rows))


def _gold_to_json(gold: AnswerKey) -> dict:
    if gold.denotations is not None:
        return {"denotations": list(gold.denotations)}
    return {"label": gold.label}


def _gold_from_json(payload: dict) -> AnswerKey:
    if "denotations" in payload:
        return AnswerKey(denotations=tuple(payload["denotations"]))
    return AnswerKey(label=int(payload["label"]))


def sample_to_record(sample: TaskSample) -> dict:
    record = {
        "id": sample.id,
        "kind": sample.kind.value,
        "split": sample.split,
        "query": sample.query,
        "gold": _gold_to_json(sample.gold),
        "table": {
            "columns": list(sample.table.columns),
            "rows": [list(r) for r in sample.table.rows],
            "source_id": sample.table.source_id,
        },
    }
    if sample.difficulty is not None:
        record["difficulty"] = sample.difficulty.value
    return record


def sample_from_record(record: dict) -> TaskSample:
    table = record["table"]
    difficulty = record.get("difficulty")
    return TaskSample(
        id=record["id"],
        table=Table(
            columns=tuple(table["columns"]),
            rows=tuple(tuple(r) for r in table["rows"]),
            source_id=table.get("source_id", ""),
        ),
        query=record["query"],
        gold=_gold_from_json(record["gold"]),
        kind=TaskKind(record["kind"]),
        split=record["split"],
        difficulty=Difficulty(difficulty) if difficulty else None,
    )


def write_samples(path: str | Path, samples: Iterable[TaskSample]) -> int:
    """Write samples to the JSONL interchange file; returns the record count."""
    path = Path(path)
    count = 0
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for sample in samples:
            fh.write(json.dumps(sample_to_record(sample), ensure_ascii=False))
            fh.write("\n")
            count += 1
    return count


def read_samples(path: str | Path) -> list[TaskSample]:
    """Read samples from a JSONL interchange file."""
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"interchange file not found: {path}")
    samples = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                samples.append(sample_from_record(json.loads(line)))
            except (KeyError, ValueError) as exc:
                raise IngestionError(f"{path}:{lineno}: bad record: {exc}") from exc
    return samples
