"""Ingestion of the WikiTQ and TabFact native directory layouts.

WikiTQ roots are expected to contain the published question TSVs under
``data/`` and the referenced table files under ``csv/``. TabFact roots are
expected to contain ``data/all_csv/`` ('#'-delimited tables), the official
split id lists under ``data/``, and ``tokenized_data/total_examples.json``.
"""

from __future__ import annotations

import csv
import json
from enum import Enum
from pathlib import Path

from .errors import IngestionError
from .tables import AnswerKey, Difficulty, Table, TaskKind, TaskSample


class WikitqSplit(str, Enum):
    DEV_SPLIT_1 = "dev1"
    TEST = "test"


class TabfactSplit(str, Enum):
    SMALL_TEST = "small"
    COMPLEX_TEST = "complex"


_WIKITQ_QUESTION_FILES = {
    WikitqSplit.DEV_SPLIT_1: Path("data") / "random-split-1-dev.tsv",
    WikitqSplit.TEST: Path("data") / "pristine-unseen-tables.tsv",
}

_TABFACT_ID_FILES = {
    TabfactSplit.SMALL_TEST: Path("data") / "small_test_id.json",
    TabfactSplit.COMPLEX_TEST: Path("data") / "complex_test_id.json",
}


def _read_table_csv(path: Path, delimiter: str = ",") -> Table:
    if not path.is_file():
        raise IngestionError(f"table file not found: {path}")
    quoting = csv.QUOTE_NONE if delimiter == "#" else csv.QUOTE_MINIMAL
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter, quoting=quoting)
        grid = [row for row in reader if row]
    if not grid:
        raise IngestionError(f"{path}: table file is empty")
    columns = tuple(cell.strip() for cell in grid[0])
    rows = []
    for lineno, row in enumerate(grid[1:], start=2):
        if len(row) != len(columns):
            raise IngestionError(
                f"{path}:{lineno}: row has {len(row)} cells, expected {len(columns)}"
            )
        rows.append(tuple(cell.strip() for cell in row))
    return Table(columns=columns, rows=tuple(rows), source_id=path.name)


def load_wikitq(data_root: str | Path, split: WikitqSplit) -> list[TaskSample]:
    """Load one WikiTQ evaluation split from the published layout.

    Each row of the question TSV yields one QA sample; the gold denotation
    list is the ``targetValue`` field split on ``|``. Difficulty is left
    unset here and derived from the question length at report time.
    """
    data_root = Path(data_root)
    questions_path = data_root / _WIKITQ_QUESTION_FILES[WikitqSplit(split)]
    if not questions_path.is_file():
        raise IngestionError(f"questions file not found: {questions_path}")

    samples: list[TaskSample] = []
    tables: dict[str, Table] = {}
    split_name = f"wikitq-{WikitqSplit(split).value}"
    with questions_path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE)
        header = next(reader, None)
        if header is None:
            return []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise IngestionError(
                    f"{questions_path}:{lineno}: expected 4 tab-separated fields, got {len(row)}"
                )
            sample_id, utterance, context, target = row
            if context not in tables:
                tables[context] = _read_table_csv(data_root / context)
            denotations = tuple(v.strip() for v in target.split("|"))
            if not any(denotations):
                raise IngestionError(
                    f"{questions_path}:{lineno}: empty target value for {sample_id}"
                )
            samples.append(
                TaskSample(
                    id=sample_id,
                    table=tables[context],
                    query=utterance,
                    gold=AnswerKey(denotations=denotations),
                    kind=TaskKind.QA,
                    split=split_name,
                )
            )
    return samples


def _load_json(path: Path):
    if not path.is_file():
        raise IngestionError(f"file not found: {path}")
    with path.open("r", encoding="utf-8") as fh:
        return json.load(fh)


def load_tabfact(data_root: str | Path, split: TabfactSplit) -> list[TaskSample]:
    """Load one TabFact test split from the published layout.

    One sample per (table, statement) pair; the official per-table channel
    (simple vs complex id lists) supplies the difficulty label.
    """
    data_root = Path(data_root)
    table_ids = _load_json(data_root / _TABFACT_ID_FILES[TabfactSplit(split)])
    examples = _load_json(data_root / "tokenized_data" / "total_examples.json")
    simple_ids = set(_load_json(data_root / "data" / "simple_test_id.json"))

    samples: list[TaskSample] = []
    split_name = f"tabfact-{TabfactSplit(split).value}"
    for table_id in table_ids:
        if table_id not in examples:
            raise IngestionError(f"statements reference missing table id: {table_id}")
        statements, labels = examples[table_id][0], examples[table_id][1]
        table = _read_table_csv(data_root / "data" / "all_csv" / table_id, delimiter="#")
        difficulty = Difficulty.SIMPLE if table_id in simple_ids else Difficulty.COMPLEX
        for index, (statement, label) in enumerate(zip(statements, labels)):
            samples.append(
                TaskSample(
                    id=f"{table_id}-{index}",
                    table=table,
                    query=statement,
                    gold=AnswerKey(label=int(label)),
                    kind=TaskKind.FACT_VERIFICATION,
                    split=split_name,
                    difficulty=difficulty,
                )
            )
    return samples
