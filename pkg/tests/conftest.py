from __future__ import annotations

import pytest

from tabstages.stages import load_prompt_library
from tabstages.tables import AnswerKey, Table, TaskKind, TaskSample


@pytest.fixture(scope="session")
def library():
    return load_prompt_library()


@pytest.fixture
def medal_table() -> Table:
    return Table(
        columns=("Rank", "Team", "Gold", "Total"),
        rows=(
            ("1", "United States", "40", "126"),
            ("2", "China", "40", "91"),
            ("3", "Japan", "20", "45"),
        ),
        source_id="medals.csv",
    )


@pytest.fixture
def qa_sample(medal_table) -> TaskSample:
    return TaskSample(
        id="qa-1",
        table=medal_table,
        query="which team won the most total medals?",
        gold=AnswerKey(denotations=("United States",)),
        kind=TaskKind.QA,
        split="wikitq-dev1",
    )


@pytest.fixture
def fact_sample(medal_table) -> TaskSample:
    return TaskSample(
        id="fact-1",
        table=medal_table,
        query="china won 40 gold medals",
        gold=AnswerKey(label=1),
        kind=TaskKind.FACT_VERIFICATION,
        split="tabfact-small",
    )
