from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from tabstages.errors import ConfigurationError, PlanParseError
from tabstages.llm import GenerationLog, ScriptedBackend
from tabstages.planner import (
    Operation,
    build_plan_prompt,
    parse_operation_list,
    plan_stage,
    render_operation_list,
)
from tabstages.stages import StageId
from tabstages.tables import TaskKind


def test_parse_numbered_lines():
    ops = parse_operation_list("1. Remove the summary row\n2. Keep rows for 2008")
    assert [op.text for op in ops] == ["Remove the summary row", "Keep rows for 2008"]
    assert [op.index for op in ops] == [1, 2]


def test_parse_dashed_lines():
    ops = parse_operation_list("- first thing\n- second thing")
    assert [op.text for op in ops] == ["first thing", "second thing"]


def test_parse_none_sentinel():
    assert parse_operation_list("None") == ()
    assert parse_operation_list("  none\n") == ()
    assert parse_operation_list("None.") == ()


def test_parse_rejects_prose_without_list():
    with pytest.raises(PlanParseError):
        parse_operation_list("I think we should filter the table somehow.")


def test_parse_tolerates_one_leading_preamble_line():
    ops = parse_operation_list("Here is the plan:\n1. do the thing")
    assert [op.text for op in ops] == ["do the thing"]


def test_parse_rejects_unparseable_line_after_items():
    with pytest.raises(PlanParseError, match="stray"):
        parse_operation_list("1. ok line\nstray commentary")


def test_parse_rejects_two_preamble_lines():
    with pytest.raises(PlanParseError):
        parse_operation_list("First thoughts:\nMore thoughts:\n1. fine")


def test_parse_renumbers_contiguously():
    ops = parse_operation_list("3. alpha\n7. beta")
    assert [op.index for op in ops] == [1, 2]


def test_parse_ignores_blank_lines():
    ops = parse_operation_list("\n1. one\n\n2. two\n\n")
    assert len(ops) == 2


def test_empty_response_is_a_parse_error():
    with pytest.raises(PlanParseError):
        parse_operation_list("")


_op_text = (
    st.text(
        alphabet=st.characters(blacklist_categories=("Cs",), blacklist_characters="\n\r"),
        min_size=1,
        max_size=30,
    )
    .map(str.strip)
    .filter(bool)
)


@given(st.lists(_op_text, min_size=0, max_size=6))
def test_render_parse_round_trip(texts):
    ops = tuple(Operation(index=i, text=t) for i, t in enumerate(texts, start=1))
    reparsed = parse_operation_list(render_operation_list(ops))
    assert [o.text for o in reparsed] == [o.text for o in ops]
    assert [o.index for o in reparsed] == [o.index for o in ops]


def test_operation_validation():
    with pytest.raises(ValueError):
        Operation(index=0, text="x")
    with pytest.raises(ValueError):
        Operation(index=1, text="  ")


def test_build_plan_prompt_reasoning_includes_question(library):
    prompt = build_plan_prompt(
        library, StageId.REASONING, "| a |\n| --- |\n| 1 |", "what is a?", TaskKind.QA
    )
    rendered = prompt.render().rendered()
    assert "what is a?" in rendered
    assert "Current stage: reasoning" in rendered
    assert prompt.query == "what is a?"
    # demos come first, then the table block with instruction
    first_demo = prompt.demos[0]
    assert rendered.index(first_demo) < rendered.index("what is a?")


def test_build_plan_prompt_row_selection_omits_question(library):
    prompt = build_plan_prompt(
        library, StageId.ROW_SELECTION, "| a |\n| --- |\n| 1 |", "what is a?", TaskKind.QA
    )
    assert prompt.query is None
    assert "what is a?" not in prompt.render().rendered()


def test_build_plan_prompt_rejects_unplanned_stage(library):
    with pytest.raises(ConfigurationError):
        build_plan_prompt(library, StageId.FINAL_ANSWERING, "| a |", "q", TaskKind.QA)


def test_build_plan_prompt_rejects_empty_table(library):
    with pytest.raises(ConfigurationError):
        build_plan_prompt(library, StageId.REASONING, "   ", "q", TaskKind.QA)


def test_plan_stage_issues_exactly_one_call(library):
    backend = ScriptedBackend(queue=["1. one\n2. two\n3. three"])
    log = GenerationLog()
    chain, _, response = plan_stage(
        backend, library, StageId.REASONING, "| a |\n| --- |\n| 1 |", "q?",
        TaskKind.QA, log,
    )
    assert len(chain) == 3
    assert chain.stage is StageId.REASONING
    assert log.snapshot() == (1, 0, 0)
    assert response.startswith("1.")


def test_plan_stage_empty_sentinel(library):
    backend = ScriptedBackend(queue=["None"])
    log = GenerationLog()
    chain, _, _ = plan_stage(
        backend, library, StageId.ROW_SELECTION, "| a |\n| --- |\n| 1 |", "q?",
        TaskKind.QA, log,
    )
    assert len(chain) == 0
    assert log.snapshot() == (1, 0, 0)
