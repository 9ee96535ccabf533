"""Scripted-run fixtures plus an independent hand-walk of the control flow.

The expected event sequences, counts, and accepted-code lists are derived
here purely from each fixture's declared attempt outcomes, never from the
engine, so trace comparisons check the engine against a second opinion.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from tabstages.codegen import initial_code
from tabstages.engine import EventKind, SampleResult, SampleStatus, run_sample
from tabstages.kernel import LocalSession, RetryPolicy
from tabstages.llm import ScriptedBackend
from tabstages.stages import PipelineVariant, StageId
from tabstages.tables import AnswerKey, Table, TaskKind, TaskSample


class Attempt(Enum):
    OK = "ok"
    FAIL = "fail"
    EMPTY = "empty"
    TABLE_LOST = "table_lost"


@dataclass
class OpScript:
    attempts: list[tuple[str, Attempt]]

    @property
    def accepted_code(self) -> str | None:
        for code, flag in self.attempts:
            if flag is Attempt.OK:
                return code
        return None


@dataclass
class StageScript:
    plan_response: str
    ops: list[OpScript] = field(default_factory=list)
    plan_parses: bool = True


@dataclass
class Fixture:
    name: str
    variant: PipelineVariant
    middle: dict[StageId, StageScript]
    final: OpScript | None
    sample: TaskSample
    up_limit: int = 3
    expected_status: SampleStatus = SampleStatus.ANSWERED
    expected_output: str | None = None


def default_sample(kind: TaskKind = TaskKind.QA, sample_id: str = "fx") -> TaskSample:
    table = Table(columns=("name", "value"), rows=(("alpha", "1"), ("beta", "2")))
    gold = (
        AnswerKey(denotations=("alpha",))
        if kind is TaskKind.QA
        else AnswerKey(label=1)
    )
    return TaskSample(
        id=sample_id, table=table, query="which name has value 1?", gold=gold,
        kind=kind, split="fixture",
    )


def fenced(code: str) -> str:
    return f"```python\n{code}\n```"


def plan_text(op_texts: list[str]) -> str:
    if not op_texts:
        return "None"
    return "\n".join(f"{i}. {text}" for i, text in enumerate(op_texts, start=1))


def build_queue(fixture: Fixture) -> list[str]:
    """The scripted backend responses, in exact engine consumption order."""
    queue: list[str] = []
    for stage in fixture.variant.stages[1:-1]:
        script = fixture.middle[stage]
        queue.append(script.plan_response)
        if not script.plan_parses:
            return queue
        for op in script.ops:
            for code, flag in op.attempts:
                queue.append("" if flag is Attempt.EMPTY else fenced(code))
            if _op_terminal(op, fixture.up_limit):
                return queue
    if fixture.final is not None:
        for code, flag in fixture.final.attempts:
            queue.append("" if flag is Attempt.EMPTY else fenced(code))
    return queue


def _op_terminal(op: OpScript, up_limit: int) -> bool:
    failures = 0
    for _, flag in op.attempts:
        if flag is Attempt.OK:
            return False
        failures += 1
        if failures > up_limit:
            return True
    raise AssertionError("op script neither succeeds nor exhausts retries")


def _walk_op(op: OpScript, up_limit: int, events: list[EventKind]) -> bool:
    """Append this operation's events; True when it exhausts retries."""
    events += [EventKind.GEN_PROMPT, EventKind.GEN_RESPONSE]
    error_count = 0
    for _, flag in op.attempts:
        if flag is Attempt.OK:
            events += [
                EventKind.EXEC_OK,
                EventKind.STATUS_REFRESH,
                EventKind.CELL_ACCEPTED,
            ]
            return False
        if flag is Attempt.TABLE_LOST:
            events.append(EventKind.EXEC_OK)
        events.append(EventKind.EXEC_ERR)
        if error_count >= up_limit:
            return True
        events += [EventKind.ROLLBACK, EventKind.REGEN_PROMPT, EventKind.GEN_RESPONSE]
        error_count += 1
    raise AssertionError("op script ran out of attempts before resolving")


def expected_events(fixture: Fixture) -> list[EventKind]:
    events: list[EventKind] = [
        EventKind.STAGE_START,
        EventKind.EXEC_OK,
        EventKind.STATUS_REFRESH,
        EventKind.CELL_ACCEPTED,
    ]
    for stage in fixture.variant.stages[1:-1]:
        script = fixture.middle[stage]
        events += [EventKind.STAGE_START, EventKind.PLAN_PROMPT, EventKind.PLAN_RESPONSE]
        if not script.plan_parses:
            return events
        for op in script.ops:
            if _walk_op(op, fixture.up_limit, events):
                return events
    if fixture.final is None:
        return events
    events.append(EventKind.STAGE_START)
    if _walk_op(fixture.final, fixture.up_limit, events):
        return events
    events.append(EventKind.FINAL_OUTPUT)
    return events


def expected_counts(fixture: Fixture) -> tuple[int, int, int]:
    events = expected_events(fixture)
    return (
        events.count(EventKind.PLAN_PROMPT),
        events.count(EventKind.GEN_PROMPT),
        events.count(EventKind.REGEN_PROMPT),
    )


def expected_code_sources(fixture: Fixture) -> list[str]:
    """Accepted cell sources in order, starting with the init snippet."""
    sources = [initial_code(fixture.sample.table).source_text]
    for stage in fixture.variant.stages[1:-1]:
        script = fixture.middle[stage]
        if not script.plan_parses:
            return sources
        for op in script.ops:
            code = op.accepted_code
            if code is None:
                return sources
            sources.append(code)
    if fixture.final is not None and fixture.final.accepted_code is not None:
        sources.append(fixture.final.accepted_code)
    return sources


def run_fixture(fixture: Fixture, library) -> tuple[SampleResult, ScriptedBackend]:
    backend = ScriptedBackend(queue=build_queue(fixture))
    result = run_sample(
        fixture.sample,
        fixture.variant,
        backend,
        library,
        LocalSession,
        retry_policy=RetryPolicy(up_limit=fixture.up_limit),
    )
    return result, backend
