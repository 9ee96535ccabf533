"""Per-sample orchestration: plan each stage, generate and execute each
operation, roll back and regenerate on errors, and read the final answer
from program output.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .codegen import (
    FINAL_ANSWER_DIRECTIVE,
    CodeCell,
    build_codegen_prompt,
    build_regen_prompt,
    extract_code,
    initial_code,
)
from .errors import (
    AnswerParseError,
    EmptyGenerationError,
    EngineError,
    InfrastructureError,
    PlanParseError,
    TableStatusError,
)
from .kernel import KernelSession, RetryPolicy
from .llm import Backend, CallKind, GenerationLog, GenerationParams, complete
from .planner import Operation, OperationChain, build_plan_prompt, parse_operation_list
from .stages import PipelineVariant, PromptLibrary, StageId
from .tables import AnswerKey, TaskKind, TaskSample, parse_markdown, to_markdown

EMPTY_GENERATION_MESSAGE = "empty generation"

_TRUE_TOKENS = frozenset({"true", "yes", "1", "entailed"})
_FALSE_TOKENS = frozenset({"false", "no", "0", "refuted"})


class SampleStatus(str, Enum):
    RUNNING = "running"
    ANSWERED = "answered"
    RETRY_EXHAUSTED = "retry_exhausted"
    PLAN_PARSE = "plan_parse"
    ANSWER_PARSE = "answer_parse"
    INFRASTRUCTURE = "infrastructure"


class EventKind(str, Enum):
    STAGE_START = "stage_start"
    PLAN_PROMPT = "plan_prompt"
    PLAN_RESPONSE = "plan_response"
    GEN_PROMPT = "gen_prompt"
    GEN_RESPONSE = "gen_response"
    EXEC_OK = "exec_ok"
    EXEC_ERR = "exec_err"
    ROLLBACK = "rollback"
    REGEN_PROMPT = "regen_prompt"
    CELL_ACCEPTED = "cell_accepted"
    STATUS_REFRESH = "status_refresh"
    FINAL_OUTPUT = "final_output"


@dataclass
class TraceEvent:
    timestamp: float
    kind: EventKind
    payload: dict[str, str]


@dataclass
class AnswerRecord:
    raw_output: str
    predicted: AnswerKey
    counts: tuple[int, int, int]
    correct: bool | None = None


@dataclass
class SessionState:
    """Working set for one sample run: accepted code, live table, trace."""

    sample: TaskSample
    variant: PipelineVariant
    code_base: list[CodeCell] = field(default_factory=list)
    current_table_md: str = ""
    generation_log: GenerationLog = field(default_factory=GenerationLog)
    trace: list[TraceEvent] = field(default_factory=list)
    status: SampleStatus = SampleStatus.RUNNING


@dataclass
class SampleResult:
    sample_id: str
    status: SampleStatus
    counts: tuple[int, int, int]
    trace: list[TraceEvent]
    code_base: tuple[CodeCell, ...]
    answer: AnswerRecord | None = None
    failure: str | None = None
    final_table_markdown: str | None = None
    final_table_digest: str | None = None


def parse_predicted(raw_output: str, kind: TaskKind) -> AnswerKey:
    """Interpret program output as an answer for the task kind.

    QA output splits on newlines (preferred) or pipes; fact output must map
    to a binary label and is never guessed.
    """
    if not raw_output.strip():
        raise AnswerParseError("program output is empty")
    if kind is TaskKind.QA:
        if "\n" in raw_output:
            items = raw_output.splitlines()
        elif "|" in raw_output:
            items = raw_output.split("|")
        else:
            items = [raw_output]
        denotations = tuple(item.strip() for item in items if item.strip())
        if not denotations:
            raise AnswerParseError("program output has no answer items")
        return AnswerKey(denotations=denotations)
    token = raw_output.strip().strip("'\"").rstrip(".").lower()
    if token in _TRUE_TOKENS:
        return AnswerKey(label=1)
    if token in _FALSE_TOKENS:
        return AnswerKey(label=0)
    raise AnswerParseError(f"output is not a recognizable verdict: {raw_output!r}")


class _Aborted(Exception):
    """Internal control flow: the sample reached a terminal failure status."""

    def __init__(self, status: SampleStatus, detail: str) -> None:
        super().__init__(detail)
        self.status = status
        self.detail = detail


class _SampleRunner:
    def __init__(
        self,
        sample: TaskSample,
        variant: PipelineVariant,
        backend: Backend,
        library: PromptLibrary,
        session_factory: Callable[[], KernelSession],
        retry_policy: RetryPolicy,
        params: GenerationParams | None,
        max_ops_per_stage: int,
        markdown_max_rows: int | None,
        sample_budget_s: float,
    ) -> None:
        self.state = SessionState(sample=sample, variant=variant)
        self.backend = backend
        self.library = library
        self.session_factory = session_factory
        self.retry_policy = retry_policy
        self.params = params
        self.max_ops_per_stage = max_ops_per_stage
        self.markdown_max_rows = markdown_max_rows
        self.deadline = time.monotonic() + sample_budget_s
        self.session: KernelSession | None = None

    def emit(self, kind: EventKind, **payload: str) -> None:
        self.state.trace.append(TraceEvent(time.time(), kind, payload))

    def check_budget(self) -> None:
        if time.monotonic() > self.deadline:
            raise InfrastructureError("per-sample wall-clock budget exceeded")

    def complete(self, exchange, call_kind: CallKind, stage: StageId) -> str:
        return complete(
            self.backend,
            exchange,
            call_kind,
            self.state.generation_log,
            params=self.params,
            stage=stage.value,
        )

    def refresh_status(self) -> None:
        """Pull the live table rendering; optionally truncate it for prompts."""
        assert self.session is not None
        markdown = self.session.current_table_status()
        if self.markdown_max_rows is not None:
            markdown = to_markdown(parse_markdown(markdown), max_rows=self.markdown_max_rows)
        self.state.current_table_md = markdown

    def accept_cell(self, cell: CodeCell, stdout: str) -> None:
        self.emit(EventKind.STATUS_REFRESH, stage=cell.stage.value)
        self.state.code_base.append(cell)
        self.emit(
            EventKind.CELL_ACCEPTED,
            stage=cell.stage.value,
            header=cell.comment_header,
            stdout=stdout,
        )

    def run_initialization(self) -> None:
        self.emit(EventKind.STAGE_START, stage=StageId.INITIALIZATION.value)
        cell = initial_code(self.state.sample.table)
        assert self.session is not None
        outcome = self.session.execute_cell(cell)
        if not outcome.ok:
            raise InfrastructureError(f"initialization snippet failed: {outcome.error}")
        self.emit(EventKind.EXEC_OK, stage=cell.stage.value, stdout=outcome.stdout)
        try:
            self.refresh_status()
        except TableStatusError as exc:
            raise InfrastructureError(f"no table after initialization: {exc}") from exc
        self.accept_cell(cell, outcome.stdout)

    def plan(self, stage: StageId) -> OperationChain:
        sample = self.state.sample
        prompt = build_plan_prompt(
            self.library, stage, self.state.current_table_md, sample.query, sample.kind
        )
        exchange = prompt.render()
        self.emit(EventKind.PLAN_PROMPT, stage=stage.value, text=exchange.rendered())
        response = self.complete(exchange, CallKind.PLANNING, stage)
        payload = {"stage": stage.value, "text": response}
        try:
            operations = parse_operation_list(response)
        except PlanParseError as exc:
            self.emit(EventKind.PLAN_RESPONSE, **payload)
            raise _Aborted(SampleStatus.PLAN_PARSE, str(exc)) from exc
        if len(operations) > self.max_ops_per_stage:
            payload["truncated_to"] = str(self.max_ops_per_stage)
            operations = operations[: self.max_ops_per_stage]
        self.emit(EventKind.PLAN_RESPONSE, **payload)
        return OperationChain(stage=stage, operations=operations)

    def run_operation(self, stage: StageId, operation: Operation) -> None:
        """Generate, execute, and retry one operation per the error loop."""
        sample = self.state.sample
        final = stage is StageId.FINAL_ANSWERING
        code_base = tuple(self.state.code_base)
        prompt = build_codegen_prompt(
            self.library,
            stage,
            operation,
            code_base,
            self.state.current_table_md,
            sample.query,
            sample.kind,
        )
        self.emit(
            EventKind.GEN_PROMPT,
            stage=stage.value,
            operation=operation.text,
            text=prompt.rendered(),
        )
        response = self.complete(prompt, CallKind.CODE_GENERATION, stage)
        self.emit(EventKind.GEN_RESPONSE, stage=stage.value, text=response)

        error_count = 0
        attempt = 1
        assert self.session is not None
        while True:
            self.check_budget()
            failed_code = ""
            error_text = None
            stdout = ""
            try:
                source = extract_code(response)
            except EmptyGenerationError:
                error_text = EMPTY_GENERATION_MESSAGE
            else:
                cell = CodeCell(
                    stage=stage,
                    source_text=source,
                    attempt=attempt,
                    operation_index=None if final else operation.index,
                )
                outcome = self.session.execute_cell(cell)
                stdout = outcome.stdout
                if outcome.ok:
                    self.emit(EventKind.EXEC_OK, stage=stage.value, stdout=outcome.stdout)
                    try:
                        self.refresh_status()
                    except TableStatusError as exc:
                        error_text = str(exc)
                        failed_code = source
                    else:
                        self.accept_cell(cell, outcome.stdout)
                        return
                else:
                    error_text = outcome.error or "unspecified execution error"
                    failed_code = source

            self.emit(
                EventKind.EXEC_ERR, stage=stage.value, error=error_text, stdout=stdout
            )
            if error_count >= self.retry_policy.up_limit:
                raise _Aborted(
                    SampleStatus.RETRY_EXHAUSTED,
                    f"operation {operation.index} in {stage.value} failed "
                    f"{error_count + 1} times; last error: {error_text}",
                )
            self.emit(EventKind.ROLLBACK, stage=stage.value)
            self.session.restart_and_replay(code_base)
            regen_prompt = build_regen_prompt(
                self.library,
                stage,
                operation,
                code_base,
                failed_code,
                error_text,
                self.state.current_table_md,
                sample.query,
                sample.kind,
            )
            self.emit(
                EventKind.REGEN_PROMPT,
                stage=stage.value,
                operation=operation.text,
                text=regen_prompt.rendered(),
            )
            response = self.complete(regen_prompt, CallKind.RE_GENERATION, stage)
            self.emit(EventKind.GEN_RESPONSE, stage=stage.value, text=response)
            error_count += 1
            attempt += 1

    def run_final_answering(self) -> AnswerRecord:
        self.emit(EventKind.STAGE_START, stage=StageId.FINAL_ANSWERING.value)
        directive = Operation(index=1, text=FINAL_ANSWER_DIRECTIVE)
        self.run_operation(StageId.FINAL_ANSWERING, directive)
        assert self.session is not None
        raw_output = self.session.program_output(StageId.FINAL_ANSWERING)
        self.emit(EventKind.FINAL_OUTPUT, text=raw_output)
        try:
            predicted = parse_predicted(raw_output, self.state.sample.kind)
        except AnswerParseError as exc:
            raise _Aborted(SampleStatus.ANSWER_PARSE, str(exc)) from exc
        return AnswerRecord(
            raw_output=raw_output,
            predicted=predicted,
            counts=self.state.generation_log.snapshot(),
        )

    def final_snapshot(self) -> tuple[str | None, str | None]:
        if self.session is None:
            return None, None
        try:
            return self.session.status_snapshot()
        except Exception:  # noqa: BLE001 - snapshot is best-effort diagnostics
            return None, None

    def run(self) -> SampleResult:
        state = self.state
        answer: AnswerRecord | None = None
        failure: str | None = None
        try:
            self.session = self.session_factory()
            self.run_initialization()
            for stage in state.variant.stages[1:-1]:
                self.check_budget()
                self.emit(EventKind.STAGE_START, stage=stage.value)
                chain = self.plan(stage)
                for operation in chain.operations:
                    self.run_operation(stage, operation)
            answer = self.run_final_answering()
            state.status = SampleStatus.ANSWERED
        except _Aborted as aborted:
            state.status = aborted.status
            failure = aborted.detail
            if aborted.status is SampleStatus.RETRY_EXHAUSTED and self.session is not None:
                # Restore the session to the accepted journal so the final
                # state never includes effects of a rejected cell.
                try:
                    self.session.restart_and_replay(tuple(state.code_base))
                except EngineError:
                    pass
        except EngineError as exc:
            state.status = SampleStatus.INFRASTRUCTURE
            failure = str(exc)

        markdown, digest = (None, None)
        if state.status is not SampleStatus.INFRASTRUCTURE:
            markdown, digest = self.final_snapshot()
        if self.session is not None:
            self.session.close()
        return SampleResult(
            sample_id=state.sample.id,
            status=state.status,
            counts=state.generation_log.snapshot(),
            trace=state.trace,
            code_base=tuple(state.code_base),
            answer=answer,
            failure=failure,
            final_table_markdown=markdown,
            final_table_digest=digest,
        )


def run_sample(
    sample: TaskSample,
    variant: PipelineVariant,
    backend: Backend,
    library: PromptLibrary,
    session_factory: Callable[[], KernelSession],
    retry_policy: RetryPolicy | None = None,
    params: GenerationParams | None = None,
    max_ops_per_stage: int = 8,
    markdown_max_rows: int | None = None,
    sample_budget_s: float = 600.0,
) -> SampleResult:
    """Run one sample end-to-end through the variant's stage sequence."""
    runner = _SampleRunner(
        sample=sample,
        variant=variant,
        backend=backend,
        library=library,
        session_factory=session_factory,
        retry_policy=retry_policy or RetryPolicy(),
        params=params,
        max_ops_per_stage=max_ops_per_stage,
        markdown_max_rows=markdown_max_rows,
        sample_budget_s=sample_budget_s,
    )
    return runner.run()


def run_batch(
    samples: list[TaskSample],
    variant: PipelineVariant,
    backend: Backend,
    library: PromptLibrary,
    session_factory: Callable[[], KernelSession],
    concurrency: int = 1,
    **run_kwargs,
) -> list[SampleResult]:
    """Run samples over a bounded worker pool, one kernel session each.

    Output order equals input order and one sample's failure never affects
    another; unexpected exceptions become Infrastructure results.
    """
    if concurrency < 1:
        raise ValueError("concurrency must be at least 1")

    def one(sample: TaskSample) -> SampleResult:
        try:
            return run_sample(
                sample, variant, backend, library, session_factory, **run_kwargs
            )
        except Exception as exc:  # noqa: BLE001 - isolation barrier per sample
            return SampleResult(
                sample_id=sample.id,
                status=SampleStatus.INFRASTRUCTURE,
                counts=(0, 0, 0),
                trace=[],
                code_base=(),
                failure=f"unhandled: {exc}",
            )

    if concurrency == 1:
        return [one(sample) for sample in samples]
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        return list(pool.map(one, samples))
