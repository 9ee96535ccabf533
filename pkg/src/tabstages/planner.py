"""Stage planning: prompt assembly, the LLM call, and operation-chain parsing."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ConfigurationError, PlanParseError
from .llm import Backend, CallKind, ChatExchange, GenerationLog, GenerationParams, complete
from .stages import PromptLibrary, Scenario, StageId, resolve_templates
from .tables import TaskKind

SYSTEM_PREAMBLE = "You are an expert tabular data analyst."

_NUMBERED_LINE = re.compile(r"^\s*\d+[.)]\s+(\S.*)$")
_DASHED_LINE = re.compile(r"^\s*[-*]\s+(\S.*)$")
_EMPTY_SENTINEL = "none"


@dataclass(frozen=True)
class Operation:
    """One natural-language operation from a stage plan."""

    index: int
    text: str

    def __post_init__(self) -> None:
        if self.index < 1:
            raise ValueError("operation indices are 1-based")
        if not self.text.strip():
            raise ValueError("operation text must be non-empty")
        object.__setattr__(self, "text", self.text.strip())


@dataclass(frozen=True)
class OperationChain:
    stage: StageId
    operations: tuple[Operation, ...]

    def __post_init__(self) -> None:
        for position, op in enumerate(self.operations, start=1):
            if op.index != position:
                raise ValueError("operation indices must be contiguous from 1")

    def __len__(self) -> int:
        return len(self.operations)


@dataclass(frozen=True)
class PlanPrompt:
    """A fully assembled planning prompt for one stage."""

    stage: StageId
    table_markdown: str
    query: str | None
    instruction: str
    demos: tuple[str, ...]

    def render(self) -> ChatExchange:
        block = self.instruction
        parts = list(self.demos) + [block]
        return ChatExchange.make(user="\n\n".join(parts), system=SYSTEM_PREAMBLE)


def build_plan_prompt(
    library: PromptLibrary,
    stage: StageId,
    table_md: str,
    query: str,
    kind: TaskKind,
) -> PlanPrompt:
    """Assemble demos, the table block, and the stage planning instruction.

    ``table_md`` must be the kernel's current status snapshot, so prompts
    track the live table rather than the ingested one.
    """
    if not table_md.strip():
        raise ConfigurationError("plan prompt requires a non-empty table rendering")
    composed = resolve_templates(library, stage, Scenario.PLAN, kind)
    if composed.include_query:
        table_block = composed.table_template.format(table=table_md, query=query)
        included_query: str | None = query
    else:
        table_block = composed.table_template.format(table=table_md)
        included_query = None
    instruction = f"{table_block}\n\n{composed.instruction}"
    return PlanPrompt(
        stage=stage,
        table_markdown=table_md,
        query=included_query,
        instruction=instruction,
        demos=composed.demos,
    )


def parse_operation_list(response: str) -> tuple[Operation, ...]:
    """Parse numbered or dashed operation lines into a contiguous chain.

    A response whose only content is the literal ``None`` yields an empty
    chain. Exactly one leading non-list line is tolerated as preamble; any
    other unparseable line raises PlanParseError.
    """
    lines = [line for line in response.split("\n") if line.strip()]
    if len(lines) == 1 and lines[0].strip().rstrip(".").lower() == _EMPTY_SENTINEL:
        return ()

    operations: list[Operation] = []
    for position, line in enumerate(lines):
        matched = _NUMBERED_LINE.match(line) or _DASHED_LINE.match(line)
        if matched:
            operations.append(Operation(index=len(operations) + 1, text=matched.group(1)))
        elif position == 0:
            continue
        else:
            raise PlanParseError(f"unparseable plan line: {line.strip()!r}")
    if not operations:
        raise PlanParseError("response contains no operation lines and no None sentinel")
    return tuple(operations)


def render_operation_list(operations: tuple[Operation, ...]) -> str:
    """Render a chain back to the numbered-line grammar (None when empty)."""
    if not operations:
        return "None"
    return "\n".join(f"{op.index}. {op.text}" for op in operations)


def plan_stage(
    backend: Backend,
    library: PromptLibrary,
    stage: StageId,
    table_md: str,
    query: str,
    kind: TaskKind,
    log: GenerationLog,
    params: GenerationParams | None = None,
) -> tuple[OperationChain, PlanPrompt, str]:
    """Issue exactly one planning call and parse the resulting chain.

    Returns the chain together with the prompt and raw response so the
    engine can trace them.
    """
    prompt = build_plan_prompt(library, stage, table_md, query, kind)
    response = complete(
        backend,
        prompt.render(),
        CallKind.PLANNING,
        log,
        params=params,
        stage=stage.value,
    )
    chain = OperationChain(stage=stage, operations=parse_operation_list(response))
    return chain, prompt, response
