"""Code-cell model, generation and regeneration prompts, and code extraction."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ConfigurationError, EmptyGenerationError
from .llm import ChatExchange
from .planner import SYSTEM_PREAMBLE, Operation
from .stages import PromptLibrary, Scenario, StageId, resolve_templates
from .tables import Table, TaskKind

FINAL_ANSWER_DIRECTIVE = (
    "print the final answer derived from the intermediate results"
)

_FENCED_BLOCK = re.compile(r"```[a-zA-Z0-9_+-]*[ \t]*\n(.*?)```", re.DOTALL)


@dataclass(frozen=True)
class CodeCell:
    """One generated (or fixed) code cell with its provenance comment."""

    stage: StageId
    source_text: str
    attempt: int = 1
    operation_index: int | None = None

    def __post_init__(self) -> None:
        if not self.source_text.strip():
            raise ValueError("a code cell cannot be empty")
        if self.attempt < 1:
            raise ValueError("attempt counts from 1")

    @property
    def comment_header(self) -> str:
        if self.operation_index is None:
            return f"# stage: {self.stage.value}"
        return f"# stage: {self.stage.value}, operation {self.operation_index}"

    @property
    def full_source(self) -> str:
        """Header comment plus code; what actually runs in the kernel."""
        return f"{self.comment_header}\n{self.source_text}"


CodeBase = tuple[CodeCell, ...]


def render_code_base(code_base: CodeBase) -> str:
    """The accepted program so far, cells in acceptance order."""
    return "\n".join(cell.full_source for cell in code_base)


def initial_code(table: Table) -> CodeCell:
    """The fixed dataframe initialization snippet; never involves the LLM.

    All cell values are emitted as string literals; typing is deferred to
    the data-type-cleaning stage.
    """
    data_literal = repr([list(row) for row in table.rows])
    columns_literal = repr(list(table.columns))
    source = (
        "import pandas as pd\n"
        f"df = pd.DataFrame(data={data_literal}, columns={columns_literal})"
    )
    return CodeCell(stage=StageId.INITIALIZATION, source_text=source, attempt=1)


def _table_block(composed, table_md: str, query: str) -> str:
    if composed.include_query:
        return composed.table_template.format(table=table_md, query=query)
    return composed.table_template.format(table=table_md)


def build_codegen_prompt(
    library: PromptLibrary,
    stage: StageId,
    operation: Operation,
    code_base: CodeBase,
    table_md: str,
    query: str,
    kind: TaskKind,
) -> ChatExchange:
    """Prompt for the first code attempt of one operation.

    Final answering uses its few-shot template with the three answer demos;
    other stages generate zero-shot.
    """
    scenario = (
        Scenario.FINAL_GENERATE if stage is StageId.FINAL_ANSWERING else Scenario.GENERATE
    )
    composed = resolve_templates(library, stage, scenario, kind)
    instruction = composed.instruction.format(
        code_base=render_code_base(code_base),
        operation=operation.text,
    )
    parts = list(composed.demos)
    parts.append(_table_block(composed, table_md, query))
    parts.append(instruction)
    return ChatExchange.make(user="\n\n".join(parts), system=SYSTEM_PREAMBLE)


def build_regen_prompt(
    library: PromptLibrary,
    stage: StageId,
    operation: Operation,
    code_base: CodeBase,
    failed_code: str,
    error_text: str,
    table_md: str,
    query: str,
    kind: TaskKind,
) -> ChatExchange:
    """Prompt for a retry: the codegen context plus the failed code and error."""
    if not error_text.strip():
        raise ConfigurationError("regeneration requires a non-empty error text")
    scenario = (
        Scenario.FINAL_REGENERATE
        if stage is StageId.FINAL_ANSWERING
        else Scenario.REGENERATE
    )
    composed = resolve_templates(library, stage, scenario, kind)
    instruction = composed.instruction.format(
        code_base=render_code_base(code_base),
        operation=operation.text,
        failed_code=failed_code,
        error=error_text,
    )
    parts = [_table_block(composed, table_md, query), instruction]
    return ChatExchange.make(user="\n\n".join(parts), system=SYSTEM_PREAMBLE)


def extract_code(response: str) -> str:
    """Pull source code out of an LLM response.

    Fenced blocks win and concatenate in order; a fenceless response is
    used whole. An empty result raises EmptyGenerationError, which the
    engine routes into the regeneration loop rather than aborting.
    """
    blocks = _FENCED_BLOCK.findall(response)
    if blocks:
        source = "\n".join(block.strip("\n") for block in blocks)
    else:
        source = response.strip()
    if not source.strip():
        raise EmptyGenerationError("empty generation")
    return source
