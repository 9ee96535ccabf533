"""Analytical stage declarations, pipeline variants, and prompt composition.

The prompt texts themselves are content assets loaded from a prompt
directory (one file per slot); the composition map below is code and is
what the planner and code generator consume.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .errors import ConfigurationError
from .tables import TaskKind


class StageId(str, Enum):
    INITIALIZATION = "initialization"
    ROW_SELECTION = "row_selection"
    DATA_TYPE_CLEANING = "data_type_cleaning"
    REASONING = "reasoning"
    FINAL_ANSWERING = "final_answering"
    COLUMN_SELECTION = "column_selection"


class PlanningMode(str, Enum):
    PLANNED_FEW_SHOT = "planned_few_shot"
    NO_PLANNING = "no_planning"


class CodegenMode(str, Enum):
    ZERO_SHOT = "zero_shot"
    FEW_SHOT = "few_shot"
    NONE = "none"


class Scenario(str, Enum):
    PLAN = "plan"
    GENERATE = "generate"
    REGENERATE = "regenerate"
    FINAL_GENERATE = "final_generate"
    FINAL_REGENERATE = "final_regenerate"


@dataclass(frozen=True)
class StageSpec:
    id: StageId
    objective_text: str
    instruction_text: str
    note_text: str
    planning_mode: PlanningMode
    codegen_mode: CodegenMode
    include_query: bool


STAGE_SPECS: dict[StageId, StageSpec] = {
    StageId.INITIALIZATION: StageSpec(
        id=StageId.INITIALIZATION,
        objective_text="Store the tabular data in a dataframe.",
        instruction_text="Run the fixed two-line initialization snippet.",
        note_text="No planning and no generated code; the snippet is pre-defined.",
        planning_mode=PlanningMode.NO_PLANNING,
        codegen_mode=CodegenMode.NONE,
        include_query=True,
    ),
    StageId.ROW_SELECTION: StageSpec(
        id=StageId.ROW_SELECTION,
        objective_text="Remove redundant rows such as summary or total rows.",
        instruction_text="Plan row-level filtering before any analysis.",
        note_text="The task query is withheld so selection stays content-driven.",
        planning_mode=PlanningMode.PLANNED_FEW_SHOT,
        codegen_mode=CodegenMode.ZERO_SHOT,
        include_query=False,
    ),
    StageId.DATA_TYPE_CLEANING: StageSpec(
        id=StageId.DATA_TYPE_CLEANING,
        objective_text="Convert string columns that the task needs into suitable types.",
        instruction_text="Plan per-column type conversions and noise removal.",
        note_text="All columns start as strings after initialization.",
        planning_mode=PlanningMode.PLANNED_FEW_SHOT,
        codegen_mode=CodegenMode.ZERO_SHOT,
        include_query=True,
    ),
    StageId.REASONING: StageSpec(
        id=StageId.REASONING,
        objective_text="Perform the analytical operations that approach the answer.",
        instruction_text="Plan sorting, arithmetic, and other affiliated operations.",
        note_text="Intermediate results may be stored in new variables.",
        planning_mode=PlanningMode.PLANNED_FEW_SHOT,
        codegen_mode=CodegenMode.ZERO_SHOT,
        include_query=True,
    ),
    StageId.FINAL_ANSWERING: StageSpec(
        id=StageId.FINAL_ANSWERING,
        objective_text="Conclude from intermediate results and print the final answer.",
        instruction_text="Generate answer-printing code directly, guided by examples.",
        note_text="No planning; few-shot code generation only.",
        planning_mode=PlanningMode.NO_PLANNING,
        codegen_mode=CodegenMode.FEW_SHOT,
        include_query=True,
    ),
    StageId.COLUMN_SELECTION: StageSpec(
        id=StageId.COLUMN_SELECTION,
        objective_text="Keep only the columns related to the task.",
        instruction_text="Plan column-level selection before further processing.",
        note_text="Used only by the pipeline variant that adds this stage.",
        planning_mode=PlanningMode.PLANNED_FEW_SHOT,
        codegen_mode=CodegenMode.ZERO_SHOT,
        include_query=True,
    ),
}


class VariantName(str, Enum):
    ORIGINAL = "original"
    ONLY_REASON = "only_reason"
    NO_ROW_SEL = "no_row_sel"
    NO_DTY_CLE = "no_dty_cle"
    WITH_COL_SEL = "with_col_sel"


@dataclass(frozen=True)
class PipelineVariant:
    name: str
    stages: tuple[StageId, ...]
    experimental: bool = False

    def __post_init__(self) -> None:
        if not self.stages:
            raise ValueError("a variant needs at least one stage")
        if self.stages[0] is not StageId.INITIALIZATION:
            raise ValueError("every variant must begin with initialization")
        if self.stages[-1] is not StageId.FINAL_ANSWERING:
            raise ValueError("every variant must end with final answering")
        if len(set(self.stages)) != len(self.stages):
            raise ValueError("a stage may appear at most once")

    @property
    def planned_stages(self) -> tuple[StageId, ...]:
        return tuple(
            s
            for s in self.stages
            if STAGE_SPECS[s].planning_mode is PlanningMode.PLANNED_FEW_SHOT
        )


VARIANTS: dict[VariantName, PipelineVariant] = {
    VariantName.ORIGINAL: PipelineVariant(
        name=VariantName.ORIGINAL.value,
        stages=(
            StageId.INITIALIZATION,
            StageId.ROW_SELECTION,
            StageId.DATA_TYPE_CLEANING,
            StageId.REASONING,
            StageId.FINAL_ANSWERING,
        ),
    ),
    VariantName.ONLY_REASON: PipelineVariant(
        name=VariantName.ONLY_REASON.value,
        stages=(StageId.INITIALIZATION, StageId.REASONING, StageId.FINAL_ANSWERING),
    ),
    VariantName.NO_ROW_SEL: PipelineVariant(
        name=VariantName.NO_ROW_SEL.value,
        stages=(
            StageId.INITIALIZATION,
            StageId.DATA_TYPE_CLEANING,
            StageId.REASONING,
            StageId.FINAL_ANSWERING,
        ),
    ),
    VariantName.NO_DTY_CLE: PipelineVariant(
        name=VariantName.NO_DTY_CLE.value,
        stages=(
            StageId.INITIALIZATION,
            StageId.ROW_SELECTION,
            StageId.REASONING,
            StageId.FINAL_ANSWERING,
        ),
    ),
    VariantName.WITH_COL_SEL: PipelineVariant(
        name=VariantName.WITH_COL_SEL.value,
        stages=(
            StageId.INITIALIZATION,
            StageId.COLUMN_SELECTION,
            StageId.ROW_SELECTION,
            StageId.DATA_TYPE_CLEANING,
            StageId.REASONING,
            StageId.FINAL_ANSWERING,
        ),
    ),
}


def get_variant(name: str) -> PipelineVariant:
    try:
        return VARIANTS[VariantName(name)]
    except ValueError:
        raise ConfigurationError(f"unknown pipeline variant: {name!r}") from None


def stage_sequence(variant: PipelineVariant) -> tuple[StageId, ...]:
    """The fixed stage order of a variant."""
    return variant.stages


_PLANNED = tuple(
    s for s, spec in STAGE_SPECS.items() if spec.planning_mode is PlanningMode.PLANNED_FEW_SHOT
)

_STAGE_SLOTS: dict[StageId, tuple[str, ...]] = {
    StageId.ROW_SELECTION: ("plan", "generate"),
    StageId.COLUMN_SELECTION: ("plan", "generate"),
    StageId.DATA_TYPE_CLEANING: ("plan", "generate"),
    StageId.REASONING: ("plan", "generate"),
    StageId.FINAL_ANSWERING: ("generate", "regenerate"),
}

_KIND_DIRS = {TaskKind.QA: "qa", TaskKind.FACT_VERIFICATION: "fact"}


@dataclass(frozen=True)
class KindTemplates:
    table_with_query: str
    table_without_query: str
    regenerate: str
    stage_slots: dict[StageId, dict[str, str]]
    planning_demos: tuple[str, ...]
    final_demos: tuple[str, ...]


@dataclass(frozen=True)
class PromptLibrary:
    """All template texts plus few-shot demos, per task kind."""

    kinds: dict[TaskKind, KindTemplates]
    root: Path

    def for_kind(self, kind: TaskKind) -> KindTemplates:
        return self.kinds[kind]


@dataclass(frozen=True)
class ComposedTemplate:
    """One resolved (stage, scenario, kind) prompt combination."""

    table_template: str
    instruction: str
    demos: tuple[str, ...]
    include_query: bool


def default_prompt_root() -> Path:
    return Path(__file__).parent / "prompts"


def _read_slot(path: Path) -> str:
    if not path.is_file():
        raise ConfigurationError(f"missing prompt template: {path}")
    return path.read_text(encoding="utf-8").strip("\n")


def _read_demos(directory: Path) -> tuple[str, ...]:
    if not directory.is_dir():
        raise ConfigurationError(f"missing demo directory: {directory}")
    files = sorted(directory.glob("*.txt"))
    if len(files) != 3:
        raise ConfigurationError(
            f"{directory}: expected exactly 3 demo files, found {len(files)}"
        )
    return tuple(f.read_text(encoding="utf-8").strip("\n") for f in files)


def load_prompt_library(root: str | Path | None = None) -> PromptLibrary:
    """Load every template slot from a prompt directory and validate totality."""
    root = Path(root) if root is not None else default_prompt_root()
    kinds = {}
    for kind, directory in _KIND_DIRS.items():
        base = root / directory
        stage_slots: dict[StageId, dict[str, str]] = {}
        for stage, slots in _STAGE_SLOTS.items():
            stage_slots[stage] = {
                slot: _read_slot(base / stage.value / f"{slot}.txt") for slot in slots
            }
        kinds[kind] = KindTemplates(
            table_with_query=_read_slot(base / "table_with_query.txt"),
            table_without_query=_read_slot(base / "table_without_query.txt"),
            regenerate=_read_slot(base / "regenerate.txt"),
            stage_slots=stage_slots,
            planning_demos=_read_demos(base / "demos" / "planning"),
            final_demos=_read_demos(base / "demos" / "final_answer"),
        )
    return PromptLibrary(kinds=kinds, root=root)


def resolve_templates(
    library: PromptLibrary,
    stage: StageId,
    scenario: Scenario,
    kind: TaskKind,
) -> ComposedTemplate:
    """Return the template combination for one (stage, scenario, kind).

    Raises ConfigurationError for combinations no stage mode allows, e.g.
    planning the final-answering stage.
    """
    templates = library.for_kind(kind)
    spec = STAGE_SPECS[stage]
    table_template = (
        templates.table_with_query if spec.include_query else templates.table_without_query
    )

    if scenario is Scenario.PLAN:
        if spec.planning_mode is not PlanningMode.PLANNED_FEW_SHOT:
            raise ConfigurationError(f"stage {stage.value} is not planned")
        return ComposedTemplate(
            table_template=table_template,
            instruction=templates.stage_slots[stage]["plan"],
            demos=templates.planning_demos,
            include_query=spec.include_query,
        )
    if scenario is Scenario.GENERATE:
        if spec.codegen_mode is not CodegenMode.ZERO_SHOT:
            raise ConfigurationError(
                f"stage {stage.value} has no zero-shot code generation"
            )
        return ComposedTemplate(
            table_template=table_template,
            instruction=templates.stage_slots[stage]["generate"],
            demos=(),
            include_query=spec.include_query,
        )
    if scenario is Scenario.REGENERATE:
        if spec.codegen_mode is not CodegenMode.ZERO_SHOT:
            raise ConfigurationError(
                f"stage {stage.value} does not use the shared regeneration template"
            )
        return ComposedTemplate(
            table_template=table_template,
            instruction=templates.regenerate,
            demos=(),
            include_query=spec.include_query,
        )
    if scenario is Scenario.FINAL_GENERATE:
        if stage is not StageId.FINAL_ANSWERING:
            raise ConfigurationError("final generation applies only to final answering")
        return ComposedTemplate(
            table_template=table_template,
            instruction=templates.stage_slots[stage]["generate"],
            demos=templates.final_demos,
            include_query=True,
        )
    if scenario is Scenario.FINAL_REGENERATE:
        if stage is not StageId.FINAL_ANSWERING:
            raise ConfigurationError("final regeneration applies only to final answering")
        return ComposedTemplate(
            table_template=table_template,
            instruction=templates.stage_slots[stage]["regenerate"],
            demos=(),
            include_query=True,
        )
    raise ConfigurationError(f"unknown scenario: {scenario}")
