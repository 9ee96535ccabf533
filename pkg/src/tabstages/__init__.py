"""Stage-oriented plan-then-execute reasoning on tables.

The engine decomposes a table QA or fact-verification task into fixed
analytical stages, plans an operation chain per stage with an LLM,
generates code per operation, executes it in a stateful kernel with
rollback-on-error and bounded regeneration, and scores the printed answer
against benchmark labels.
"""

from .engine import AnswerRecord, SampleResult, SampleStatus, run_batch, run_sample
from .kernel import KernelConfig, LocalSession, RetryPolicy, start_session
from .llm import GenerationParams, HttpBackend, ScriptedBackend
from .stages import VARIANTS, PipelineVariant, StageId, VariantName, load_prompt_library
from .tables import AnswerKey, Table, TaskKind, TaskSample

__version__ = "0.1.0"

__all__ = [
    "AnswerKey",
    "AnswerRecord",
    "GenerationParams",
    "HttpBackend",
    "KernelConfig",
    "LocalSession",
    "PipelineVariant",
    "RetryPolicy",
    "SampleResult",
    "SampleStatus",
    "ScriptedBackend",
    "StageId",
    "Table",
    "TaskKind",
    "TaskSample",
    "VARIANTS",
    "VariantName",
    "load_prompt_library",
    "run_batch",
    "run_sample",
    "start_session",
    "__version__",
]
