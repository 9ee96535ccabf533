"""Scoring, group analysis, efficiency accounting, and ablation comparison.

Failed samples (any non-answered status) stay in the denominator and score
incorrect, so reported accuracy reflects the end-to-end pipeline.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from .engine import SampleResult, SampleStatus
from .errors import ConfigurationError
from .tables import (
    Difficulty,
    SizeGroup,
    TaskKind,
    TaskSample,
    content_cell_count,
    size_group,
    wikitq_difficulty,
)

NUMERIC_TOLERANCE = 1e-6

_QUOTE_CHARS = "\"'‘’“”`´"


def normalize_item(text: str) -> tuple[str, str | float]:
    """Normalize one answer item to a ("num", value) or ("str", value) token."""
    token = text.strip().strip(_QUOTE_CHARS).lower()
    token = " ".join(token.split())
    candidate = token.replace(",", "")
    if candidate:
        try:
            value = float(candidate)
        except ValueError:
            pass
        else:
            # inf/nan spellings stay strings; they are not table numbers
            if math.isfinite(value):
                return ("num", value)
    return ("str", token)


def denotation_match(predicted: list[str], gold: list[str]) -> bool:
    """Semantic multiset equality of two answer lists.

    String items compare after normalization; numeric items compare with
    absolute tolerance 1e-6.
    """
    if not predicted or not gold:
        raise ValueError("denotation lists must be non-empty")
    p_items = [normalize_item(x) for x in predicted]
    g_items = [normalize_item(x) for x in gold]
    p_strings = Counter(v for k, v in p_items if k == "str")
    g_strings = Counter(v for k, v in g_items if k == "str")
    if p_strings != g_strings:
        return False
    p_nums = sorted(v for k, v in p_items if k == "num")
    g_nums = sorted(v for k, v in g_items if k == "num")
    if len(p_nums) != len(g_nums):
        return False
    return all(abs(a - b) <= NUMERIC_TOLERANCE for a, b in zip(p_nums, g_nums))


def fact_match(predicted_label: int, gold_label: int) -> bool:
    if predicted_label not in (0, 1) or gold_label not in (0, 1):
        raise ValueError("fact labels must be 0 or 1")
    return predicted_label == gold_label


def sample_difficulty(sample: TaskSample) -> Difficulty:
    if sample.difficulty is not None:
        return sample.difficulty
    if sample.kind is TaskKind.QA:
        return wikitq_difficulty(sample.query)
    raise ConfigurationError(
        f"sample {sample.id}: fact-verification difficulty must come from the loader"
    )


@dataclass
class SampleScore:
    sample_id: str
    status: SampleStatus
    correct: bool
    counts: tuple[int, int, int]
    difficulty: Difficulty
    size: SizeGroup


@dataclass
class EvalResult:
    scores: list[SampleScore]
    accuracy: float
    n_scored: int
    n_failed_by_status: dict[str, int]

    @property
    def sample_ids(self) -> list[str]:
        return [s.sample_id for s in self.scores]


def _is_correct(result: SampleResult, sample: TaskSample) -> bool:
    if result.status is not SampleStatus.ANSWERED or result.answer is None:
        return False
    predicted = result.answer.predicted
    if sample.kind is TaskKind.QA:
        assert predicted.denotations is not None and sample.gold.denotations is not None
        return denotation_match(list(predicted.denotations), list(sample.gold.denotations))
    assert predicted.label is not None and sample.gold.label is not None
    return fact_match(predicted.label, sample.gold.label)


def score_results(results: list[SampleResult], samples: list[TaskSample]) -> EvalResult:
    """Score each result against its sample's gold answer."""
    if [r.sample_id for r in results] != [s.id for s in samples]:
        raise ConfigurationError("results and samples must align by id and order")
    scores = []
    failed: Counter[str] = Counter()
    n_correct = 0
    for result, sample in zip(results, samples):
        correct = _is_correct(result, sample)
        if result.answer is not None:
            result.answer.correct = correct
        if result.status is not SampleStatus.ANSWERED:
            failed[result.status.value] += 1
        n_correct += correct
        scores.append(
            SampleScore(
                sample_id=sample.id,
                status=result.status,
                correct=correct,
                counts=result.counts,
                difficulty=sample_difficulty(sample),
                size=size_group(content_cell_count(sample.table)),
            )
        )
    accuracy = 100.0 * n_correct / len(scores) if scores else 0.0
    return EvalResult(
        scores=scores,
        accuracy=accuracy,
        n_scored=len(scores),
        n_failed_by_status=dict(failed),
    )


def _bucket_accuracy(scores: list[SampleScore]) -> float | None:
    if not scores:
        return None
    return 100.0 * sum(s.correct for s in scores) / len(scores)


@dataclass
class GroupReport:
    by_difficulty: dict[Difficulty, float | None]
    by_size: dict[SizeGroup, float | None]
    cross: dict[tuple[Difficulty, SizeGroup], float | None]
    overall: float


def group_report(result: EvalResult) -> GroupReport:
    """Accuracy per difficulty and table-size bucket, plus the cross grid."""
    scores = result.scores
    by_difficulty = {
        d: _bucket_accuracy([s for s in scores if s.difficulty is d]) for d in Difficulty
    }
    by_size = {
        g: _bucket_accuracy([s for s in scores if s.size is g]) for g in SizeGroup
    }
    cross = {
        (d, g): _bucket_accuracy(
            [s for s in scores if s.difficulty is d and s.size is g]
        )
        for d in Difficulty
        for g in SizeGroup
    }
    return GroupReport(
        by_difficulty=by_difficulty,
        by_size=by_size,
        cross=cross,
        overall=result.accuracy,
    )


@dataclass
class KindStats:
    mean: float
    max: int


@dataclass
class EfficiencyReport:
    planning: KindStats
    code_generation: KindStats
    re_generation: KindStats
    n_completed: int
    n_attempted: int


def efficiency_report(result: EvalResult) -> EfficiencyReport:
    """Mean generation counts over completed samples; maxima over all."""
    completed = [s for s in result.scores if s.status is SampleStatus.ANSWERED]
    attempted = result.scores

    def stats(index: int) -> KindStats:
        mean = (
            sum(s.counts[index] for s in completed) / len(completed) if completed else 0.0
        )
        peak = max((s.counts[index] for s in attempted), default=0)
        return KindStats(mean=mean, max=peak)

    return EfficiencyReport(
        planning=stats(0),
        code_generation=stats(1),
        re_generation=stats(2),
        n_completed=len(completed),
        n_attempted=len(attempted),
    )


@dataclass
class VariantComparison:
    variant: str
    accuracy: float
    delta_vs_original: float | None


def compare_variants(
    result_sets: dict[str, EvalResult], baseline: str = "original"
) -> list[VariantComparison]:
    """Accuracy per variant with deltas against the baseline variant.

    All result sets must cover the same sample list.
    """
    if baseline not in result_sets:
        raise ConfigurationError(f"baseline variant {baseline!r} missing from results")
    baseline_ids = set(result_sets[baseline].sample_ids)
    for name, result in result_sets.items():
        difference = baseline_ids.symmetric_difference(result.sample_ids)
        if difference:
            raise ConfigurationError(
                f"variant {name!r} evaluated on different samples: "
                f"{sorted(difference)[:10]}"
            )
    base_accuracy = result_sets[baseline].accuracy
    rows = []
    for name in sorted(result_sets):
        accuracy = result_sets[name].accuracy
        rows.append(
            VariantComparison(
                variant=name,
                accuracy=accuracy,
                delta_vs_original=accuracy - base_accuracy,
            )
        )
    return rows


def _fmt(value: float | None) -> str:
    return "-" if value is None else f"{value:.2f}"


def format_group_report(report: GroupReport) -> str:
    lines = [
        "Accuracy by group (%)",
        f"  overall: {report.overall:.2f}",
        "  difficulty: "
        + "  ".join(
            f"{d.value}={_fmt(report.by_difficulty[d])}" for d in Difficulty
        ),
        "  table size: "
        + "  ".join(f"{g.value}={_fmt(report.by_size[g])}" for g in SizeGroup),
    ]
    for d in Difficulty:
        cells = "  ".join(
            f"{g.value}={_fmt(report.cross[(d, g)])}" for g in SizeGroup
        )
        lines.append(f"  {d.value} x size: {cells}")
    return "\n".join(lines)


def format_efficiency_report(report: EfficiencyReport) -> str:
    def row(label: str, stats: KindStats) -> str:
        return f"  {label}: mean {stats.mean:.2f}, max {stats.max}"

    return "\n".join(
        [
            f"Generation counts per sample ({report.n_completed} completed"
            f" / {report.n_attempted} attempted)",
            row("planning", report.planning),
            row("code generation", report.code_generation),
            row("re-generation", report.re_generation),
        ]
    )


def format_comparison(rows: list[VariantComparison]) -> str:
    lines = ["Variant comparison (accuracy %, delta vs original)"]
    for row in rows:
        delta = "" if row.delta_vs_original is None else f" ({row.delta_vs_original:+.2f})"
        lines.append(f"  {row.variant}: {row.accuracy:.2f}{delta}")
    return "\n".join(lines)


def group_report_json(report: GroupReport) -> dict:
    return {
        "overall": round(report.overall, 2),
        "difficulty": {
            d.value: report.by_difficulty[d] for d in Difficulty
        },
        "size": {g.value: report.by_size[g] for g in SizeGroup},
        "cross": {
            f"{d.value}/{g.value}": report.cross[(d, g)]
            for d in Difficulty
            for g in SizeGroup
        },
    }


def efficiency_report_json(report: EfficiencyReport) -> dict:
    return {
        "planning": {"mean": report.planning.mean, "max": report.planning.max},
        "code_generation": {
            "mean": report.code_generation.mean,
            "max": report.code_generation.max,
        },
        "re_generation": {
            "mean": report.re_generation.mean,
            "max": report.re_generation.max,
        },
        "n_completed": report.n_completed,
        "n_attempted": report.n_attempted,
    }
