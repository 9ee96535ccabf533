"""Command-line entry points: dataset conversion, runs, and reports.

Run artifacts are plain files: per-sample trace JSONL, an answers JSONL,
and a summary JSON. Reports never re-contact a backend or kernel; they are
recomputed from the persisted files alone.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import shlex
import sys
from pathlib import Path

from . import datasets, evaluate
from .engine import AnswerRecord, SampleResult, SampleStatus, run_batch
from .errors import ConfigurationError, EngineError
from .kernel import KernelConfig, LocalSession, RetryPolicy, start_session
from .llm import HttpBackend, ScriptedBackend
from .stages import get_variant, load_prompt_library
from .tables import AnswerKey, read_samples, write_samples

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFRASTRUCTURE = 2


@dataclasses.dataclass
class RunConfig:
    data: str = ""
    variant: str = "original"
    backend: str = ""
    model: str = ""
    token_env: str = "LLM_API_TOKEN"
    up_limit: int = 3
    cell_timeout: float = 30.0
    concurrency: int = 1
    prompt_dir: str | None = None
    out_dir: str = ""
    kernel: str = "local"
    markdown_max_rows: int | None = None
    max_ops_per_stage: int = 8
    sample_budget_s: float = 600.0
    limit: int | None = None
    resume: bool = False
    seed: int = 0


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: ANN201 - argparse signature
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="tabstages", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    convert = sub.add_parser("convert", help="convert a native benchmark layout")
    convert.add_argument("--dataset", required=True, choices=["wikitq", "tabfact"])
    convert.add_argument("--split", required=True)
    convert.add_argument("--root", required=True, help="native benchmark root directory")
    convert.add_argument("--out", required=True, help="output interchange JSONL path")

    run = sub.add_parser("run", help="run a batch of samples")
    run.add_argument("--config", help="JSON config file (flags override it)")
    run.add_argument("--data", help="interchange JSONL with samples")
    run.add_argument("--variant", help="pipeline variant name")
    run.add_argument("--backend", help="scripted:<path> or http:<endpoint>")
    run.add_argument("--model", help="model name for the http backend")
    run.add_argument("--token-env", dest="token_env", help="env var holding the API token")
    run.add_argument("--up-limit", dest="up_limit", type=int)
    run.add_argument("--cell-timeout", dest="cell_timeout", type=float)
    run.add_argument("--concurrency", type=int)
    run.add_argument("--prompt-dir", dest="prompt_dir")
    run.add_argument("--out-dir", dest="out_dir", help="run directory to create")
    run.add_argument("--kernel", help="local or command:<argv string>")
    run.add_argument("--markdown-max-rows", dest="markdown_max_rows", type=int)
    run.add_argument("--max-ops-per-stage", dest="max_ops_per_stage", type=int)
    run.add_argument("--sample-budget", dest="sample_budget_s", type=float)
    run.add_argument("--limit", type=int, help="run only the first N samples")
    run.add_argument("--resume", action="store_true", default=None)
    run.add_argument("--seed", type=int)

    report = sub.add_parser("report", help="report on one or more run directories")
    report.add_argument("run_dirs", nargs="+")
    report.add_argument("--json", action="store_true", help="emit machine-readable JSON")
    return parser


def _merge_config(args: argparse.Namespace) -> RunConfig:
    values = dataclasses.asdict(RunConfig())
    if args.config:
        config_path = Path(args.config)
        if not config_path.is_file():
            raise ConfigurationError(f"config file not found: {config_path}")
        with config_path.open("r", encoding="utf-8") as fh:
            file_values = json.load(fh)
        unknown = set(file_values) - set(values)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        values.update(file_values)
    for key in values:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    config = RunConfig(**values)
    if not config.data:
        raise ConfigurationError("--data (or config 'data') is required")
    if not config.out_dir:
        raise ConfigurationError("--out-dir (or config 'out_dir') is required")
    if not config.backend:
        raise ConfigurationError("--backend (or config 'backend') is required")
    return config


def cmd_convert(args: argparse.Namespace) -> int:
    if args.dataset == "wikitq":
        split = datasets.WikitqSplit(args.split)
        samples = datasets.load_wikitq(args.root, split)
    else:
        split = datasets.TabfactSplit(args.split)
        samples = datasets.load_tabfact(args.root, split)
    count = write_samples(args.out, samples)
    print(f"wrote {count} samples to {args.out}")
    return EXIT_OK


def _make_backend(config: RunConfig):
    kind, _, rest = config.backend.partition(":")
    if kind == "scripted":
        path = Path(rest)
        if not path.is_file():
            raise ConfigurationError(f"scripted fixture not found: {path}")
        return ScriptedBackend.from_file(path)
    if kind == "http":
        if not rest:
            raise ConfigurationError("http backend needs an endpoint URL")
        if not config.model:
            raise ConfigurationError("http backend needs --model")
        return HttpBackend(endpoint=rest, model=config.model, token_env=config.token_env)
    raise ConfigurationError(f"unknown backend selector: {config.backend!r}")


def _make_session_factory(config: RunConfig):
    kind, _, rest = config.kernel.partition(":")
    if kind == "local":
        return LocalSession
    if kind == "command":
        argv = tuple(shlex.split(rest))
        if not argv:
            raise ConfigurationError("kernel command is empty")
        kernel_config = KernelConfig(command=argv, cell_timeout=config.cell_timeout)
        return lambda: start_session(kernel_config)
    raise ConfigurationError(f"unknown kernel selector: {config.kernel!r}")


def _safe_name(sample_id: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in sample_id)


def _write_trace(out_dir: Path, result: SampleResult) -> None:
    path = out_dir / f"{_safe_name(result.sample_id)}.trace.jsonl"
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for event in result.trace:
            fh.write(
                json.dumps(
                    {"ts": event.timestamp, "kind": event.kind.value, "payload": event.payload},
                    ensure_ascii=False,
                )
            )
            fh.write("\n")


def _result_from_record(record: dict) -> SampleResult:
    """Rebuild enough of a SampleResult from a persisted answers row to rescore it."""
    counts = record.get("counts", {})
    counts_triple = (
        int(counts.get("planning", 0)),
        int(counts.get("code_generation", 0)),
        int(counts.get("re_generation", 0)),
    )
    answer = None
    status = SampleStatus(record["status"])
    if status is SampleStatus.ANSWERED:
        predicted = record["predicted"]
        key = (
            AnswerKey(denotations=tuple(predicted["denotations"]))
            if "denotations" in predicted
            else AnswerKey(label=int(predicted["label"]))
        )
        answer = AnswerRecord(
            raw_output=record.get("raw_output", ""),
            predicted=key,
            counts=counts_triple,
        )
    return SampleResult(
        sample_id=record["id"],
        status=status,
        counts=counts_triple,
        trace=[],
        code_base=(),
        answer=answer,
        failure=record.get("failure"),
    )


def _answer_record(result: SampleResult) -> dict:
    planning, codegen, regen = result.counts
    record: dict = {
        "id": result.sample_id,
        "status": result.status.value,
        "counts": {
            "planning": planning,
            "code_generation": codegen,
            "re_generation": regen,
        },
    }
    if result.answer is not None:
        predicted = result.answer.predicted
        record["raw_output"] = result.answer.raw_output
        record["predicted"] = (
            {"denotations": list(predicted.denotations)}
            if predicted.denotations is not None
            else {"label": predicted.label}
        )
        record["correct"] = result.answer.correct
    else:
        record["failure"] = result.failure or ""
    return record


def cmd_run(args: argparse.Namespace) -> int:
    config = _merge_config(args)
    samples = read_samples(config.data)
    if config.limit is not None:
        samples = samples[: config.limit]
    if not samples:
        raise ConfigurationError(f"no samples in {config.data}")

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    previous: dict[str, dict] = {}
    answers_path = out_dir / "answers.jsonl"
    if config.resume and answers_path.is_file():
        with answers_path.open("r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    record = json.loads(line)
                    previous[record["id"]] = record

    to_run = [
        s
        for s in samples
        if previous.get(s.id, {}).get("status") != SampleStatus.ANSWERED.value
    ]
    skipped = len(samples) - len(to_run)

    backend = _make_backend(config)
    library = load_prompt_library(config.prompt_dir)
    variant = get_variant(config.variant)
    session_factory = _make_session_factory(config)

    results = run_batch(
        to_run,
        variant,
        backend,
        library,
        session_factory,
        concurrency=config.concurrency,
        retry_policy=RetryPolicy(up_limit=config.up_limit),
        max_ops_per_stage=config.max_ops_per_stage,
        markdown_max_rows=config.markdown_max_rows,
        sample_budget_s=config.sample_budget_s,
    )

    by_id = {r.sample_id: r for r in results}
    # resumed samples re-enter scoring via their persisted records so the
    # summary always covers the whole sample list
    scored = [
        by_id[s.id] if s.id in by_id else _result_from_record(previous[s.id])
        for s in samples
    ]
    eval_result = evaluate.score_results(scored, samples)

    for result in results:
        _write_trace(out_dir, result)

    with answers_path.open("w", encoding="utf-8", newline="\n") as fh:
        for sample in samples:
            if sample.id in by_id:
                record = _answer_record(by_id[sample.id])
            else:
                record = previous[sample.id]
            fh.write(json.dumps(record, ensure_ascii=False))
            fh.write("\n")

    group = evaluate.group_report(eval_result)
    efficiency = evaluate.efficiency_report(eval_result)
    summary = {
        "variant": config.variant,
        "n_samples": len(samples),
        "n_executed": len(results),
        "n_resumed": skipped,
        "accuracy": round(eval_result.accuracy, 2),
        "status_counts": eval_result.n_failed_by_status,
        "group": evaluate.group_report_json(group),
        "efficiency": evaluate.efficiency_report_json(efficiency),
        "sample_ids": [s.id for s in samples],
    }
    (out_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    (out_dir / "config.json").write_text(
        json.dumps(dataclasses.asdict(config), indent=2) + "\n", encoding="utf-8"
    )

    print(f"{len(results)} samples executed ({skipped} resumed), accuracy {eval_result.accuracy:.2f}%")
    print(f"run directory: {out_dir}")
    infrastructure = sum(
        1 for r in results if r.status is SampleStatus.INFRASTRUCTURE
    )
    return EXIT_INFRASTRUCTURE if infrastructure else EXIT_OK


def _load_summary(run_dir: str) -> dict:
    path = Path(run_dir) / "summary.json"
    if not path.is_file():
        raise ConfigurationError(f"missing summary: {path}")
    with path.open("r", encoding="utf-8") as fh:
        return json.load(fh)


def cmd_report(args: argparse.Namespace) -> int:
    summaries = {d: _load_summary(d) for d in args.run_dirs}
    if args.json:
        payload = {d: s for d, s in summaries.items()}
        print(json.dumps(payload, indent=2, ensure_ascii=False))
        return EXIT_OK
    for run_dir, summary in summaries.items():
        print(f"== {run_dir} (variant {summary['variant']}) ==")
        print(f"overall accuracy: {summary['accuracy']:.2f}% over {summary['n_samples']} samples")
        group = summary["group"]
        fmt = lambda v: "-" if v is None else f"{v:.2f}"  # noqa: E731
        print(
            "  difficulty: "
            + "  ".join(f"{k}={fmt(v)}" for k, v in group["difficulty"].items())
        )
        print("  table size: " + "  ".join(f"{k}={fmt(v)}" for k, v in group["size"].items()))
        eff = summary["efficiency"]
        for key in ("planning", "code_generation", "re_generation"):
            print(f"  {key}: mean {eff[key]['mean']:.2f}, max {eff[key]['max']}")
    if len(summaries) > 1:
        ids = None
        for run_dir, summary in summaries.items():
            current = set(summary["sample_ids"])
            if ids is None:
                ids = current
            elif ids != current:
                raise ConfigurationError(
                    f"{run_dir} covers different samples than the first run dir"
                )
        baseline = next(
            (s for s in summaries.values() if s["variant"] == "original"),
            next(iter(summaries.values())),
        )
        print("== variant comparison ==")
        for run_dir, summary in summaries.items():
            delta = summary["accuracy"] - baseline["accuracy"]
            print(f"  {summary['variant']}: {summary['accuracy']:.2f} ({delta:+.2f})")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "convert":
            return cmd_convert(args)
        if args.command == "run":
            return cmd_run(args)
        return cmd_report(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFRASTRUCTURE


if __name__ == "__main__":
    raise SystemExit(main())
