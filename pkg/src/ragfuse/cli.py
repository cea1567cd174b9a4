"""Command-line interface: index, filter, run, and report subcommands."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import yaml

from .corpus import (
    CorpusError,
    CorpusStats,
    Passage,
    Question,
    chunk_corpus,
    load_corpus,
    load_questions,
)
from .evaluation import (
    EvalRecord,
    EvalReport,
    TraceTokens,
    aggregate,
    filter_dataset,
    score_trace,
)
from .llm import (
    BudgetError,
    CompletionClient,
    LiveClient,
    ResponseCache,
    RuleClient,
    RuleError,
    ScriptClient,
    ScriptError,
    TransportError,
    load_script,
)
from .prompts import TEMPLATE_VERSION, UnknownPolicy
from .retriever import (
    Bm25Index,
    PlacementMode,
    RetrievalConfig,
    apply_gold_placement,
    build_index,
    load_rankings,
    ranked_list_from_ids,
    retrieve_top_k,
)
from .strategies import Strategy, StrategyTrace, run_strategy

_BACKENDS = ("rule", "script", "live")
_SWEEP = "sweep"
_SWEEP_MODES = (PlacementMode.RETRIEVAL_ORDER, PlacementMode.GOLD_TOP, PlacementMode.GOLD_BOTTOM)
_PATH_FIELDS = {"corpus", "questions", "rankings", "script", "out", "cache"}


def parse_strategies(value: object) -> list[Strategy]:
    """Accept a list of names, a comma-separated string, or "all"."""
    if isinstance(value, str):
        names = [part.strip() for part in value.split(",") if part.strip()]
    else:
        names = [str(part) for part in value]
    if names == ["all"]:
        return list(Strategy)
    parsed = []
    for name in names:
        try:
            parsed.append(Strategy(name))
        except ValueError:
            valid = ", ".join(s.value for s in Strategy)
            raise ValueError(f"unknown strategy {name!r} (valid: {valid}, or 'all')") from None
    return parsed


@dataclass
class RunConfig:
    """Everything one run needs; loadable from YAML with CLI flag overrides."""

    corpus: Path = Path("corpus.jsonl")
    questions: Path = Path("questions.jsonl")
    out: Path = Path("out")
    rankings: Path | None = None
    script: Path | None = None
    backend: str = "rule"
    strategies: list[Strategy] = field(default_factory=lambda: list(Strategy))
    k: int = 5
    max_passage_words: int = 100
    model_input_budget: int = 4096
    bm25_k1: float = 1.2
    bm25_b: float = 0.75
    placement: str = PlacementMode.NO_GOLD.value
    seed: int = 0
    unknown_sentinel: str = "unknown"
    unknown_patterns: list[str] = field(default_factory=list)
    max_response_tokens: int = 64
    workers: int = 1
    nm_denominator: str = "pool"
    endpoint: str | None = None
    model: str | None = None
    api_key_env: str = "RAGFUSE_API_KEY"
    timeout: float = 60.0
    max_in_flight: int = 4
    cache: Path | None = None

    def retrieval(self, placement: str | None = None) -> RetrievalConfig:
        mode = placement if placement is not None else self.placement
        return RetrievalConfig(
            k=self.k,
            max_passage_words=self.max_passage_words,
            model_input_budget=self.model_input_budget,
            bm25_k1=self.bm25_k1,
            bm25_b=self.bm25_b,
            placement_mode=PlacementMode(mode),
            rng_seed=self.seed,
        )

    def policy(self) -> UnknownPolicy:
        return UnknownPolicy(
            sentinel=self.unknown_sentinel, extra_patterns=tuple(self.unknown_patterns)
        )

    def validate(self, command: str = "run") -> None:
        placement_values = [m.value for m in PlacementMode] + [_SWEEP]
        if self.placement not in placement_values:
            raise ValueError(
                f"placement must be one of {placement_values}, got {self.placement!r}"
            )
        first_mode = _SWEEP_MODES[0].value if self.placement == _SWEEP else self.placement
        self.retrieval(first_mode).validate()
        if command in ("index", "run") and not self.corpus.exists():
            raise ValueError(f"corpus file not found: {self.corpus}")
        if command in ("filter", "run") and not self.questions.exists():
            raise ValueError(f"questions file not found: {self.questions}")
        if self.rankings is not None and not self.rankings.exists():
            raise ValueError(f"rankings file not found: {self.rankings}")
        if self.backend not in _BACKENDS:
            raise ValueError(f"backend must be one of {_BACKENDS}, got {self.backend!r}")
        if command in ("filter", "run"):
            if self.backend == "script":
                if self.script is None:
                    raise ValueError("script backend needs a script file")
                if not self.script.exists():
                    raise ValueError(f"script file not found: {self.script}")
            if self.backend == "live" and (not self.endpoint or not self.model):
                raise ValueError("live backend needs both endpoint and model")
        if not self.strategies:
            raise ValueError("strategy list must be non-empty")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.max_response_tokens < 1:
            raise ValueError("max_response_tokens must be >= 1")
        if self.nm_denominator not in ("pool", "all"):
            raise ValueError(f"nm_denominator must be 'pool' or 'all', got {self.nm_denominator!r}")


def load_config(path: str | Path) -> RunConfig:
    """Read a YAML mapping into a RunConfig; unknown keys are rejected."""
    path = Path(path)
    raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: config must be a key-value mapping")
    known = {f.name for f in fields(RunConfig)}
    config = RunConfig()
    for key, value in raw.items():
        if key not in known:
            raise ValueError(f"{path}: unknown config key {key!r}")
        if key == "strategies":
            value = parse_strategies(value)
        elif key == "unknown_patterns":
            value = [str(item) for item in value]
        elif key in _PATH_FIELDS and value is not None:
            value = Path(value)
        setattr(config, key, value)
    return config


_OVERRIDE_FLAGS = (
    "out", "k", "seed", "backend", "placement", "workers", "nm_denominator",
    "max_response_tokens",
)


def apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    """CLI flags that were actually given override config-file fields."""
    for name in _OVERRIDE_FLAGS:
        value = getattr(args, name, None)
        if value is None:
            continue
        setattr(config, name, Path(value) if name in _PATH_FIELDS else value)
    raw_strategies = getattr(args, "strategies", None)
    if raw_strategies is not None:
        config.strategies = parse_strategies(raw_strategies)
    return config


def make_client(config: RunConfig, questions: Sequence[Question]) -> CompletionClient:
    """Build the completion client selected by config.backend."""
    budget = config.model_input_budget
    if config.backend == "rule":
        return RuleClient(questions, sentinel=config.unknown_sentinel, max_prompt_tokens=budget)
    if config.backend == "script":
        return ScriptClient(load_script(config.script), max_prompt_tokens=budget)
    return LiveClient(
        endpoint=config.endpoint,
        model=config.model,
        api_key=os.environ.get(config.api_key_env),
        timeout=config.timeout,
        max_in_flight=config.max_in_flight,
        max_prompt_tokens=budget,
        cache=ResponseCache(config.cache) if config.cache is not None else None,
    )


def _json_line(record: object) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n"


def question_to_dict(question: Question) -> dict:
    record = {
        "id": question.question_id,
        "question": question.text,
        "answers": list(question.gold_answers),
    }
    if question.gold_passage_id is not None:
        record["gold_passage_id"] = question.gold_passage_id
    return record


def trace_to_dict(trace: StrategyTrace) -> dict:
    return {
        "strategy": trace.strategy.value,
        "question_id": trace.question_id,
        "passage_ids": list(trace.passage_ids),
        "final": trace.final.text,
        "rounds_used": trace.rounds_used,
        "finalized_by_vote": trace.finalized_by_vote,
        "off_pool": trace.off_pool,
        "per_passage_answers": (
            [a.text for a in trace.per_passage_answers]
            if trace.per_passage_answers is not None
            else None
        ),
        "candidate_pool": list(trace.candidate_pool) if trace.candidate_pool is not None else None,
        "prompt_tokens_total": trace.prompt_tokens_total,
        "completion_tokens_total": trace.completion_tokens_total,
        "exchanges": [
            {
                "kind": exchange.kind.value,
                "exchange_key": exchange.exchange_key,
                "prompt": exchange.request.prompt_text,
                "response": exchange.response.text,
                "prompt_tokens": exchange.response.prompt_tokens,
                "completion_tokens": exchange.response.completion_tokens,
                "backend": exchange.response.backend.value,
            }
            for exchange in trace.exchanges
        ],
    }


def record_to_dict(record: EvalRecord, trace: StrategyTrace) -> dict:
    return {
        "question_id": record.question_id,
        "strategy": record.strategy,
        "em": record.em,
        "f1": record.f1,
        "is_unknown": record.is_unknown,
        "pool_contains_gold": record.pool_contains_gold,
        "nm_event": record.nm_event,
        "prompt_tokens_total": trace.prompt_tokens_total,
        "completion_tokens_total": trace.completion_tokens_total,
    }


def report_to_dict(report: EvalReport) -> dict:
    return {
        "nm_denominator": report.nm_denominator,
        "strategies": [
            {
                "strategy": row.strategy,
                "num_questions": row.num_questions,
                "em_pct": row.em_pct,
                "f1_pct": row.f1_pct,
                "unknown_rate": row.unknown_rate,
                "no_match_rate": row.no_match_rate,
                "no_match_numerator": row.no_match_numerator,
                "no_match_denominator": row.no_match_denominator,
                "mean_prompt_tokens": row.mean_prompt_tokens,
                "mean_completion_tokens": row.mean_completion_tokens,
                "total_prompt_tokens": row.total_prompt_tokens,
                "total_completion_tokens": row.total_completion_tokens,
            }
            for row in report.strategies
        ],
    }


_REPORT_COLUMNS = (
    "strategy", "num_questions", "em_pct", "f1_pct", "unknown_rate", "no_match_rate",
    "no_match_numerator", "no_match_denominator", "mean_prompt_tokens",
    "mean_completion_tokens", "total_prompt_tokens", "total_completion_tokens",
)


def format_report(report: EvalReport) -> str:
    """Fixed-width table with one row per strategy."""
    lines = [
        f"{'strategy':<12} {'n':>4} {'EM%':>7} {'F1%':>7} {'Unk%':>7} {'NM%':>7} "
        f"{'ptok/q':>9} {'ctok/q':>9}"
    ]
    for row in report.strategies:
        lines.append(
            f"{row.strategy:<12} {row.num_questions:>4} {row.em_pct:>7.1f} {row.f1_pct:>7.1f} "
            f"{100 * row.unknown_rate:>7.1f} {100 * row.no_match_rate:>7.1f} "
            f"{row.mean_prompt_tokens:>9.1f} {row.mean_completion_tokens:>9.1f}"
        )
    return "\n".join(lines)


def config_to_dict(config: RunConfig) -> dict:
    snapshot = {}
    for entry in fields(RunConfig):
        value = getattr(config, entry.name)
        if isinstance(value, Path):
            value = str(value)
        elif entry.name == "strategies":
            value = [s.value for s in value]
        snapshot[entry.name] = value
    return snapshot


def cmd_index(config: RunConfig) -> CorpusStats:
    """Build the BM25 index and persist a snapshot under the output directory."""
    config.validate("index")
    documents = load_corpus(config.corpus)
    passages = chunk_corpus(documents, config.max_passage_words)
    index = build_index(passages, k1=config.bm25_k1, b=config.bm25_b)
    num_questions = len(load_questions(config.questions)) if config.questions.exists() else 0
    stats = CorpusStats(
        num_documents=len(documents),
        num_passages=len(passages),
        num_questions=num_questions,
    )
    snapshot = {
        "bm25": {"k1": index.k1, "b": index.b},
        "max_passage_words": config.max_passage_words,
        "num_passages": index.num_passages,
        "avg_length": index.avg_length,
        "doc_freq": dict(index.doc_freq),
        "passages": [
            {
                "id": pid,
                "doc_id": index.passages[pid].doc_id,
                "title": index.passages[pid].title,
                "text": index.passages[pid].text,
                "word_count": index.passages[pid].word_count,
            }
            for pid in index.passage_ids
        ],
    }
    config.out.mkdir(parents=True, exist_ok=True)
    (config.out / "index.json").write_text(
        json.dumps(snapshot, sort_keys=True, ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
    )
    print(
        f"indexed {stats.num_documents} documents into {stats.num_passages} passages "
        f"({stats.num_questions} questions); wrote {config.out / 'index.json'}"
    )
    return stats


def cmd_filter(config: RunConfig) -> tuple[list[Question], list[Question]]:
    """Partition questions by the closed-book probe and write both halves."""
    config.validate("filter")
    questions = load_questions(config.questions)
    client = make_client(config, questions)
    kept, removed = filter_dataset(
        questions, client, policy=config.policy(), max_response_tokens=config.max_response_tokens
    )
    config.out.mkdir(parents=True, exist_ok=True)
    with (config.out / "kept.jsonl").open("w", encoding="utf-8") as handle:
        for question in kept:
            handle.write(_json_line(question_to_dict(question)))
    with (config.out / "removed.jsonl").open("w", encoding="utf-8") as handle:
        for question in removed:
            handle.write(_json_line(question_to_dict(question)))
    summary = {"total": len(questions), "kept": len(kept), "removed": len(removed)}
    (config.out / "filter.json").write_text(
        json.dumps(summary, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(
        f"kept {len(kept)} of {len(questions)} questions "
        f"({len(removed)} answered closed-book); wrote {config.out}"
    )
    return kept, removed


def _passages_for_question(
    question: Question,
    index: Bm25Index | None,
    rankings: dict[str, list[str]] | None,
    by_id: dict[str, Passage],
    retrieval: RetrievalConfig,
) -> list[Passage]:
    if rankings is not None:
        if question.question_id not in rankings:
            raise ValueError(f"no precomputed ranking for question {question.question_id!r}")
        ranked = ranked_list_from_ids(
            question.question_id, rankings[question.question_id], retrieval.k
        )
    else:
        ranked = retrieve_top_k(
            index, question.text, retrieval.k, question_id=question.question_id
        )
    ranked = apply_gold_placement(ranked, question, retrieval)
    selected = []
    for pid in ranked.passage_ids():
        if pid not in by_id:
            raise ValueError(
                f"ranked passage id {pid!r} (question {question.question_id!r}) "
                f"is not in the corpus"
            )
        selected.append(by_id[pid])
    return selected


def _run_single(config: RunConfig) -> EvalReport:
    """One complete run at a concrete placement mode; writes all artifacts."""
    documents = load_corpus(config.corpus)
    questions = load_questions(config.questions)
    passages = chunk_corpus(documents, config.max_passage_words)
    by_id = {p.passage_id: p for p in passages}
    rankings = load_rankings(config.rankings) if config.rankings is not None else None
    index = build_index(passages, k1=config.bm25_k1, b=config.bm25_b) if rankings is None else None
    client = make_client(config, questions)
    retrieval = config.retrieval()
    policy = config.policy()

    def work(question: Question) -> list[tuple[StrategyTrace, EvalRecord]]:
        selected = _passages_for_question(question, index, rankings, by_id, retrieval)
        results = []
        for strategy in config.strategies:
            trace = run_strategy(
                strategy,
                selected,
                question,
                client,
                policy=policy,
                max_response_tokens=config.max_response_tokens,
            )
            results.append((trace, score_trace(trace, question)))
        return results

    config.out.mkdir(parents=True, exist_ok=True)
    all_traces: list[StrategyTrace] = []
    all_records: list[EvalRecord] = []
    status, error_text = "complete", None
    executor = ThreadPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    with (config.out / "traces.jsonl").open("w", encoding="utf-8") as traces_file, (
        config.out / "records.jsonl"
    ).open("w", encoding="utf-8") as records_file:
        try:
            results: Iterable = executor.map(work, questions) if executor else map(work, questions)
            for per_question in results:
                for trace, record in per_question:
                    all_traces.append(trace)
                    all_records.append(record)
                    traces_file.write(_json_line(trace_to_dict(trace)))
                    records_file.write(_json_line(record_to_dict(record, trace)))
        except Exception as exc:
            status, error_text = "failed", str(exc)
            raise
        finally:
            if executor is not None:
                executor.shutdown(wait=False, cancel_futures=True)
            # Written even on failure so a crashed run leaves a partial
            # manifest next to whatever traces/records completed.
            report = aggregate(all_records, all_traces, config.nm_denominator)
            _write_run_outputs(config, report, all_traces, len(questions), status, error_text)
    print(f"placement={config.placement} backend={config.backend} k={config.k}")
    print(format_report(report))
    print(f"usage: {client.ledger.snapshot()}")
    print(f"wrote {config.out}")
    return report


def _write_run_outputs(
    config: RunConfig,
    report: EvalReport,
    traces: Sequence[StrategyTrace],
    num_questions: int,
    status: str,
    error_text: str | None,
) -> None:
    (config.out / "report.json").write_text(
        json.dumps(report_to_dict(report), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    with (config.out / "report.csv").open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(_REPORT_COLUMNS)
        for row in report.strategies:
            writer.writerow([getattr(row, column) for column in _REPORT_COLUMNS])
    with (config.out / "tokens.csv").open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["strategy", "question_id", "calls", "prompt_tokens", "completion_tokens"])
        for trace in traces:
            writer.writerow(
                [
                    trace.strategy.value,
                    trace.question_id,
                    len(trace.exchanges),
                    trace.prompt_tokens_total,
                    trace.completion_tokens_total,
                ]
            )
    manifest = {
        "command": "run",
        "status": status,
        "error": error_text,
        "num_questions": num_questions,
        "template_version": TEMPLATE_VERSION,
        "seed": config.seed,
        "config": config_to_dict(config),
        "outputs": ["traces.jsonl", "records.jsonl", "report.json", "report.csv", "tokens.csv"],
    }
    (config.out / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def cmd_run(config: RunConfig) -> dict[str, EvalReport]:
    """Run every configured strategy; placement 'sweep' runs three modes."""
    config.validate("run")
    if config.placement != _SWEEP:
        return {config.placement: _run_single(config)}
    reports: dict[str, EvalReport] = {}
    for mode in _SWEEP_MODES:
        sub = replace(
            config,
            placement=mode.value,
            out=config.out / mode.value,
            strategies=list(config.strategies),
            unknown_patterns=list(config.unknown_patterns),
        )
        reports[mode.value] = _run_single(sub)
    config.out.mkdir(parents=True, exist_ok=True)
    with (config.out / "sweep.csv").open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["placement", *_REPORT_COLUMNS])
        for mode in _SWEEP_MODES:
            for row in reports[mode.value].strategies:
                writer.writerow(
                    [mode.value, *[getattr(row, column) for column in _REPORT_COLUMNS]]
                )
    print(f"wrote {config.out / 'sweep.csv'}")
    return reports


def cmd_report(records_path: Path, nm_denominator: str = "pool") -> EvalReport:
    """Recompute and print aggregates from a stored records file (no client)."""
    path = records_path / "records.jsonl" if records_path.is_dir() else records_path
    if not path.exists():
        raise ValueError(f"records file not found: {path}")
    records: list[EvalRecord] = []
    tokens: list[TraceTokens] = []
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            records.append(
                EvalRecord(
                    question_id=row["question_id"],
                    strategy=row["strategy"],
                    em=int(row["em"]),
                    f1=float(row["f1"]),
                    is_unknown=bool(row["is_unknown"]),
                    pool_contains_gold=row["pool_contains_gold"],
                    nm_event=row["nm_event"],
                )
            )
            tokens.append(
                TraceTokens(
                    strategy=row["strategy"],
                    question_id=row["question_id"],
                    prompt_tokens_total=int(row["prompt_tokens_total"]),
                    completion_tokens_total=int(row["completion_tokens_total"]),
                )
            )
    report = aggregate(records, tokens, nm_denominator)
    print(format_report(report))
    return report


def _build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", required=True, type=Path, help="YAML config file")
    shared.add_argument("--out", type=Path, help="output directory override")
    shared.add_argument("--k", type=int, help="number of passages override")
    shared.add_argument("--seed", type=int, help="rng seed override")
    shared.add_argument("--backend", choices=_BACKENDS, help="backend override")
    shared.add_argument(
        "--placement",
        choices=[m.value for m in PlacementMode] + [_SWEEP],
        help="gold placement mode override",
    )
    shared.add_argument("--strategies", help="comma-separated strategy names, or 'all'")
    shared.add_argument("--workers", type=int, help="question-level worker count")
    shared.add_argument(
        "--nm-denominator", dest="nm_denominator", choices=["pool", "all"],
        help="no-match rate denominator",
    )
    shared.add_argument(
        "--max-response-tokens", dest="max_response_tokens", type=int,
        help="per-call response token cap",
    )
    parser = argparse.ArgumentParser(
        prog="ragfuse",
        description="Compare strategies for feeding top-k retrieved passages to an LLM.",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("index", parents=[shared], help="build and persist the BM25 index")
    commands.add_parser(
        "filter", parents=[shared], help="drop questions the model answers closed-book"
    )
    commands.add_parser("run", parents=[shared], help="run strategies and score them")
    report = commands.add_parser("report", help="recompute aggregates from stored records")
    report.add_argument("records", type=Path, help="run output directory or records.jsonl path")
    report.add_argument(
        "--nm-denominator", dest="nm_denominator", choices=["pool", "all"], default="pool"
    )
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "report":
            cmd_report(args.records, args.nm_denominator)
            return 0
        config = apply_overrides(load_config(args.config), args)
        if args.command == "index":
            cmd_index(config)
        elif args.command == "filter":
            cmd_filter(config)
        else:
            cmd_run(config)
        return 0
    except (
        CorpusError,
        ValueError,
        OSError,
        BudgetError,
        TransportError,
        ScriptError,
        RuleError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
