"""The six passage-integration strategies and the majority-vote reducer."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .corpus import Passage, Question
from .evaluation import normalize_answer
from .llm import CompletionClient, CompletionRequest, CompletionResponse
from .prompts import (
    DEFAULT_UNKNOWN_POLICY,
    UNKNOWN,
    Answer,
    PromptKind,
    UnknownPolicy,
    classify_response,
    render_concatenation,
    render_distill,
    render_post_fusion_single,
    render_pruning,
    render_summary,
)


class Strategy(str, Enum):
    CONCAT = "concat"
    POST_FUSION = "post_fusion"
    PRUNING = "pruning"
    SUMMARY = "summary"
    CONCAT_PF = "concat_pf"
    PF_CONCAT = "pf_concat"


@dataclass(frozen=True)
class Exchange:
    """One prompt/response round trip, keyed for scripted replay."""

    kind: PromptKind
    exchange_key: str
    request: CompletionRequest
    response: CompletionResponse


@dataclass(frozen=True)
class StrategyTrace:
    """Complete audit record of one strategy run on one question."""

    strategy: Strategy
    question_id: str
    passage_ids: tuple[str, ...]
    exchanges: tuple[Exchange, ...]
    final: Answer
    rounds_used: int
    finalized_by_vote: bool = False
    off_pool: bool = False
    per_passage_answers: tuple[Answer, ...] | None = None
    candidate_pool: tuple[str, ...] | None = None
    prompt_tokens_total: int = 0
    completion_tokens_total: int = 0


def majority_vote(answers: Sequence[Answer], ranks: Sequence[int]) -> Answer:
    """Pick the most common non-Unknown answer, comparing normalized strings.

    Ties break by higher count, then lowest supporting rank, then
    lexicographically smallest normalized string; the winner's reported text
    is the raw string from its lowest-ranked supporter. All Unknown (or empty
    input) yields Unknown.
    """
    if len(answers) != len(ranks):
        raise ValueError(
            f"got {len(answers)} answers but {len(ranks)} ranks"
        )
    groups: dict[str, list[tuple[int, str]]] = {}
    for answer, rank in zip(answers, ranks):
        if answer.is_unknown:
            continue
        groups.setdefault(normalize_answer(answer.text), []).append((rank, answer.text))
    if not groups:
        return UNKNOWN
    best = min(
        groups.items(),
        key=lambda item: (-len(item[1]), min(rank for rank, _ in item[1]), item[0]),
    )
    _, raw = min(best[1])
    return Answer.of(raw)


def _require_passages(passages: Sequence[Passage]) -> None:
    if not passages:
        raise ValueError("strategy needs at least one passage")


def _call(
    client: CompletionClient,
    kind: PromptKind,
    exchange_key: str,
    prompt: str,
    question: Question,
    max_response_tokens: int,
) -> Exchange:
    request = CompletionRequest(
        prompt_text=prompt,
        max_response_tokens=max_response_tokens,
        question_id=question.question_id,
        exchange_key=exchange_key,
    )
    try:
        response = client.complete(request)
    except Exception as exc:
        exc.args = (f"question {question.question_id} ({exchange_key}): {exc}",)
        raise
    return Exchange(kind=kind, exchange_key=exchange_key, request=request, response=response)


def _finish(
    strategy: Strategy,
    question: Question,
    passages: Sequence[Passage],
    exchanges: Sequence[Exchange],
    final: Answer,
    rounds_used: int,
    finalized_by_vote: bool = False,
    off_pool: bool = False,
    per_passage_answers: Sequence[Answer] | None = None,
    candidate_pool: Sequence[str] | None = None,
) -> StrategyTrace:
    return StrategyTrace(
        strategy=strategy,
        question_id=question.question_id,
        passage_ids=tuple(p.passage_id for p in passages),
        exchanges=tuple(exchanges),
        final=final,
        rounds_used=rounds_used,
        finalized_by_vote=finalized_by_vote,
        off_pool=off_pool,
        per_passage_answers=tuple(per_passage_answers) if per_passage_answers is not None else None,
        candidate_pool=tuple(candidate_pool) if candidate_pool is not None else None,
        prompt_tokens_total=sum(e.response.prompt_tokens for e in exchanges),
        completion_tokens_total=sum(e.response.completion_tokens for e in exchanges),
    )


def _per_passage_round(
    passages: Sequence[Passage],
    question: Question,
    client: CompletionClient,
    policy: UnknownPolicy,
    max_response_tokens: int,
) -> tuple[list[Exchange], list[Answer]]:
    exchanges: list[Exchange] = []
    answers: list[Answer] = []
    for index, passage in enumerate(passages):
        prompt = render_post_fusion_single(passage, question, sentinel=policy.sentinel)
        exchange = _call(
            client, PromptKind.POST_FUSION_SINGLE, f"pf:{index}", prompt, question,
            max_response_tokens,
        )
        exchanges.append(exchange)
        answers.append(classify_response(exchange.response.text, policy))
    return exchanges, answers


def run_concatenation(
    passages: Sequence[Passage],
    question: Question,
    client: CompletionClient,
    policy: UnknownPolicy = DEFAULT_UNKNOWN_POLICY,
    max_response_tokens: int = 64,
) -> StrategyTrace:
    """One call with every passage in the prompt."""
    _require_passages(passages)
    prompt = render_concatenation(list(passages), question, sentinel=policy.sentinel)
    exchange = _call(
        client, PromptKind.CONCATENATION, "concat", prompt, question, max_response_tokens
    )
    final = classify_response(exchange.response.text, policy)
    return _finish(Strategy.CONCAT, question, passages, [exchange], final, rounds_used=1)


def run_post_fusion(
    passages: Sequence[Passage],
    question: Question,
    client: CompletionClient,
    policy: UnknownPolicy = DEFAULT_UNKNOWN_POLICY,
    max_response_tokens: int = 64,
) -> StrategyTrace:
    """One call per passage, then a majority vote over the answers."""
    _require_passages(passages)
    exchanges, answers = _per_passage_round(
        passages, question, client, policy, max_response_tokens
    )
    final = majority_vote(answers, list(range(len(answers))))
    return _finish(
        Strategy.POST_FUSION,
        question,
        passages,
        exchanges,
        final,
        rounds_used=1,
        finalized_by_vote=True,
        per_passage_answers=answers,
    )


def run_pruning(
    passages: Sequence[Passage],
    question: Question,
    client: CompletionClient,
    policy: UnknownPolicy = DEFAULT_UNKNOWN_POLICY,
    max_response_tokens: int = 64,
) -> StrategyTrace:
    """One call that discards irrelevant passages before answering."""
    _require_passages(passages)
    prompt = render_pruning(list(passages), question, sentinel=policy.sentinel)
    exchange = _call(client, PromptKind.PRUNING, "pruning", prompt, question, max_response_tokens)
    final = classify_response(exchange.response.text, policy)
    return _finish(Strategy.PRUNING, question, passages, [exchange], final, rounds_used=1)


def run_summary(
    passages: Sequence[Passage],
    question: Question,
    client: CompletionClient,
    policy: UnknownPolicy = DEFAULT_UNKNOWN_POLICY,
    max_response_tokens: int = 64,
) -> StrategyTrace:
    """One call that condenses the passages before answering."""
    _require_passages(passages)
    prompt = render_summary(list(passages), question, sentinel=policy.sentinel)
    exchange = _call(client, PromptKind.SUMMARY, "summary", prompt, question, max_response_tokens)
    final = classify_response(exchange.response.text, policy)
    return _finish(Strategy.SUMMARY, question, passages, [exchange], final, rounds_used=1)


def run_concat_pf(
    passages: Sequence[Passage],
    question: Question,
    client: CompletionClient,
    policy: UnknownPolicy = DEFAULT_UNKNOWN_POLICY,
    max_response_tokens: int = 64,
) -> StrategyTrace:
    """Concatenation first; on Unknown, fall back to a post-fusion round."""
    _require_passages(passages)
    prompt = render_concatenation(list(passages), question, sentinel=policy.sentinel)
    first = _call(
        client, PromptKind.CONCATENATION, "concat", prompt, question, max_response_tokens
    )
    answer = classify_response(first.response.text, policy)
    if not answer.is_unknown:
        return _finish(Strategy.CONCAT_PF, question, passages, [first], answer, rounds_used=1)
    exchanges, answers = _per_passage_round(
        passages, question, client, policy, max_response_tokens
    )
    final = majority_vote(answers, list(range(len(answers))))
    return _finish(
        Strategy.CONCAT_PF,
        question,
        passages,
        [first, *exchanges],
        final,
        rounds_used=2,
        finalized_by_vote=True,
        per_passage_answers=answers,
    )


def run_pf_concat(
    passages: Sequence[Passage],
    question: Question,
    client: CompletionClient,
    policy: UnknownPolicy = DEFAULT_UNKNOWN_POLICY,
    max_response_tokens: int = 64,
) -> StrategyTrace:
    """Post-fusion round first, then a second call distills the candidates."""
    _require_passages(passages)
    exchanges, answers = _per_passage_round(
        passages, question, client, policy, max_response_tokens
    )
    survivors = [
        (passage, answer)
        for passage, answer in zip(passages, answers)
        if not answer.is_unknown
    ]
    if not survivors:
        return _finish(
            Strategy.PF_CONCAT,
            question,
            passages,
            exchanges,
            UNKNOWN,
            rounds_used=1,
            per_passage_answers=answers,
            candidate_pool=(),
        )
    survivor_passages = [passage for passage, _ in survivors]
    candidates = list(dict.fromkeys(answer.text for _, answer in survivors))
    prompt = render_distill(
        survivor_passages, question, candidates, sentinel=policy.sentinel
    )
    distill = _call(client, PromptKind.DISTILL, "distill", prompt, question, max_response_tokens)
    final = classify_response(distill.response.text, policy)
    off_pool = not final.is_unknown and normalize_answer(final.text) not in {
        normalize_answer(candidate) for candidate in candidates
    }
    return _finish(
        Strategy.PF_CONCAT,
        question,
        passages,
        [*exchanges, distill],
        final,
        rounds_used=2,
        off_pool=off_pool,
        per_passage_answers=answers,
        candidate_pool=candidates,
    )


_RUNNERS = {
    Strategy.CONCAT: run_concatenation,
    Strategy.POST_FUSION: run_post_fusion,
    Strategy.PRUNING: run_pruning,
    Strategy.SUMMARY: run_summary,
    Strategy.CONCAT_PF: run_concat_pf,
    Strategy.PF_CONCAT: run_pf_concat,
}


def run_strategy(
    strategy: Strategy,
    passages: Sequence[Passage],
    question: Question,
    client: CompletionClient,
    policy: UnknownPolicy = DEFAULT_UNKNOWN_POLICY,
    max_response_tokens: int = 64,
) -> StrategyTrace:
    """Dispatch to the runner for the given strategy."""
    return _RUNNERS[strategy](
        passages, question, client, policy=policy, max_response_tokens=max_response_tokens
    )
