"""Okapi BM25 inverted index, top-k retrieval, and gold-passage placement."""

from __future__ import annotations

import json
import math
import random
import re
from collections import Counter
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

from .corpus import Passage, Question

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


class PlacementMode(str, Enum):
    RETRIEVAL_ORDER = "retrieval_order"
    GOLD_TOP = "gold_top"
    GOLD_BOTTOM = "gold_bottom"
    GOLD_RANDOM = "gold_random"
    NO_GOLD = "no_gold"


@dataclass(frozen=True)
class RetrievalConfig:
    k: int = 5
    max_passage_words: int = 100
    model_input_budget: int = 4096
    bm25_k1: float = 1.2
    bm25_b: float = 0.75
    placement_mode: PlacementMode = PlacementMode.NO_GOLD
    rng_seed: int = 0

    def validate(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.max_passage_words < 1:
            raise ValueError("max_passage_words must be >= 1")
        if self.k * self.max_passage_words >= self.model_input_budget:
            raise ValueError(
                f"k * max_passage_words must stay below the model input budget: "
                f"{self.k} * {self.max_passage_words} >= {self.model_input_budget}"
            )
        if self.bm25_k1 < 0:
            raise ValueError("bm25_k1 must be >= 0")
        if not 0 <= self.bm25_b <= 1:
            raise ValueError("bm25_b must be in [0, 1]")


@dataclass(frozen=True)
class RankedList:
    question_id: str
    entries: tuple[tuple[str, float], ...]
    gold_inserted: bool = False

    def passage_ids(self) -> list[str]:
        return [pid for pid, _ in self.entries]


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric characters."""
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


class Bm25Index:
    """Immutable inverted index over passages with Okapi BM25 scoring.

    Only passage text is indexed; titles do not participate in scoring.
    """

    def __init__(self, passages: list[Passage], k1: float = 1.2, b: float = 0.75):
        if not passages:
            raise ValueError("cannot build an index over an empty passage list")
        self.k1 = k1
        self.b = b
        self.passages = {p.passage_id: p for p in passages}
        # Stable id order fixes tie-breaking and score-summation order.
        self.passage_ids = sorted(self.passages)
        self.num_passages = len(self.passage_ids)
        self.lengths: dict[str, int] = {}
        self.term_freqs: dict[str, Counter[str]] = {}
        self.doc_freq: Counter[str] = Counter()
        total_length = 0
        for pid in self.passage_ids:
            tokens = tokenize(self.passages[pid].text)
            self.lengths[pid] = len(tokens)
            self.term_freqs[pid] = Counter(tokens)
            total_length += len(tokens)
            for term in set(tokens):
                self.doc_freq[term] += 1
        self.avg_length = total_length / self.num_passages
        self.postings: dict[str, list[str]] = {}
        for pid in self.passage_ids:
            for term in self.term_freqs[pid]:
                self.postings.setdefault(term, []).append(pid)

    def idf(self, term: str) -> float:
        df = self.doc_freq.get(term, 0)
        return math.log(1.0 + (self.num_passages - df + 0.5) / (df + 0.5))

    def scores(self, query: str) -> dict[str, float]:
        """BM25 score for every passage (zero scores included)."""
        totals = {pid: 0.0 for pid in self.passage_ids}
        for term in tokenize(query):
            postings = self.postings.get(term)
            if not postings:
                continue
            idf = self.idf(term)
            for pid in postings:
                tf = self.term_freqs[pid][term]
                length_norm = 1.0 - self.b + self.b * self.lengths[pid] / self.avg_length
                totals[pid] += idf * tf * (self.k1 + 1.0) / (tf + self.k1 * length_norm)
        return totals


def build_index(passages: list[Passage], k1: float = 1.2, b: float = 0.75) -> Bm25Index:
    return Bm25Index(passages, k1=k1, b=b)


def retrieve_top_k(index: Bm25Index, query: str, k: int, question_id: str = "") -> RankedList:
    """Return the k highest-scoring passages, score-descending.

    All passages are rankable (zero-score passages included); ties break by
    passage_id ascending. Returns min(k, N) entries.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    scores = index.scores(query)
    ranked = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
    return RankedList(question_id=question_id, entries=tuple(ranked[:k]))


def apply_gold_placement(
    ranked: RankedList, question: Question, config: RetrievalConfig
) -> RankedList:
    """Reposition or insert the question's gold passage per the placement mode.

    When the gold passage is absent the lowest-ranked entry is evicted so the
    list keeps its length; inserted entries carry a 0.0 score sentinel since
    the retriever never scored them.
    """
    mode = config.placement_mode
    if mode is PlacementMode.NO_GOLD:
        return ranked
    gold_id = question.gold_passage_id
    if gold_id is None:
        raise ValueError(
            f"placement mode {mode.value} requires a gold_passage_id "
            f"(question {question.question_id!r})"
        )
    entries = list(ranked.entries)
    present = [i for i, (pid, _) in enumerate(entries) if pid == gold_id]
    if present:
        if mode in (PlacementMode.RETRIEVAL_ORDER, PlacementMode.GOLD_RANDOM):
            return ranked
        gold_entry = entries.pop(present[0])
        if mode is PlacementMode.GOLD_TOP:
            entries.insert(0, gold_entry)
        else:
            entries.append(gold_entry)
        return replace(ranked, entries=tuple(entries), gold_inserted=False)

    entries.pop()
    if mode is PlacementMode.GOLD_TOP:
        position = 0
    elif mode is PlacementMode.GOLD_BOTTOM:
        position = len(entries)
    else:
        # RETRIEVAL_ORDER and GOLD_RANDOM insert at a seed-deterministic
        # uniform position; the per-question RNG keeps reruns identical.
        rng = random.Random(f"{config.rng_seed}:{ranked.question_id}")
        position = rng.randrange(len(entries) + 1)
    entries.insert(position, (gold_id, 0.0))
    return replace(ranked, entries=tuple(entries), gold_inserted=True)


def load_rankings(path: str | Path) -> dict[str, list[str]]:
    """Load precomputed rankings (e.g. DPR output) keyed by question id.

    File format: one JSON record per line with fields
    {question_id, ranked_passage_ids: [string]}.
    """
    rankings: dict[str, list[str]] = {}
    with Path(path).open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({e.msg})") from e
            for key in ("question_id", "ranked_passage_ids"):
                if key not in record:
                    raise ValueError(f"{path}:{lineno}: missing field {key!r}")
            qid = str(record["question_id"])
            ids = [str(p) for p in record["ranked_passage_ids"]]
            if qid in rankings:
                raise ValueError(f"{path}:{lineno}: duplicate question_id {qid!r}")
            rankings[qid] = ids
    return rankings


def ranked_list_from_ids(question_id: str, passage_ids: list[str], k: int) -> RankedList:
    """Build a RankedList from externally supplied ids (reciprocal-rank scores)."""
    top = passage_ids[:k]
    if len(set(top)) != len(top):
        raise ValueError(f"duplicate passage ids in ranking for question {question_id!r}")
    entries = tuple((pid, 1.0 / (i + 1)) for i, pid in enumerate(top))
    return RankedList(question_id=question_id, entries=entries)
