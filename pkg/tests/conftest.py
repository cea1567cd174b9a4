"""Shared fixtures: the bundled toy corpus and small object factories."""

from __future__ import annotations

from pathlib import Path

import pytest
import yaml

from ragfuse.corpus import Passage, Question, chunk_corpus, load_corpus, load_questions
from ragfuse.retriever import build_index

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def toy_corpus_path() -> Path:
    return FIXTURES / "toy_corpus.jsonl"


@pytest.fixture(scope="session")
def toy_questions_path() -> Path:
    return FIXTURES / "toy_questions.jsonl"


@pytest.fixture(scope="session")
def toy_documents(toy_corpus_path):
    return load_corpus(toy_corpus_path)


@pytest.fixture(scope="session")
def toy_questions(toy_questions_path):
    return load_questions(toy_questions_path)


@pytest.fixture(scope="session")
def toy_passages(toy_documents):
    return chunk_corpus(toy_documents, 100)


@pytest.fixture(scope="session")
def toy_index(toy_passages):
    return build_index(toy_passages)


def make_passage(pid: str, text: str, title: str = "") -> Passage:
    return Passage(
        passage_id=pid,
        doc_id=pid.split("#")[0],
        title=title or pid.split("#")[0].replace("-", " ").title(),
        text=text,
        word_count=len(text.split()),
    )


def make_question(
    qid: str, text: str, answers: tuple[str, ...], gold: str | None = None
) -> Question:
    return Question(question_id=qid, text=text, gold_answers=answers, gold_passage_id=gold)


def write_config(path: Path, **fields) -> Path:
    """Write a YAML run config; corpus/questions default to the toy fixture."""
    config = {
        "corpus": str(FIXTURES / "toy_corpus.jsonl"),
        "questions": str(FIXTURES / "toy_questions.jsonl"),
        "backend": "rule",
        "k": 3,
        "model_input_budget": 2048,
        "seed": 7,
    }
    config.update(fields)
    for key in ("out", "corpus", "questions", "script", "rankings", "cache"):
        if key in config and config[key] is not None:
            config[key] = str(config[key])
    path.write_text(yaml.safe_dump(config), encoding="utf-8")
    return path
