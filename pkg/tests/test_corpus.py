"""Tests for document loading and fixed-size passage chunking."""

import pytest

from ragfuse.corpus import (
    CorpusError,
    Document,
    Question,
    chunk_corpus,
    chunk_document,
    load_corpus,
    load_questions,
)


def doc(doc_id: str, words: int) -> Document:
    return Document(doc_id=doc_id, title=doc_id, body=" ".join(f"w{i}" for i in range(words)))


def test_chunk_250_words_makes_100_100_50():
    passages = chunk_document(doc("d", 250), 100)
    assert [p.word_count for p in passages] == [100, 100, 50]
    assert [p.passage_id for p in passages] == ["d#0", "d#1", "d#2"]


def test_chunk_empty_body_yields_no_passages():
    assert chunk_document(Document("d", "d", ""), 100) == []


def test_chunk_exact_fit_is_one_full_passage():
    passages = chunk_document(doc("d", 100), 100)
    assert len(passages) == 1
    assert passages[0].word_count == 100


def test_chunks_partition_the_document_words():
    document = doc("d", 437)
    passages = chunk_document(document, 100)
    assert " ".join(p.text for p in passages) == document.body
    assert all(p.word_count == len(p.text.split()) for p in passages)
    assert all(p.title == document.title and p.doc_id == "d" for p in passages)


def test_chunk_rejects_nonpositive_max_words():
    with pytest.raises(ValueError):
        chunk_document(doc("d", 10), 0)


def test_chunk_corpus_preserves_document_order():
    passages = chunk_corpus([doc("a", 150), doc("b", 10)], 100)
    assert [p.passage_id for p in passages] == ["a#0", "a#1", "b#0"]


def test_load_corpus_two_records(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text(
        '{"id": "d1", "title": "One", "text": "alpha beta"}\n'
        '{"id": "d2", "title": "Two", "text": "gamma"}\n',
        encoding="utf-8",
    )
    documents = load_corpus(path)
    assert [d.doc_id for d in documents] == ["d1", "d2"]
    assert documents[0].body == "alpha beta"


def test_load_corpus_duplicate_id_rejected(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text(
        '{"id": "d1", "title": "One", "text": "a"}\n'
        '{"id": "d1", "title": "Again", "text": "b"}\n',
        encoding="utf-8",
    )
    with pytest.raises(CorpusError, match="duplicate document id"):
        load_corpus(path)


def test_load_corpus_missing_field_names_line(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text(
        '{"id": "d1", "title": "One", "text": "a"}\n{"id": "d2", "title": "Two"}\n',
        encoding="utf-8",
    )
    with pytest.raises(CorpusError, match=r":2: missing field 'text'"):
        load_corpus(path)


def test_load_corpus_invalid_json_names_line(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text('{"id": "d1"\n', encoding="utf-8")
    with pytest.raises(CorpusError, match=r":1: invalid JSON"):
        load_corpus(path)


def test_load_questions_keeps_alias_list(tmp_path):
    path = tmp_path / "questions.jsonl"
    path.write_text(
        '{"id": "q1", "question": "capital of France", "answers": ["Paris", "paris, France"]}\n',
        encoding="utf-8",
    )
    questions = load_questions(path)
    assert questions[0].gold_answers == ("Paris", "paris, France")
    assert questions[0].gold_passage_id is None


def test_load_questions_empty_answers_rejected(tmp_path):
    path = tmp_path / "questions.jsonl"
    path.write_text('{"id": "q1", "question": "x", "answers": []}\n', encoding="utf-8")
    with pytest.raises(CorpusError, match="non-empty"):
        load_questions(path)


def test_load_questions_empty_file(tmp_path):
    path = tmp_path / "questions.jsonl"
    path.write_text("", encoding="utf-8")
    assert load_questions(path) == []


def test_load_questions_reads_gold_passage_id(tmp_path):
    path = tmp_path / "questions.jsonl"
    path.write_text(
        '{"id": "q1", "question": "x", "answers": ["y"], "gold_passage_id": "d#0"}\n',
        encoding="utf-8",
    )
    assert load_questions(path)[0].gold_passage_id == "d#0"


def test_question_requires_gold_answers():
    with pytest.raises(CorpusError):
        Question(question_id="q", text="x", gold_answers=())


def test_toy_fixture_shape(toy_documents, toy_passages, toy_questions):
    assert len(toy_documents) == 40
    assert len(toy_passages) == 50
    assert len(toy_questions) == 20
    by_id = {p.passage_id: p for p in toy_passages}
    for question in toy_questions:
        assert question.gold_passage_id in by_id
