"""Seed corpus loading, validation, and round-trips."""
from __future__ import annotations

import json

import pytest

from mathsynth.corpus import (
    Corpus,
    CorpusError,
    SeedProblem,
    corpus_stats,
    load_corpus,
    problem_from_record,
    question_hash,
    save_corpus,
)


def test_seed_problem_rejects_blank_fields():
    with pytest.raises(CorpusError):
        SeedProblem(id="", question="q", answer="1", difficulty=3.0)
    with pytest.raises(CorpusError):
        SeedProblem(id="a", question="   ", answer="1", difficulty=3.0)
    with pytest.raises(CorpusError):
        SeedProblem(id="a", question="q", answer="", difficulty=3.0)


@pytest.mark.parametrize("bad", [True, False, "7", None, float("nan"), float("inf")])
def test_seed_problem_rejects_bad_difficulty(bad):
    with pytest.raises(CorpusError):
        SeedProblem(id="a", question="q", answer="1", difficulty=bad)


def test_extra_keys_survive_round_trip(tmp_path):
    p = SeedProblem(
        id="a",
        question="What is 2+2?",
        answer="4",
        difficulty=1.5,
        source="unit",
        extra={"topic": "arith", "year": 2020},
    )
    rec = p.to_record()
    assert list(rec)[:5] == ["id", "question", "answer", "difficulty", "source"]
    assert rec["topic"] == "arith" and rec["year"] == 2020
    assert problem_from_record(rec) == p

    path = tmp_path / "c.jsonl"
    save_corpus(Corpus(problems=(p,)), path)
    assert load_corpus(path).problems == (p,)


def test_source_omitted_when_empty():
    p = SeedProblem(id="a", question="q", answer="1", difficulty=2.0)
    assert "source" not in p.to_record()


def test_default_id_is_question_hash():
    rec = {"question": "What   is\n 2+2?", "answer": "4", "difficulty": 1.0}
    p = problem_from_record(rec)
    assert p.id == question_hash("What is 2+2?")
    # hash ignores whitespace layout, not content
    assert question_hash("a b") != question_hash("a c")
    assert question_hash(" a\tb \n") == question_hash("a b")


def test_source_tag_fills_missing_source():
    rec = {"question": "q", "answer": "1", "difficulty": 1.0}
    assert problem_from_record(rec, source_tag="bundle").source == "bundle"
    rec["source"] = "explicit"
    assert problem_from_record(rec, source_tag="bundle").source == "explicit"


def test_load_reports_line_numbers(tmp_path):
    path = tmp_path / "bad.jsonl"
    rows = [
        {"id": "a", "question": "q1", "answer": "1", "difficulty": 1.0},
        {"id": "b", "question": "q2", "answer": "2"},
    ]
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
    with pytest.raises(CorpusError, match="line 2"):
        load_corpus(path)


def test_load_rejects_duplicate_ids_with_first_seen_line(tmp_path):
    path = tmp_path / "dup.jsonl"
    rows = [
        {"id": "a", "question": "q1", "answer": "1", "difficulty": 1.0},
        {"id": "b", "question": "q2", "answer": "2", "difficulty": 2.0},
        {"id": "a", "question": "q3", "answer": "3", "difficulty": 3.0},
    ]
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
    with pytest.raises(CorpusError) as exc:
        load_corpus(path)
    msg = str(exc.value)
    assert "line 3" in msg and "line 1" in msg and "'a'" in msg


def test_load_rejects_duplicate_question_text(tmp_path):
    path = tmp_path / "dupq.jsonl"
    rows = [
        {"id": "a", "question": "same question", "answer": "1", "difficulty": 1.0},
        {"id": "b", "question": "same question", "answer": "2", "difficulty": 2.0},
    ]
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
    with pytest.raises(CorpusError, match="line 2"):
        load_corpus(path)


def test_load_skips_blank_lines_and_names_corpus(tmp_path):
    path = tmp_path / "blanks.jsonl"
    rec = {"id": "a", "question": "q", "answer": "1", "difficulty": 1.0}
    path.write_text("\n" + json.dumps(rec) + "\n\n", encoding="utf-8")
    corpus = load_corpus(path, source_tag="x")
    assert len(corpus) == 1 and corpus.name == "x"
    assert load_corpus(path).name == "blanks"


def test_by_id_lookup(toy_corpus):
    table = toy_corpus.by_id()
    assert table["q03b"].difficulty == 6.0
    assert "missing" not in table


def test_corpus_stats(toy_corpus):
    stats = corpus_stats(toy_corpus)
    assert stats.total == 20
    assert stats.per_difficulty == {3.0: 10, 6.0: 10}
    assert sum(stats.per_source.values()) == 20
