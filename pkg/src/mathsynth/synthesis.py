"""Question synthesis: render generation prompts, parse outputs, assign difficulty labels.

Two templates produce new questions from a pair of similar seed problems:
"hybrid" fuses both parents into one harder scenario, "decomposed" simplifies
the harder parent toward the easier one. Seed problems are also re-emitted
unchanged as the "original" category, giving three difficulty levels per seed
corpus.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Sequence

from . import jsonl
from .corpus import Corpus, SeedProblem
from .pairing import QuestionPair, select_generation_pair
from .prompts import render_generation_prompt
from .providers import ChatClient, ChatRequest, ProviderError, map_bounded

# Total order used by curriculum staging: easiest to hardest.
CATEGORIES = ("decomposed", "original", "hybrid")
GENERATION_TEMPLATES = ("hybrid", "decomposed")
STATUSES = ("unverified", "verified", "rejected")

NEW_PROBLEM_HEADER = re.compile(r"#New Problem#:?")
_TRAILING_HEADER = re.compile(r"(?m)^\s*#[A-Za-z][^#\n]*#:?\s*$|#[A-Za-z][^#\n]*#:")
_CHOICE_MARKER = re.compile(r"(?m)^\s*\(([A-E])\)")
PARENT_REFERENCES = ("Problem 1", "Problem 2")


class SynthesisError(ValueError):
    """Invalid synthesized-question data or request."""


class GenerationParseError(ValueError):
    """The provider output could not be turned into a usable question."""


@dataclass(frozen=True)
class SynthesizedQuestion:
    id: str
    question: str
    category: str
    nominal_difficulty: float
    parent_low_id: str
    parent_high_id: str
    raw_generation: str = ""
    status: str = "unverified"

    def __post_init__(self) -> None:
        if self.category not in GENERATION_TEMPLATES:
            raise SynthesisError(
                f"category must be one of {GENERATION_TEMPLATES}, got {self.category!r}; "
                "original items pass through as plain records"
            )
        if not self.id or not self.question.strip():
            raise SynthesisError("id and question must be non-empty")
        if self.status not in STATUSES:
            raise SynthesisError(f"unknown status {self.status!r}")
        if not self.parent_low_id or not self.parent_high_id:
            raise SynthesisError("both parent ids are required")

    def with_status(self, status: str) -> "SynthesizedQuestion":
        return replace(self, status=status)

    def to_record(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "question": self.question,
            "category": self.category,
            "nominal_difficulty": self.nominal_difficulty,
            "parent_low_id": self.parent_low_id,
            "parent_high_id": self.parent_high_id,
            "status": self.status,
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "SynthesizedQuestion":
        return cls(
            id=record["id"],
            question=record["question"],
            category=record["category"],
            nominal_difficulty=float(record["nominal_difficulty"]),
            parent_low_id=record["parent_low_id"],
            parent_high_id=record["parent_high_id"],
            raw_generation=record.get("raw_generation", ""),
            status=record.get("status", "unverified"),
        )


@dataclass(frozen=True)
class DifficultyRules:
    """Knobs for the nominal-difficulty formulas; defaults match the worked anchors."""

    hybrid_offset: float = 1.0

    def __post_init__(self) -> None:
        if self.hybrid_offset < 0:
            raise SynthesisError("hybrid_offset must be non-negative")


@dataclass(frozen=True)
class GenerationRequest:
    template: str
    pair: QuestionPair
    temperature: float = 0.7
    max_tokens: int = 4096

    def __post_init__(self) -> None:
        if self.template not in GENERATION_TEMPLATES:
            raise SynthesisError(f"unknown template {self.template!r}")
        if not 0.0 <= self.temperature <= 2.0:
            raise SynthesisError(f"temperature out of range: {self.temperature}")
        if self.max_tokens < 1:
            raise SynthesisError("max_tokens must be positive")

    def to_chat_request(self, model: str, cache_salt: str = "") -> ChatRequest:
        return ChatRequest.user(
            model,
            render_generation_prompt(self.template, self.pair),
            temperature=self.temperature,
            max_tokens=self.max_tokens,
            cache_salt=cache_salt,
        )


def multiple_choice_markers(text: str) -> list[str]:
    """Distinct line-leading option letters like "(A)"; two or more flags the text."""
    return sorted(set(_CHOICE_MARKER.findall(text)))


def parse_generation(output: str, template: str) -> str:
    """Extract the question body after the last "#New Problem#:" header.

    Rejects missing headers, empty bodies, trailing section headers after the
    body (commentary the prompt forbids), leaked parent references, and, for
    the decomposed template, multiple-choice option markers.
    """
    matches = list(NEW_PROBLEM_HEADER.finditer(output))
    if not matches:
        raise GenerationParseError("missing #New Problem# header")
    body = output[matches[-1].end() :].strip()
    if not body:
        raise GenerationParseError("empty problem body")
    if _TRAILING_HEADER.search(body):
        raise GenerationParseError("trailing section header after the problem body")
    for token in PARENT_REFERENCES:
        if token in body:
            raise GenerationParseError(f"body references {token!r}")
    if template == "decomposed" and len(multiple_choice_markers(body)) >= 2:
        raise GenerationParseError("multiple-choice markers in decomposed output")
    return body


def nominal_difficulty(
    category: str,
    d_low: float,
    d_high: float,
    rules: DifficultyRules | None = None,
) -> float:
    """Difficulty metadata for a synthesized question, from its parents' labels.

    hybrid targets above the harder parent (d_high + offset); decomposed
    targets between the parents (floor of the mean, clamped to d_low so the
    bound survives fractional labels). These labels drive curriculum ordering
    only; they are not measurements.
    """
    rules = rules or DifficultyRules()
    if not d_low < d_high:
        raise SynthesisError(f"need d_low < d_high, got {d_low} and {d_high}")
    if category == "hybrid":
        return float(d_high) + rules.hybrid_offset
    if category == "decomposed":
        return max(float(d_low), float(math.floor((d_low + d_high) / 2)))
    raise SynthesisError(f"no difficulty formula for category {category!r}")


@dataclass(frozen=True)
class SynthesisResult:
    """Outcome of one template over one corpus: questions plus per-seed skips and failures.

    `skipped` holds seeds with no usable pair; `failures` holds provider or
    parse errors. Every seed lands in exactly one of the three buckets.
    """

    template: str
    questions: tuple[SynthesizedQuestion, ...]
    skipped: tuple[tuple[str, str], ...]
    failures: tuple[tuple[str, str], ...]


def synthesize_category(
    corpus: Corpus,
    pairs: Sequence[QuestionPair],
    template: str,
    client: ChatClient,
    model: str,
    *,
    rules: DifficultyRules | None = None,
    temperature: float = 0.7,
    max_tokens: int = 4096,
    max_in_flight: int = 8,
) -> SynthesisResult:
    """Generate one question per pairable seed; one salted retry on parse failure."""
    if template not in GENERATION_TEMPLATES:
        raise SynthesisError(f"unknown template {template!r}")
    seeds = sorted(corpus.problems, key=lambda p: p.id)

    def run_one(seed: SeedProblem) -> tuple[str, Any]:
        pair = select_generation_pair(seed, pairs)
        if pair is None:
            return ("skip", (seed.id, "no pair above the similarity threshold"))
        request = GenerationRequest(
            template=template, pair=pair, temperature=temperature, max_tokens=max_tokens
        )
        last_reason = ""
        for attempt in (1, 2):
            salt = f"gen:{template}:{seed.id}:{attempt}"
            try:
                response = client.complete(request.to_chat_request(model, cache_salt=salt))
            except ProviderError as exc:
                return ("fail", (seed.id, f"provider: {exc}"))
            try:
                body = parse_generation(response.content, template)
            except GenerationParseError as exc:
                last_reason = str(exc)
                continue
            question = SynthesizedQuestion(
                id=f"{template}:{seed.id}",
                question=body,
                category=template,
                nominal_difficulty=nominal_difficulty(
                    template, pair.low.difficulty, pair.high.difficulty, rules
                ),
                parent_low_id=pair.low.id,
                parent_high_id=pair.high.id,
                raw_generation=response.content,
            )
            return ("ok", question)
        return ("fail", (seed.id, f"parse: {last_reason}"))

    outcomes = map_bounded(run_one, seeds, max_in_flight)
    questions = [payload for kind, payload in outcomes if kind == "ok"]
    skipped = [payload for kind, payload in outcomes if kind == "skip"]
    failures = [payload for kind, payload in outcomes if kind == "fail"]
    return SynthesisResult(
        template=template,
        questions=tuple(questions),
        skipped=tuple(skipped),
        failures=tuple(failures),
    )


def original_records(corpus: Corpus) -> list[dict[str, Any]]:
    """Seed problems re-emitted as the original category, trusted as-is.

    The extra `answer` field carries the official answer so the curriculum
    stage can use it as the training solution; generated categories get their
    solutions from the solver instead.
    """
    records = []
    for seed in sorted(corpus.problems, key=lambda p: p.id):
        records.append(
            {
                "id": f"original:{seed.id}",
                "question": seed.question,
                "category": "original",
                "nominal_difficulty": float(seed.difficulty),
                "parent_low_id": "",
                "parent_high_id": "",
                "status": "verified",
                "answer": seed.answer,
            }
        )
    return records


def save_questions(questions: Sequence[SynthesizedQuestion], path: str | Path) -> None:
    jsonl.write_records(path, (q.to_record() for q in questions))


def load_questions(path: str | Path) -> list[SynthesizedQuestion]:
    out = []
    for lineno, record in jsonl.read_records(path):
        try:
            out.append(SynthesizedQuestion.from_record(record))
        except (KeyError, SynthesisError) as exc:
            raise SynthesisError(f"{path}: line {lineno}: {exc}") from None
    return out


def save_skip_report(
    skipped: Sequence[tuple[str, str]],
    failures: Sequence[tuple[str, str]],
    path: str | Path,
) -> None:
    rows = [{"seed_id": sid, "reason": reason, "kind": "skip"} for sid, reason in skipped]
    rows += [{"seed_id": sid, "reason": reason, "kind": "failure"} for sid, reason in failures]
    rows.sort(key=lambda r: r["seed_id"])
    jsonl.write_records(path, rows)
