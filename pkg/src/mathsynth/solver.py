"""Solution generation with format and degeneracy gates.

Solutions for synthesized questions are produced by a long-form reasoning
model, with the parent problems and answers supplied as auxiliary context.
Each attempt must end in a well-formed boxed answer and stay under the 2/3-gram
repetition thresholds; failing attempts are regenerated up to a bound.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from . import jsonl
from .corpus import SeedProblem
from .prompts import render_solution_prompt as _render_solution_prompt
from .providers import ChatClient, ChatRequest, ProviderError, map_bounded
from .synthesis import SynthesizedQuestion

_TOKEN = re.compile(r"\w+|[^\w\s]")
_BOXED = "\\boxed{"


class SolverError(ValueError):
    """Invalid solver inputs or configuration."""


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = 0.6
    top_p: float = 0.95
    top_k: int = 40
    min_p: float = 0.0
    max_tokens: int = 32768


@dataclass(frozen=True)
class GateConfig:
    require_boxed: bool = True
    max_duplicate_2gram_ratio: float = 0.60
    max_duplicate_3gram_ratio: float = 0.40
    max_consecutive_repeat: int = 10
    max_attempts: int = 3
    sampling: SamplingParams = field(default_factory=SamplingParams)

    def __post_init__(self) -> None:
        for name in ("max_duplicate_2gram_ratio", "max_duplicate_3gram_ratio"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise SolverError(f"{name} must be in [0, 1], got {value}")
        if self.max_attempts < 1:
            raise SolverError("max_attempts must be at least 1")
        if self.max_consecutive_repeat < 1:
            raise SolverError("max_consecutive_repeat must be at least 1")


def extract_boxed(text: str) -> str | None:
    """Content of the last \\boxed{...}, with nested braces balanced.

    Returns None when the token is absent, the braces never close, or the
    content is empty after trimming.
    """
    start = text.rfind(_BOXED)
    if start == -1:
        return None
    depth = 1
    pos = start + len(_BOXED)
    for i in range(pos, len(text)):
        ch = text[i]
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                content = text[pos:i].strip()
                return content or None
    return None


def tokenize(text: str) -> list[str]:
    """Lowercase word and punctuation tokens; the unit for n-gram statistics."""
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True)
class NgramStats:
    n: int
    total: int
    distinct: int
    duplicate_ratio: float
    max_consecutive: int


def ngram_degeneracy(text: str | Sequence[str], n: int) -> NgramStats:
    """Repetition statistics over n-grams of the tokenized text.

    duplicate_ratio counts overlapping n-grams: 1 - distinct/total.
    max_consecutive is the longest run of back-to-back identical n-token
    chunks, scanned at every phase offset, so a phrase looping with period n
    is measured by how many times it repeats, not by overlapping-window
    coincidence. Texts shorter than n tokens score 0 on both.
    """
    tokens = list(text) if not isinstance(text, str) else tokenize(text)
    if n < 1:
        raise SolverError("n must be positive")
    total = len(tokens) - n + 1
    if total < 1:
        return NgramStats(n=n, total=0, distinct=0, duplicate_ratio=0.0, max_consecutive=0)
    grams = [tuple(tokens[i : i + n]) for i in range(total)]
    distinct = len(set(grams))
    ratio = 1.0 - distinct / total

    longest = 1
    for phase in range(n):
        run = 0
        previous = None
        for start in range(phase, len(tokens) - n + 1, n):
            chunk = tuple(tokens[start : start + n])
            run = run + 1 if chunk == previous else 1
            previous = chunk
            longest = max(longest, run)
    return NgramStats(
        n=n, total=total, distinct=distinct, duplicate_ratio=ratio, max_consecutive=longest
    )


@dataclass(frozen=True)
class GateReport:
    passed: bool
    final_answer: str
    failures: tuple[str, ...]
    stats: tuple[NgramStats, ...]

    def to_record(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "final_answer": self.final_answer,
            "failures": list(self.failures),
            "stats": [
                {
                    "n": s.n,
                    "total": s.total,
                    "distinct": s.distinct,
                    "duplicate_ratio": s.duplicate_ratio,
                    "max_consecutive": s.max_consecutive,
                }
                for s in self.stats
            ],
        }


def check_gates(solution_text: str, cfg: GateConfig | None = None) -> GateReport:
    """Apply the boxed-answer and repetition gates; a gate fails only above its threshold."""
    cfg = cfg or GateConfig()
    failures: list[str] = []
    boxed = extract_boxed(solution_text)
    if cfg.require_boxed and boxed is None:
        failures.append("missing, empty, or unbalanced boxed answer")
    tokens = tokenize(solution_text)
    thresholds = {2: cfg.max_duplicate_2gram_ratio, 3: cfg.max_duplicate_3gram_ratio}
    stats = []
    for n, limit in thresholds.items():
        st = ngram_degeneracy(tokens, n)
        stats.append(st)
        if st.duplicate_ratio > limit:
            failures.append(
                f"{n}-gram duplicate ratio {st.duplicate_ratio:.3f} exceeds {limit}"
            )
        if st.max_consecutive > cfg.max_consecutive_repeat:
            failures.append(
                f"{n}-gram consecutive repeat run {st.max_consecutive} exceeds "
                f"{cfg.max_consecutive_repeat}"
            )
    return GateReport(
        passed=not failures,
        final_answer=boxed or "",
        failures=tuple(failures),
        stats=tuple(stats),
    )


def render_solution_prompt(
    question: SynthesizedQuestion, parents: tuple[SeedProblem, SeedProblem]
) -> str:
    """Prompt for solving a synthesized question with its recorded parents as context."""
    given = {p.id for p in parents}
    recorded = {question.parent_low_id, question.parent_high_id}
    if given != recorded:
        raise SolverError(
            f"parents {sorted(given)} do not match the recorded pair {sorted(recorded)}"
        )
    low, high = sorted(parents, key=lambda p: p.difficulty)
    return _render_solution_prompt(question.question, low, high)


@dataclass(frozen=True)
class SolutionRecord:
    question_id: str
    solution_text: str
    final_answer: str
    attempts: int
    status: str
    gate_report: GateReport

    def __post_init__(self) -> None:
        if self.status not in ("accepted", "failed"):
            raise SolverError(f"unknown status {self.status!r}")
        if self.attempts < 1:
            raise SolverError("attempts must be at least 1")
        if self.status == "accepted" and not (self.gate_report.passed and self.final_answer):
            raise SolverError("accepted record must carry a passing gate report and an answer")

    def to_record(self) -> dict[str, Any]:
        return {
            "question_id": self.question_id,
            "solution": self.solution_text,
            "final_answer": self.final_answer,
            "attempts": self.attempts,
            "status": self.status,
        }


def solve_with_gates(
    question: SynthesizedQuestion,
    parents: tuple[SeedProblem, SeedProblem],
    client: ChatClient,
    model: str,
    cfg: GateConfig | None = None,
) -> SolutionRecord:
    """Generate, gate-check, and regenerate up to max_attempts; the prompt never changes.

    Each attempt carries a distinct cache salt so a regeneration is a fresh
    sample instead of a cache replay of the rejected one. Provider errors
    count as failed attempts.
    """
    cfg = cfg or GateConfig()
    if question.status != "verified":
        raise SolverError(
            f"{question.id} has status {question.status!r}; only verified questions are solved"
        )
    prompt = render_solution_prompt(question, parents)
    report = GateReport(passed=False, final_answer="", failures=("no attempt ran",), stats=())
    text = ""
    for attempt in range(1, cfg.max_attempts + 1):
        request = ChatRequest.user(
            model,
            prompt,
            temperature=cfg.sampling.temperature,
            max_tokens=cfg.sampling.max_tokens,
            top_p=cfg.sampling.top_p,
            top_k=cfg.sampling.top_k,
            min_p=cfg.sampling.min_p,
            cache_salt=f"solve:{question.id}:{attempt}",
        )
        try:
            text = client.complete(request).content
        except ProviderError as exc:
            report = GateReport(
                passed=False, final_answer="", failures=(f"provider: {exc}",), stats=()
            )
            continue
        report = check_gates(text, cfg)
        if report.passed:
            return SolutionRecord(
                question_id=question.id,
                solution_text=text,
                final_answer=report.final_answer,
                attempts=attempt,
                status="accepted",
                gate_report=report,
            )
    return SolutionRecord(
        question_id=question.id,
        solution_text=text,
        final_answer="",
        attempts=cfg.max_attempts,
        status="failed",
        gate_report=report,
    )


def solve_dataset(
    questions: Sequence[SynthesizedQuestion],
    parents_by_id: dict[str, SeedProblem],
    client: ChatClient,
    model: str,
    cfg: GateConfig | None = None,
    *,
    max_in_flight: int = 8,
) -> list[SolutionRecord]:
    """Solve every verified question; caller filters statuses beforehand if needed."""
    cfg = cfg or GateConfig()

    def run_one(question: SynthesizedQuestion) -> SolutionRecord:
        try:
            parents = (
                parents_by_id[question.parent_low_id],
                parents_by_id[question.parent_high_id],
            )
        except KeyError as exc:
            raise SolverError(f"{question.id}: unknown parent id {exc}") from None
        return solve_with_gates(question, parents, client, model, cfg)

    return map_bounded(run_one, list(questions), max_in_flight)


def save_solutions(records: Sequence[SolutionRecord], path: str | Path) -> None:
    jsonl.write_records(path, (r.to_record() for r in records))


def save_gate_reports(records: Sequence[SolutionRecord], path: str | Path) -> None:
    jsonl.write_records(
        path,
        (
            {"question_id": r.question_id, "attempts": r.attempts, "status": r.status}
            | r.gate_report.to_record()
            for r in records
        ),
    )
