"""Curriculum construction: stage graded items from easiest to hardest and export SFT files.

Two plan shapes exist. The pure plan keeps one dataset's three categories in
their fixed difficulty order. The blended plan merges several graded datasets,
ranks whole categories by mean scored difficulty, and groups consecutive
categories into stages (two per stage by default), so a fine-tune can walk a
merged corpus from easy to hard.
"""
from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import jsonl
from .prompts import render_scoring_prompt
from .providers import ChatClient, ChatRequest, ProviderError, map_bounded
from .synthesis import CATEGORIES

SCORE_RANGE = (1.0, 10.0)
_SCORE_OVER_TEN = re.compile(r"(-?\d+(?:\.\d+)?)\s*/\s*10")
_FIRST_NUMBER = re.compile(r"-?\d+(?:\.\d+)?")


class CurriculumError(ValueError):
    """Invalid curriculum inputs or an impossible staging request."""


@dataclass(frozen=True)
class GradedItem:
    """One training example with its category label and difficulty metadata."""

    question_id: str
    question: str
    solution: str
    category_label: str
    difficulty_score: float | None = None

    def __post_init__(self) -> None:
        if not self.question_id or not self.category_label:
            raise CurriculumError("question_id and category_label must be non-empty")
        if not self.question.strip() or not self.solution.strip():
            raise CurriculumError(f"{self.question_id}: question and solution must be non-empty")

    def split_label(self) -> tuple[str, str]:
        """(dataset, category) parts of a "dataset/category" label; dataset may be ""."""
        if "/" in self.category_label:
            dataset, category = self.category_label.split("/", 1)
            return dataset, category
        return "", self.category_label


@dataclass(frozen=True)
class Stage:
    name: str
    items: tuple[GradedItem, ...]
    mean_difficulty: float
    categories: tuple[str, ...]


@dataclass(frozen=True)
class CurriculumPlan:
    stages: tuple[Stage, ...]
    grouping: int

    def __post_init__(self) -> None:
        if not self.stages:
            raise CurriculumError("a plan needs at least one stage")
        seen: set[str] = set()
        for stage in self.stages:
            for item in stage.items:
                if item.question_id in seen:
                    raise CurriculumError(
                        f"item {item.question_id!r} appears in more than one stage"
                    )
                seen.add(item.question_id)

    def total_items(self) -> int:
        return sum(len(stage.items) for stage in self.stages)


def _mean_difficulty(items: Sequence[GradedItem]) -> float:
    scores = [i.difficulty_score for i in items if i.difficulty_score is not None]
    if not scores:
        return 0.0
    return sum(scores) / len(scores)


def build_pure_curriculum(
    items: Sequence[GradedItem], *, allow_empty: bool = False
) -> CurriculumPlan:
    """Three stages in the fixed category order, items sorted by id within each.

    The fixed order wins over measured means: real data can put an easy-seed
    corpus's original questions below its decomposed ones, so a mean inversion
    is warned about, never an error.
    """
    buckets: dict[str, list[GradedItem]] = {c: [] for c in CATEGORIES}
    for item in items:
        _, category = item.split_label()
        if category not in buckets:
            raise CurriculumError(
                f"{item.question_id}: category {category!r} is not one of {CATEGORIES}"
            )
        buckets[category].append(item)
    stages = []
    for category in CATEGORIES:
        members = sorted(buckets[category], key=lambda i: i.question_id)
        if not members and not allow_empty:
            raise CurriculumError(
                f"category {category!r} has no items; pass allow_empty to emit it anyway"
            )
        if not members:
            warnings.warn(f"emitting empty stage for category {category!r}", stacklevel=2)
        stages.append(
            Stage(
                name=category,
                items=tuple(members),
                mean_difficulty=_mean_difficulty(members),
                categories=(category,),
            )
        )
    means = [s.mean_difficulty for s in stages if s.items]
    if any(b < a for a, b in zip(means, means[1:])):
        warnings.warn(
            "stage mean difficulties are not non-decreasing; fixed category order kept",
            stacklevel=2,
        )
    return CurriculumPlan(stages=tuple(stages), grouping=1)


@dataclass(frozen=True)
class DifficultyScore:
    question_id: str
    score: float
    scorer_tag: str

    def __post_init__(self) -> None:
        lo, hi = SCORE_RANGE
        if not lo <= self.score <= hi:
            raise CurriculumError(f"score {self.score} outside [{lo}, {hi}]")


def parse_score(text: str) -> float | None:
    """First number before "/10" if present, else the first standalone number."""
    match = _SCORE_OVER_TEN.search(text)
    if match is None:
        match = _FIRST_NUMBER.search(text)
    if match is None:
        return None
    return float(match.group(1) if match.lastindex else match.group(0))


def _clamp_score(value: float, question_id: str) -> float:
    lo, hi = SCORE_RANGE
    if value < lo or value > hi:
        warnings.warn(
            f"{question_id}: score {value} clamped into [{lo}, {hi}]", stacklevel=3
        )
    return min(hi, max(lo, value))


def score_difficulty(
    items: Sequence[GradedItem],
    client: ChatClient,
    model: str,
    *,
    max_in_flight: int = 8,
) -> tuple[list[DifficultyScore], list[tuple[str, str]]]:
    """One difficulty score per item; unparseable responses get one retry, then go missing."""

    def run_one(item: GradedItem) -> DifficultyScore | tuple[str, str]:
        prompt = render_scoring_prompt(item.question)
        last_reason = ""
        for attempt in (1, 2):
            request = ChatRequest.user(
                model,
                prompt,
                temperature=0.0,
                max_tokens=64,
                cache_salt=f"score:{item.question_id}:{attempt}",
            )
            try:
                content = client.complete(request).content
            except ProviderError as exc:
                return (item.question_id, f"provider: {exc}")
            value = parse_score(content)
            if value is not None:
                return DifficultyScore(
                    question_id=item.question_id,
                    score=_clamp_score(value, item.question_id),
                    scorer_tag=model,
                )
            last_reason = f"no number in scorer response: {content[:80]!r}"
        return (item.question_id, last_reason)

    results = map_bounded(run_one, list(items), max_in_flight)
    scores = [r for r in results if isinstance(r, DifficultyScore)]
    missing = [r for r in results if not isinstance(r, DifficultyScore)]
    return scores, missing


def build_blended_curriculum(
    datasets: Sequence[Sequence[GradedItem]],
    scores: Mapping[str, float],
    grouping: int = 2,
) -> CurriculumPlan:
    """Merge datasets, rank categories by mean score, group consecutive categories.

    Category means come from the scored items; unscored items inherit their
    category mean so flaky scoring never drops data. Ties between category
    means break by (dataset, category) name. Stage means are non-decreasing
    by construction because categories are grouped in rank order.
    """
    if grouping < 1:
        raise CurriculumError("grouping must be at least 1")
    groups: dict[str, list[GradedItem]] = {}
    for dataset in datasets:
        for item in dataset:
            groups.setdefault(item.category_label, []).append(item)
    if not groups:
        raise CurriculumError("no items to stage")

    ranked: list[tuple[float, str, str, str]] = []
    for label, members in groups.items():
        member_scores = [scores[i.question_id] for i in members if i.question_id in scores]
        if not member_scores:
            raise CurriculumError(f"category {label!r} has no scored items")
        mean = sum(member_scores) / len(member_scores)
        dataset_part, category_part = members[0].split_label()
        ranked.append((mean, dataset_part, category_part, label))
    ranked.sort()

    stages = []
    for index in range(0, len(ranked), grouping):
        chunk = ranked[index : index + grouping]
        items: list[GradedItem] = []
        for mean, _, _, label in chunk:
            for item in sorted(groups[label], key=lambda i: i.question_id):
                effective = scores.get(item.question_id, mean)
                items.append(
                    GradedItem(
                        question_id=item.question_id,
                        question=item.question,
                        solution=item.solution,
                        category_label=item.category_label,
                        difficulty_score=effective,
                    )
                )
        stages.append(
            Stage(
                name=f"stage{index // grouping + 1}",
                items=tuple(items),
                mean_difficulty=_mean_difficulty(items),
                categories=tuple(label for _, _, _, label in chunk),
            )
        )
    return CurriculumPlan(stages=tuple(stages), grouping=grouping)


def export_sft_stages(
    plan: CurriculumPlan, out_dir: str | Path, *, allow_empty: bool = False
) -> Path:
    """Write stage{k}.jsonl conversation files plus manifest.json; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest_stages = []
    for index, stage in enumerate(plan.stages, start=1):
        if not stage.items and not allow_empty:
            raise CurriculumError(f"stage {stage.name!r} is empty")
        filename = f"stage{index}.jsonl"
        jsonl.write_records(
            out / filename,
            (
                {
                    "messages": [
                        {"role": "user", "content": item.question},
                        {"role": "assistant", "content": item.solution},
                    ],
                    "meta": {
                        "question_id": item.question_id,
                        "category_label": item.category_label,
                        "difficulty": item.difficulty_score,
                    },
                }
                for item in stage.items
            ),
        )
        manifest_stages.append(
            {
                "name": stage.name,
                "file": filename,
                "size": len(stage.items),
                "mean_difficulty": stage.mean_difficulty,
                "categories": list(stage.categories),
            }
        )
    manifest = {"grouping": plan.grouping, "total_items": plan.total_items(), "stages": manifest_stages}
    manifest_path = out / "manifest.json"
    manifest_path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    return manifest_path


def save_scores(scores: Sequence[DifficultyScore], path: str | Path) -> None:
    jsonl.write_records(
        path,
        (
            {"question_id": s.question_id, "score": s.score, "scorer_tag": s.scorer_tag}
            for s in sorted(scores, key=lambda s: s.question_id)
        ),
    )


def load_scores(path: str | Path) -> dict[str, float]:
    return {record["question_id"]: float(record["score"]) for _, record in jsonl.read_records(path)}
