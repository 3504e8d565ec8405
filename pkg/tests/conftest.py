"""Shared fixtures: toy corpora, seed files, and offline provider clients."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import pytest

from mathsynth.corpus import Corpus, SeedProblem
from mathsynth.providers import ChatClient, MockTransport, ProviderConfig, ResponseCache

# No backoff sleeps in tests; retry behavior itself is still exercised.
FAST_CFG = ProviderConfig(max_retries=3, backoff_base=0.0)


def topic_pair_corpus(
    n_topics: int = 10, difficulties: tuple[float, float] = (3.0, 6.0), name: str = "toy"
) -> Corpus:
    """A corpus of n_topics related pairs.

    The two questions of a topic share their first 24 characters, which the
    mock embedder maps to near-parallel vectors, so every seed has exactly one
    partner above any realistic pairing threshold.
    """
    low, high = difficulties
    problems = []
    for i in range(n_topics):
        prefix = f"Topic {i:02d} inventory count puzzle"
        problems.append(
            SeedProblem(
                id=f"q{i:02d}a",
                question=f"{prefix} with {i + 3} crates and a simple twist.",
                answer=str(10 + i),
                difficulty=low,
            )
        )
        problems.append(
            SeedProblem(
                id=f"q{i:02d}b",
                question=f"{prefix} with {i + 5} pallets, staged deliveries, and an "
                "inspection step.",
                answer=str(40 + i),
                difficulty=high,
            )
        )
    return Corpus(problems=tuple(problems), name=name)


def write_corpus_file(path: Path, corpus: Corpus) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        "".join(json.dumps(p.to_record(), ensure_ascii=False) + "\n" for p in corpus.problems),
        encoding="utf-8",
    )
    return path


def make_chat(
    script: dict[str, Any] | None = None,
    seed: int = 0,
    cache_dir: Path | None = None,
    max_retries: int = 3,
    latency: float = 0.0,
) -> tuple[ChatClient, MockTransport]:
    transport = MockTransport(seed=seed, script=script, latency=latency)
    cache = ResponseCache(cache_dir) if cache_dir is not None else None
    cfg = ProviderConfig(max_retries=max_retries, backoff_base=0.0)
    return ChatClient(transport, cfg, cache), transport


@pytest.fixture
def toy_corpus() -> Corpus:
    return topic_pair_corpus()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print the acceptance-criteria scoreboard after the run, uncaptured."""
    try:
        import test_acceptance
    except ImportError:
        return
    lines = getattr(test_acceptance, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
