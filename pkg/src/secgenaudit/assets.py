"""Locate the shipped corpora, fixtures, and case-study candidates."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .errors import IoFailure


def data_root() -> Path:
    return Path(str(resources.files(__package__) / "data"))


def corpus_path(name: str) -> Path:
    """Resolve a shipped corpus by bare name (e.g. ``codeseceval_style``)."""
    path = data_root() / "corpus" / f"{name.removesuffix('.jsonl')}.jsonl"
    if not path.exists():
        raise IoFailure(f"no shipped corpus named {name!r}")
    return path


def fixture_path(name: str) -> Path:
    """Resolve a shipped recorded-run fixture by bare name (e.g. ``sven_consensus``)."""
    base = name.removesuffix(".gz").removesuffix(".jsonl")
    path = data_root() / "fixtures" / f"{base}.jsonl.gz"
    if not path.exists():
        raise IoFailure(f"no shipped fixture named {name!r}")
    return path


def candidate_path(name: str) -> Path:
    path = data_root() / "candidates" / name
    if not path.exists():
        raise IoFailure(f"no shipped candidate asset named {name!r}")
    return path


def list_fixtures() -> list[str]:
    return sorted(p.name.removesuffix(".jsonl.gz") for p in (data_root() / "fixtures").glob("*.jsonl.gz"))
