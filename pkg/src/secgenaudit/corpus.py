"""Task corpus loading and validation.

The corpus file format is UTF-8 JSON Lines, one task per line, with fixed
field names: id, cwe, subset, mode, prompt, insecure_code, secure_code,
test, entry_point.  A loaded manifest is immutable and safe to share
across threads.
"""

from __future__ import annotations

import ast
import json
import re
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Iterable

from .errors import IoFailure, MalformedRecord

SCHEMA_VERSION = 1

_CWE_RE = re.compile(r"^CWE-\d+$")


class Subset(str, Enum):
    SECEVAL_BASE = "SecEvalBase"
    SECEVAL_PLUS = "SecEvalPlus"


class Mode(str, Enum):
    COMPLETION = "Completion"
    GENERATION = "Generation"


@dataclass(frozen=True)
class Task:
    """One benchmark item: context, insecure/secure references, and tests."""

    id: str
    cwe: str
    subset: Subset
    mode: Mode
    prompt_source: str
    insecure_example: str
    secure_reference: str
    test_suite: str
    entry_point: str

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "cwe": self.cwe,
            "subset": self.subset.value,
            "mode": self.mode.value,
            "prompt": self.prompt_source,
            "insecure_code": self.insecure_example,
            "secure_code": self.secure_reference,
            "test": self.test_suite,
            "entry_point": self.entry_point,
        }


@dataclass(frozen=True)
class CorpusManifest:
    """Ordered, validated task collection with per-subset counts."""

    tasks: tuple[Task, ...]
    counts: dict[str, int] = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def __len__(self) -> int:
        return len(self.tasks)

    def by_id(self, task_id: str) -> Task:
        try:
            return self._index[task_id]
        except KeyError:
            raise KeyError(f"unknown task id {task_id!r}") from None

    def __contains__(self, task_id: str) -> bool:
        return task_id in self._index

    @cached_property
    def _index(self) -> dict[str, Task]:
        return {t.id: t for t in self.tasks}

    def completion_tasks(self) -> tuple[Task, ...]:
        return tuple(t for t in self.tasks if t.mode is Mode.COMPLETION)

    def generation_tasks(self) -> tuple[Task, ...]:
        return tuple(t for t in self.tasks if t.mode is Mode.GENERATION)


def top_level_functions(source: str) -> list[str]:
    """Names of module-level function definitions, in order. [] on parse failure."""
    try:
        tree = ast.parse(source)
    except SyntaxError:
        return []
    return [
        node.name
        for node in tree.body
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef))
    ]


def checker_name(test_suite: str) -> str | None:
    """The single top-level callable a test suite defines, or None."""
    names = top_level_functions(test_suite)
    if len(names) != 1:
        return None
    return names[0]


def derive_entry_point(secure_reference: str) -> str | None:
    """Fallback entry-point extraction: first top-level function of the reference."""
    names = top_level_functions(secure_reference)
    return names[0] if names else None


def _validate_task(record: dict, line_no: int) -> Task:
    task_id = str(record.get("id", "") or f"line-{line_no}")

    def bad(field_name: str, reason: str) -> MalformedRecord:
        return MalformedRecord(task_id, field_name, reason)

    for name in ("id", "cwe", "subset", "mode", "prompt", "insecure_code", "secure_code", "test"):
        if not isinstance(record.get(name), str) or not record[name].strip():
            raise bad(name, "missing or empty")

    if not _CWE_RE.match(record["cwe"]):
        raise bad("cwe", f"not a CWE identifier: {record['cwe']!r}")

    try:
        subset = Subset(record["subset"])
    except ValueError:
        raise bad("subset", f"unknown subset {record['subset']!r}") from None
    try:
        mode = Mode(record["mode"])
    except ValueError:
        raise bad("mode", f"unknown mode {record['mode']!r}") from None

    if (mode is Mode.COMPLETION) != (subset is Subset.SECEVAL_BASE):
        raise bad("mode", f"mode {mode.value} inconsistent with subset {subset.value}")

    test_suite = record["test"]
    if checker_name(test_suite) is None:
        raise bad("test", "must define exactly one top-level checker callable")

    entry_point = record.get("entry_point") or derive_entry_point(record["secure_code"])
    if not entry_point or not str(entry_point).isidentifier():
        raise bad("entry_point", f"not a valid identifier: {entry_point!r}")
    if entry_point not in top_level_functions(record["secure_code"]):
        raise bad("entry_point", f"{entry_point!r} is not defined in secure_code")

    return Task(
        id=record["id"],
        cwe=record["cwe"],
        subset=subset,
        mode=mode,
        prompt_source=record["prompt"],
        insecure_example=record["insecure_code"],
        secure_reference=record["secure_code"],
        test_suite=test_suite,
        entry_point=str(entry_point),
    )


def build_manifest(tasks: Iterable[Task]) -> CorpusManifest:
    task_tuple = tuple(tasks)
    seen: set[str] = set()
    for task in task_tuple:
        if task.id in seen:
            raise MalformedRecord(task.id, "id", "duplicate task id")
        seen.add(task.id)
    counts = {subset.value: 0 for subset in Subset}
    for task in task_tuple:
        counts[task.subset.value] += 1
    return CorpusManifest(tasks=task_tuple, counts=counts)


def load_tasks(path: str | Path) -> CorpusManifest:
    """Load and validate a JSONL corpus file into a manifest.

    Order is preserved; every record must satisfy the Task invariants.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read corpus {path}: {exc}") from exc

    tasks: list[Task] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(f"line-{line_no}", "-", f"invalid JSON: {exc}") from exc
        if not isinstance(record, dict):
            raise MalformedRecord(f"line-{line_no}", "-", "record is not an object")
        tasks.append(_validate_task(record, line_no))
    return build_manifest(tasks)


def dump_tasks(manifest: CorpusManifest, path: str | Path) -> None:
    """Write a manifest back to the line-delimited corpus format."""
    path = Path(path)
    lines = [
        json.dumps(task.to_record(), sort_keys=True, ensure_ascii=False)
        for task in manifest.tasks
    ]
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


# Recorded-run loading lives in runio.py; re-exported here because fixture
# replay is addressed through the corpus layer.
def load_fixture_run(path: str | Path):
    from .runio import load_recorded_run

    return load_recorded_run(path)
