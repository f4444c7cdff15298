"""Recorded-run document format.

A run file is UTF-8 JSON Lines: one header line, then one line per
expected slot keyed by (task id, sample index, attack).  Fixture runs and
live runs share this format, which is what makes the shipped paper-table
fixtures and real audits interchangeable downstream.
"""

from __future__ import annotations

import gzip
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable

from .analyzers import AnalyzerVerdict
from .errors import IoFailure, MalformedRecord, VersionMismatch
from .execution import TestOutcome
from .modelgate import Decoding, EndpointConfig, GenerationRecord, GenerationStatus

if TYPE_CHECKING:
    from .corpus import CorpusManifest

FORMAT_NAME = "secgenaudit-run"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class RecordedSlot:
    """Everything recorded about one expected (task, sample, attack) slot."""

    task_id: str
    sample_index: int
    attack: str
    generation: GenerationRecord
    analyzers: dict[str, AnalyzerVerdict] = field(default_factory=dict)
    test: TestOutcome | None = None

    @property
    def generated(self) -> bool:
        return self.generation.status is GenerationStatus.OK

    def to_record(self) -> dict:
        record = {
            "task_id": self.task_id,
            "sample_index": self.sample_index,
            "attack": self.attack,
            "generation": self.generation.to_record(),
        }
        if self.analyzers:
            record["analyzers"] = {
                name: verdict.to_record() for name, verdict in sorted(self.analyzers.items())
            }
        if self.test is not None:
            record["test"] = self.test.to_record()
        return record

    @classmethod
    def from_record(cls, record: dict) -> "RecordedSlot":
        task_id = str(record["task_id"])
        attack = str(record.get("attack", "Baseline"))
        generation = GenerationRecord.from_record(task_id, attack, record["generation"])
        analyzers = {
            name: AnalyzerVerdict.from_record(name, verdict_record)
            for name, verdict_record in record.get("analyzers", {}).items()
        }
        test = TestOutcome.from_record(record["test"]) if "test" in record else None
        return cls(
            task_id=task_id,
            sample_index=int(record.get("sample_index", 0)),
            attack=attack,
            generation=generation,
            analyzers=analyzers,
            test=test,
        )


@dataclass
class RecordedRun:
    """A loaded run: header metadata plus slots addressable by key."""

    header: dict
    slots: list[RecordedSlot]

    def __post_init__(self):
        self._index: dict[tuple[str, int, str], RecordedSlot] = {}
        for slot in self.slots:
            key = (slot.task_id, slot.sample_index, slot.attack)
            if key in self._index:
                raise MalformedRecord(slot.task_id, "sample_index", f"duplicate slot {key}")
            self._index[key] = slot

    @property
    def endpoint_name(self) -> str:
        return str(self.header.get("endpoint", ""))

    @property
    def samples_per_prompt(self) -> int:
        return int(self.header.get("samples_per_prompt", 1))

    def endpoint_config(self) -> EndpointConfig:
        decoding = self.header.get("decoding") or {}
        return EndpointConfig(
            name=self.endpoint_name,
            model=str(self.header.get("model", "")),
            decoding=Decoding(
                temperature=float(decoding.get("temperature", 0.4)),
                top_p=float(decoding.get("top_p", 0.95)),
                max_new_tokens=int(decoding.get("max_new_tokens", 300)),
                seed=decoding.get("seed"),
            ),
            samples_per_prompt=self.samples_per_prompt,
            task_modes=tuple(self.header.get("task_modes", ("Completion",))),
        )

    def slot(self, task_id: str, sample_index: int, attack: str) -> RecordedSlot | None:
        return self._index.get((task_id, sample_index, attack))

    def attacks(self) -> tuple[str, ...]:
        ordered: list[str] = []
        for slot in self.slots:
            if slot.attack not in ordered:
                ordered.append(slot.attack)
        return tuple(ordered)

    def slots_for_attack(self, attack: str) -> list[RecordedSlot]:
        return [slot for slot in self.slots if slot.attack == attack]

    def generated_count(self, attack: str | None = None) -> int:
        pool = self.slots if attack is None else self.slots_for_attack(attack)
        return sum(1 for slot in pool if slot.generated)

    def validate_against(self, manifest: "CorpusManifest") -> None:
        for slot in self.slots:
            if slot.task_id not in manifest:
                raise MalformedRecord(slot.task_id, "task_id", "unknown task id in run")


def _read_text(path: Path) -> str:
    if path.suffix == ".gz":
        return gzip.decompress(path.read_bytes()).decode("utf-8")
    return path.read_text(encoding="utf-8")


def _write_text(path: Path, text: str) -> None:
    if path.suffix == ".gz":
        # mtime pinned to zero so identical content means identical bytes
        path.write_bytes(gzip.compress(text.encode("utf-8"), mtime=0))
    else:
        path.write_text(text, encoding="utf-8")


def load_recorded_run(path: str | Path) -> RecordedRun:
    path = Path(path)
    try:
        lines = _read_text(path).splitlines()
    except OSError as exc:
        raise IoFailure(f"cannot read run file {path}: {exc}") from exc

    header: dict | None = None
    slots: list[RecordedSlot] = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(f"line-{line_no}", "-", f"invalid JSON: {exc}") from exc
        if header is None:
            if record.get("format") != FORMAT_NAME:
                raise MalformedRecord(f"line-{line_no}", "format", "missing run header")
            if record.get("version") != FORMAT_VERSION:
                raise VersionMismatch(
                    f"run format version {record.get('version')!r}, expected {FORMAT_VERSION}"
                )
            header = record
            continue
        try:
            slots.append(RecordedSlot.from_record(record))
        except (KeyError, ValueError) as exc:
            raise MalformedRecord(f"line-{line_no}", "-", f"bad slot record: {exc}") from exc
    if header is None:
        raise MalformedRecord("line-1", "format", "empty run file")
    return RecordedRun(header=header, slots=slots)


def write_recorded_run(
    path: str | Path, header: dict, slots: Iterable[RecordedSlot]
) -> None:
    """Serialize a run deterministically (sorted keys, fixed separators)."""
    header = dict(header)
    header.setdefault("format", FORMAT_NAME)
    header.setdefault("version", FORMAT_VERSION)
    lines = [json.dumps(header, sort_keys=True, ensure_ascii=False)]
    lines.extend(
        json.dumps(slot.to_record(), sort_keys=True, ensure_ascii=False) for slot in slots
    )
    _write_text(Path(path), "\n".join(lines) + "\n")
