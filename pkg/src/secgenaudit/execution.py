"""Sandboxed candidate execution against task unit tests.

Two pluggable backends: LiveShim spawns interpreter subprocesses running
the shim program and speaks its stdout protocol; Recorded replays stored
outcomes so the pipeline (and the whole primary test suite) runs without
spawning anything.  The orchestrator enforces the wall-clock regime:
init limit + test limit + a fixed 2 s grace, then terminate, then kill.
"""

from __future__ import annotations

import ast
import json
import os
import subprocess
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING

from .errors import AuditError

if TYPE_CHECKING:
    from .corpus import Task
    from .runio import RecordedRun

GRACE_SECONDS = 2.0
STREAM_CAP = 64 * 1024  # bytes kept per captured stream

DEFAULT_LIMITS = {"init": 5.0, "test": 10.0}

NON_FUNCTIONAL_STATUSES = frozenset(
    {"error", "timeout", "missing_entry_point", "sandbox_fault"}
)


class TestStatus(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    ERROR = "error"
    TIMEOUT = "timeout"
    MISSING_ENTRY_POINT = "missing_entry_point"
    SANDBOX_FAULT = "sandbox_fault"

    @property
    def non_functional(self) -> bool:
        return self.value in NON_FUNCTIONAL_STATUSES


@dataclass(frozen=True)
class TestOutcome:
    """Result of one sandboxed execution of a candidate's test suite."""

    status: TestStatus
    exception: str | None = None
    stdout: str = ""
    stderr: str = ""
    init_seconds: float = 0.0
    test_seconds: float = 0.0

    def __post_init__(self):
        if self.status is TestStatus.PASS and self.exception:
            raise ValueError("a passing outcome carries no exception text")

    def to_record(self) -> dict:
        record: dict = {"status": self.status.value}
        if self.exception:
            record["exception"] = self.exception
        if self.stdout:
            record["stdout"] = self.stdout
        if self.stderr:
            record["stderr"] = self.stderr
        if self.init_seconds:
            record["init_seconds"] = self.init_seconds
        if self.test_seconds:
            record["test_seconds"] = self.test_seconds
        return record

    @classmethod
    def from_record(cls, record: dict) -> "TestOutcome":
        return cls(
            status=TestStatus(record["status"]),
            exception=record.get("exception"),
            stdout=record.get("stdout", ""),
            stderr=record.get("stderr", ""),
            init_seconds=float(record.get("init_seconds", 0.0)),
            test_seconds=float(record.get("test_seconds", 0.0)),
        )


@dataclass(frozen=True)
class EntryPointLocation:
    found: bool
    line: int | None = None


def locate_entry_point(candidate: str, name: str) -> EntryPointLocation:
    """Whether a top-level function of that exact name is defined.

    Methods inside classes do not count; unparseable candidates are
    treated as not-found.
    """
    try:
        tree = ast.parse(candidate)
    except (SyntaxError, ValueError):
        return EntryPointLocation(found=False)
    for node in tree.body:
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)) and node.name == name:
            return EntryPointLocation(found=True, line=node.lineno)
    return EntryPointLocation(found=False)


# ---------------------------------------------------------------------------
# Backends


class RecordedBackend:
    """Replays test outcomes stored in a recorded run."""

    name = "recorded"

    def __init__(self, run: "RecordedRun"):
        self.run = run

    def execute(
        self, candidate: str, task: "Task", limits: dict, slot_key: tuple[str, int, str]
    ) -> TestOutcome:
        task_id, sample_index, attack = slot_key
        slot = self.run.slot(task_id, sample_index, attack)
        if slot is None or slot.test is None:
            raise AuditError(
                f"no recorded outcome for slot ({task_id}, {sample_index}, {attack})"
            )
        return slot.test


class LiveShimBackend:
    """Spawns the shim program in a jailed subprocess per execution.

    The shim command is configured explicitly (e.g. ``python -m
    seceval_shim``); the only contract is its command line and the single
    JSON protocol message it prints on stdout.  Any terminal behavior
    without a protocol message is a SandboxFault.
    """

    name = "live"

    def __init__(
        self,
        shim_cmd: list[str] | None = None,
        env_passthrough: tuple[str, ...] = ("PATH", "PYTHONPATH", "VIRTUAL_ENV", "LANG"),
    ):
        self.shim_cmd = shim_cmd or [sys.executable, "-m", "seceval_shim"]
        self.env_passthrough = env_passthrough

    def execute(
        self, candidate: str, task: "Task", limits: dict, slot_key: tuple[str, int, str]
    ) -> TestOutcome:
        init_limit = float(limits.get("init", 5.0))
        test_limit = float(limits.get("test", 10.0))
        budget = init_limit + test_limit + GRACE_SECONDS

        with tempfile.TemporaryDirectory(prefix="secgenaudit-exec-") as jail:
            jail_path = Path(jail)
            candidate_path = jail_path / "candidate.py"
            test_path = jail_path / "test_suite.py"
            candidate_path.write_text(candidate, encoding="utf-8")
            test_path.write_text(task.test_suite, encoding="utf-8")

            env = {name: os.environ[name] for name in self.env_passthrough if name in os.environ}
            env["HOME"] = jail
            env["PYTHONDONTWRITEBYTECODE"] = "1"

            cmd = self.shim_cmd + [
                str(candidate_path),
                str(test_path),
                task.entry_point,
                str(init_limit),
                str(test_limit),
            ]
            try:
                proc = subprocess.Popen(
                    cmd,
                    stdout=subprocess.PIPE,
                    stderr=subprocess.PIPE,
                    text=True,
                    cwd=jail,
                    env=env,
                )
            except OSError as exc:
                return TestOutcome(
                    status=TestStatus.SANDBOX_FAULT,
                    exception=f"could not spawn shim: {exc}",
                )
            killed = False
            try:
                out, err = proc.communicate(timeout=budget)
            except subprocess.TimeoutExpired:
                killed = True
                proc.terminate()
                try:
                    out, err = proc.communicate(timeout=GRACE_SECONDS)
                except subprocess.TimeoutExpired:
                    proc.kill()
                    out, err = proc.communicate()

        outcome = _parse_protocol_message(out)
        if outcome is not None:
            return outcome
        note = "shim killed after exceeding wall-clock budget" if killed else (
            f"shim exited {proc.returncode} without a protocol message"
        )
        return TestOutcome(
            status=TestStatus.SANDBOX_FAULT,
            exception=note,
            stdout=(out or "")[-STREAM_CAP:],
            stderr=(err or "")[-STREAM_CAP:],
        )


def _parse_protocol_message(stdout: str) -> TestOutcome | None:
    """The protocol message is the last non-empty stdout line."""
    if not stdout:
        return None
    for line in reversed(stdout.strip().splitlines()):
        line = line.strip()
        if not line:
            continue
        try:
            payload = json.loads(line)
        except json.JSONDecodeError:
            return None
        if not isinstance(payload, dict) or "status" not in payload:
            return None
        try:
            return TestOutcome(
                status=TestStatus(payload["status"]),
                exception=payload.get("exception"),
                stdout=str(payload.get("stdout", ""))[:STREAM_CAP],
                stderr=str(payload.get("stderr", ""))[:STREAM_CAP],
                init_seconds=float(payload.get("init_seconds", 0.0)),
                test_seconds=float(payload.get("test_seconds", 0.0)),
            )
        except (ValueError, TypeError):
            return None
    return None


def run_tests(
    candidate: str,
    task: "Task",
    limits: dict | None = None,
    backend: RecordedBackend | LiveShimBackend | None = None,
    sample_index: int = 0,
    attack: str = "Baseline",
) -> TestOutcome:
    """Execute one candidate against its task's checker.

    The live path short-circuits missing entry points without spawning a
    subprocess; the recorded path replays whatever the run stored.
    """
    limits = dict(DEFAULT_LIMITS if limits is None else limits)
    if limits["init"] <= 0 or limits["test"] <= 0:
        raise AuditError("execution limits must be positive")
    if backend is None:
        backend = LiveShimBackend()
    if isinstance(backend, LiveShimBackend):
        if not locate_entry_point(candidate, task.entry_point).found:
            return TestOutcome(
                status=TestStatus.MISSING_ENTRY_POINT,
                exception=f"Entry point {task.entry_point!r} not found in code",
            )
    return backend.execute(candidate, task, limits, (task.id, sample_index, attack))


def execute_batch(
    items: list[tuple[str, "Task", int, str]],
    backend: RecordedBackend | LiveShimBackend,
    limits: dict | None = None,
    jobs: int | None = None,
) -> dict[tuple[str, int, str], TestOutcome]:
    """Run many (candidate, task, sample, attack) items on a worker pool."""
    jobs = jobs or os.cpu_count() or 2

    def one(item: tuple[str, "Task", int, str]):
        candidate, task, sample_index, attack = item
        key = (task.id, sample_index, attack)
        return key, run_tests(candidate, task, limits, backend, sample_index, attack)

    if jobs == 1 or len(items) <= 1:
        return dict(one(item) for item in items)
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return dict(pool.map(one, items))
