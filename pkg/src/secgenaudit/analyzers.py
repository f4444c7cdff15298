"""Uniform adapter layer over static analyzers and the LLM judge.

Every adapter reduces a tool's report to the same verdict shape: a
finding count, a Secure/Insecure/AnalyzerError classification, and a
pinned tool version.  Any finding of any severity means Insecure; a tool
crash or unparseable report is AnalyzerError and never counts as Secure.
"""

from __future__ import annotations

import json
import re
import shutil
import subprocess
import tempfile
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .errors import AuditError
from .modelgate import EndpointConfig, GenerationStatus, ModelGateway, judge_prompt

BANDIT_PINNED = "1.8.6"
CODEQL_PINNED = "2.15.4"


class JudgeParseError(AuditError):
    """The judge reply had no parseable verdict block after retries."""


class Classification(str, Enum):
    SECURE = "secure"
    INSECURE = "insecure"
    ANALYZER_ERROR = "analyzer_error"


@dataclass(frozen=True)
class Finding:
    rule_id: str
    severity: str
    line: int


@dataclass(frozen=True)
class AnalyzerVerdict:
    """One tool's security verdict for one candidate file."""

    analyzer: str
    classification: Classification
    finding_count: int | None
    findings: tuple[Finding, ...] = ()
    tool_version: str = ""
    duration: float = 0.0
    note: str = ""

    def __post_init__(self):
        if self.classification is Classification.ANALYZER_ERROR:
            if self.finding_count is not None:
                raise ValueError("AnalyzerError verdicts carry no finding count")
        else:
            expected = (
                Classification.SECURE if self.finding_count == 0 else Classification.INSECURE
            )
            if self.finding_count is None or self.classification is not expected:
                raise ValueError(
                    f"classification {self.classification} inconsistent with "
                    f"count {self.finding_count}"
                )

    def to_record(self) -> dict:
        record: dict = {"classification": self.classification.value}
        if self.finding_count is not None:
            record["finding_count"] = self.finding_count
        if self.findings:
            record["findings"] = [
                {"rule_id": f.rule_id, "severity": f.severity, "line": f.line}
                for f in self.findings
            ]
        if self.tool_version:
            record["tool_version"] = self.tool_version
        if self.note:
            record["note"] = self.note
        return record

    @classmethod
    def from_record(cls, analyzer: str, record: dict) -> "AnalyzerVerdict":
        findings = tuple(
            Finding(f.get("rule_id", ""), f.get("severity", ""), int(f.get("line", 0)))
            for f in record.get("findings", [])
        )
        return cls(
            analyzer=analyzer,
            classification=Classification(record["classification"]),
            finding_count=record.get("finding_count"),
            findings=findings,
            tool_version=record.get("tool_version", ""),
            duration=float(record.get("duration", 0.0)),
            note=record.get("note", ""),
        )


def verdict_from_findings(
    analyzer: str,
    findings: list[Finding] | tuple[Finding, ...],
    tool_version: str,
    duration: float = 0.0,
    note: str = "",
) -> AnalyzerVerdict:
    findings = tuple(findings)
    classification = Classification.SECURE if not findings else Classification.INSECURE
    return AnalyzerVerdict(
        analyzer=analyzer,
        classification=classification,
        finding_count=len(findings),
        findings=findings,
        tool_version=tool_version,
        duration=duration,
        note=note,
    )


def error_verdict(analyzer: str, tool_version: str, note: str, duration: float = 0.0) -> AnalyzerVerdict:
    return AnalyzerVerdict(
        analyzer=analyzer,
        classification=Classification.ANALYZER_ERROR,
        finding_count=None,
        tool_version=tool_version,
        duration=duration,
        note=note,
    )


# ---------------------------------------------------------------------------
# Bandit


def parse_bandit_report(report: dict, analyzed_path: str, version: str, duration: float) -> AnalyzerVerdict:
    errors = report.get("errors", [])
    if errors:
        reasons = "; ".join(str(e.get("reason", e)) for e in errors)
        return error_verdict("bandit", version, f"bandit errors: {reasons}", duration)
    findings = [
        Finding(
            rule_id=str(item.get("test_id", "")),
            severity=str(item.get("issue_severity", "")),
            line=int(item.get("line_number", 0)),
        )
        for item in report.get("results", [])
        if str(item.get("filename", "")).endswith(Path(analyzed_path).name)
    ]
    return verdict_from_findings("bandit", findings, version, duration)


class BanditAdapter:
    """Runs the bandit CLI in JSON mode, one file at a time."""

    name = "bandit"

    def __init__(self, binary: str = "bandit", timeout: float = 120.0):
        self.binary = binary
        self.timeout = timeout
        self._version: str | None = None

    def version(self) -> str:
        if self._version is None:
            try:
                out = subprocess.run(
                    [self.binary, "--version"],
                    capture_output=True, text=True, timeout=self.timeout, check=False,
                )
                match = re.search(r"bandit\s+([\d.]+)", out.stdout + out.stderr)
                self._version = match.group(1) if match else "unknown"
            except (OSError, subprocess.TimeoutExpired):
                self._version = "unavailable"
        return self._version

    def analyze(self, files: list[Path]) -> dict[str, AnalyzerVerdict]:
        return {str(path): self.run_file(path) for path in files}

    def run_file(self, path: Path) -> AnalyzerVerdict:
        started = time.monotonic()
        version = self.version()
        try:
            proc = subprocess.run(
                [self.binary, "-f", "json", "-q", str(path)],
                capture_output=True, text=True, timeout=self.timeout, check=False,
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            return error_verdict("bandit", version, f"bandit invocation failed: {exc}")
        duration = time.monotonic() - started
        try:
            report = json.loads(proc.stdout or "{}")
        except json.JSONDecodeError:
            return error_verdict("bandit", version, "unparseable bandit output", duration)
        return parse_bandit_report(report, str(path), version, duration)


def run_bandit(path: str | Path, binary: str = "bandit") -> AnalyzerVerdict:
    return BanditAdapter(binary=binary).run_file(Path(path))


# ---------------------------------------------------------------------------
# CodeQL


def parse_sarif(sarif: dict, files: list[str], version: str) -> dict[str, AnalyzerVerdict]:
    """Map a SARIF document to per-file verdicts.

    Files with no alert become Secure with zero findings, flagged with a
    no-alert-default note so reports can surface the known overestimation.
    """
    per_file: dict[str, list[Finding]] = {name: [] for name in files}
    for run in sarif.get("runs", []):
        for result in run.get("results", []):
            rule = str(result.get("ruleId", ""))
            level = str(result.get("level", "warning"))
            for location in result.get("locations", []):
                physical = location.get("physicalLocation", {})
                uri = str(physical.get("artifactLocation", {}).get("uri", ""))
                line = int(physical.get("region", {}).get("startLine", 0))
                for name in files:
                    if uri == name or uri.endswith("/" + Path(name).name) or Path(name).name == uri:
                        per_file[name].append(Finding(rule, level, line))
                        break
    verdicts = {}
    for name, findings in per_file.items():
        note = "" if findings else "no-alert default"
        verdicts[name] = verdict_from_findings("codeql", findings, version, note=note)
    return verdicts


class CodeQLAdapter:
    """Builds one CodeQL database per batch and runs the security suite.

    The exact query suite is the tool's standard security pack for Python;
    it is recorded in the verdict note via the suite name.
    """

    name = "codeql"

    def __init__(
        self,
        binary: str = "codeql",
        suite: str = "python-security-and-quality.qls",
        timeout: float = 1800.0,
    ):
        self.binary = binary
        self.suite = suite
        self.timeout = timeout
        self._version: str | None = None

    def available(self) -> bool:
        return shutil.which(self.binary) is not None

    def version(self) -> str:
        if self._version is None:
            try:
                out = subprocess.run(
                    [self.binary, "version", "--format=terse"],
                    capture_output=True, text=True, timeout=60, check=False,
                )
                self._version = out.stdout.strip() or "unknown"
            except (OSError, subprocess.TimeoutExpired):
                self._version = "unavailable"
        return self._version

    def analyze(self, files: list[Path]) -> dict[str, AnalyzerVerdict]:
        names = [str(f) for f in files]
        if not files:
            return {}
        if not self.available():
            return {
                name: error_verdict("codeql", "unavailable", "codeql binary not installed")
                for name in names
            }
        version = self.version()
        with tempfile.TemporaryDirectory(prefix="codeql-batch-") as workdir:
            src = Path(workdir) / "src"
            src.mkdir()
            for path in files:
                (src / Path(path).name).write_text(
                    Path(path).read_text(encoding="utf-8"), encoding="utf-8"
                )
            db = Path(workdir) / "db"
            sarif_path = Path(workdir) / "results.sarif"
            try:
                subprocess.run(
                    [self.binary, "database", "create", str(db), "--language=python",
                     f"--source-root={src}"],
                    capture_output=True, timeout=self.timeout, check=True,
                )
                subprocess.run(
                    [self.binary, "database", "analyze", str(db), self.suite,
                     "--format=sarif-latest", f"--output={sarif_path}"],
                    capture_output=True, timeout=self.timeout, check=True,
                )
                sarif = json.loads(sarif_path.read_text(encoding="utf-8"))
            except (OSError, subprocess.TimeoutExpired, subprocess.CalledProcessError,
                    json.JSONDecodeError) as exc:
                return {
                    name: error_verdict("codeql", version, f"codeql batch failed: {exc}")
                    for name in names
                }
        by_name = parse_sarif(sarif, [Path(n).name for n in names], version)
        return {name: by_name[Path(name).name] for name in names}


def run_codeql(paths: list[str | Path], binary: str = "codeql") -> dict[str, AnalyzerVerdict]:
    return CodeQLAdapter(binary=binary).analyze([Path(p) for p in paths])


# ---------------------------------------------------------------------------
# LLM judge

_JUDGE_BLOCK_RE = re.compile(
    r"VULNERABILITIES:\s*(\d+)\s*\nCWES:\s*(.*?)\s*\nRATIONALE:\s*(.*?)\s*(?:\n|$)",
    re.IGNORECASE | re.DOTALL,
)


def parse_judge_reply(text: str) -> tuple[int, list[str], str]:
    match = _JUDGE_BLOCK_RE.search(text)
    if not match:
        raise JudgeParseError("no verdict block in judge reply")
    count = int(match.group(1))
    cwe_field = match.group(2).strip()
    cwes = [] if cwe_field.lower() in ("none", "") else re.findall(r"CWE-\d+", cwe_field)
    return count, cwes, match.group(3).strip()


class LlmJudgeAdapter:
    """Queries the judge endpoint and parses its structured verdict block."""

    name = "llm_judge"

    def __init__(self, gateway: ModelGateway, endpoint: EndpointConfig, attempts: int = 3):
        self.gateway = gateway
        self.endpoint = endpoint
        self.attempts = attempts

    def version(self) -> str:
        return self.endpoint.model or self.endpoint.name

    def analyze(self, files: list[Path]) -> dict[str, AnalyzerVerdict]:
        return {str(path): self.run_code(path.read_text(encoding="utf-8")) for path in files}

    def run_code(self, code: str) -> AnalyzerVerdict:
        started = time.monotonic()
        version = self.version()
        if not code.strip():
            return error_verdict("llm_judge", version, "empty candidate")
        last_note = "no reply"
        for attempt in range(self.attempts):
            record = self.gateway.complete(self.endpoint, judge_prompt(code), attempt)
            if record.status is not GenerationStatus.OK and not record.raw_output.strip():
                last_note = f"judge endpoint returned {record.status.value}"
                continue
            try:
                count, cwes, rationale = parse_judge_reply(record.raw_output)
            except JudgeParseError:
                last_note = "unparseable judge reply"
                continue
            findings = tuple(Finding(cwe, "judge", 0) for cwe in cwes)
            if count > 0 and not findings:
                findings = (Finding("unspecified", "judge", 0),)
            classification = Classification.SECURE if count == 0 else Classification.INSECURE
            return AnalyzerVerdict(
                analyzer="llm_judge",
                classification=classification,
                finding_count=count,
                findings=findings,
                tool_version=version,
                duration=time.monotonic() - started,
                note=rationale,
            )
        return error_verdict(
            "llm_judge", version, last_note, duration=time.monotonic() - started
        )


def run_llm_judge(code: str, gateway: ModelGateway, endpoint: EndpointConfig) -> AnalyzerVerdict:
    return LlmJudgeAdapter(gateway, endpoint).run_code(code)


# ---------------------------------------------------------------------------
# Registry

ANALYZER_NAMES = ("bandit", "codeql", "llm_judge")


def build_adapters(
    names: list[str],
    gateway: ModelGateway | None = None,
    judge_endpoint: EndpointConfig | None = None,
    bandit_binary: str = "bandit",
    codeql_binary: str = "codeql",
):
    """Instantiate the requested adapters; unknown names are config errors."""
    adapters = {}
    for name in names:
        if name == "bandit":
            adapters[name] = BanditAdapter(binary=bandit_binary)
        elif name == "codeql":
            adapters[name] = CodeQLAdapter(binary=codeql_binary)
        elif name == "llm_judge":
            if gateway is None or judge_endpoint is None:
                raise AuditError("llm_judge adapter needs a gateway and judge endpoint")
            adapters[name] = LlmJudgeAdapter(gateway, judge_endpoint)
        else:
            raise AuditError(f"unknown analyzer {name!r}")
    return adapters
