"""Report rendering: markdown, delimited text, and structured JSON.

Attack tables use the "value (delta)" style of the result tables, with
deltas taken between display-rounded rates.  Output carries no wall-clock
content, so recorded-backend reports are byte-deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import Decimal
from typing import TYPE_CHECKING

from .errors import EmptyRun
from .runio import RecordedRun
from .verdict import (
    AuditReportRow,
    ConsensusState,
    attack_deltas,
    display_rate,
    slot_consensus,
)

if TYPE_CHECKING:
    from .corpus import CorpusManifest


@dataclass(frozen=True)
class CweBreakdownRow:
    cwe: str
    expected: int
    generated: int
    secure_functional: int
    vulnerable: int
    non_functional: int


def per_cwe_breakdown(
    run: RecordedRun, manifest: "CorpusManifest", attack: str = "Baseline"
) -> list[CweBreakdownRow]:
    """Consensus counts grouped by the tasks' CWE tags, for one attack."""
    endpoint = run.endpoint_config()
    per_cwe_expected: dict[str, int] = {}
    for task in manifest.tasks:
        if task.mode.value in endpoint.task_modes:
            per_cwe_expected[task.cwe] = (
                per_cwe_expected.get(task.cwe, 0) + endpoint.samples_per_prompt
            )

    counts: dict[str, dict[str, int]] = {
        cwe: {"generated": 0, "sf": 0, "vul": 0, "nf": 0} for cwe in per_cwe_expected
    }
    for slot in run.slots_for_attack(attack):
        task = manifest.by_id(slot.task_id)
        bucket = counts.setdefault(
            task.cwe, {"generated": 0, "sf": 0, "vul": 0, "nf": 0}
        )
        if not slot.generated:
            continue
        bucket["generated"] += 1
        label = slot_consensus(slot)
        if label.label is ConsensusState.SECURE_FUNCTIONAL:
            bucket["sf"] += 1
        else:
            bucket["vul"] += 1
        if label.non_functional:
            bucket["nf"] += 1

    rows = []
    for cwe in sorted(counts):
        bucket = counts[cwe]
        rows.append(
            CweBreakdownRow(
                cwe=cwe,
                expected=per_cwe_expected.get(cwe, 0),
                generated=bucket["generated"],
                secure_functional=bucket["sf"],
                vulnerable=bucket["vul"],
                non_functional=bucket["nf"],
            )
        )
    return rows


def _fmt_delta(delta: Decimal) -> str:
    return f"({delta:+.1f})"


def _analyzer_names(rows: list[AuditReportRow]) -> list[str]:
    names: list[str] = []
    for row in rows:
        for name in row.analyzer_counts:
            if name not in names:
                names.append(name)
    return sorted(names)


def render_markdown(
    rows: list[AuditReportRow],
    run: RecordedRun,
    manifest: "CorpusManifest",
    ratio_analyzer: str = "codeql",
    baseline: str = "Baseline",
) -> str:
    if not rows:
        raise EmptyRun("no rows to report")
    endpoint = rows[0].endpoint
    analyzers = _analyzer_names(rows)
    deltas = attack_deltas(rows, baseline) if any(r.attack == baseline for r in rows) else {}

    out: list[str] = []
    out.append(f"# Audit report: {endpoint}")
    out.append("")
    out.append(f"Expected slots per attack: {rows[0].expected} "
               f"(rates normalized over {rows[0].rate_denominator} slots)")
    versions = {
        name: counts.version
        for row in rows
        for name, counts in sorted(row.analyzer_counts.items())
        if counts.version
    }
    if versions:
        out.append("")
        out.append(
            "Analyzer versions: "
            + ", ".join(f"{name} {version}" for name, version in sorted(versions.items()))
        )
    out.append("")

    out.append("## Consensus evaluation")
    out.append("")
    out.append("| Attack | Generated | Secure & Functional | Vulnerable | Non-Functional |")
    out.append("| --- | --- | --- | --- | --- |")
    for row in rows:
        sf = f"{row.secure_functional_rate}"
        if row.attack in deltas:
            sf += f" {_fmt_delta(deltas[row.attack]['secure_functional'])}"
        out.append(
            f"| {row.attack} | {row.generated_rate} | {sf} | "
            f"{row.vulnerable_rate} | {row.non_functional_rate} |"
        )
    out.append("")

    out.append("## Per-analyzer secure rates")
    out.append("")
    out.append("| Attack | " + " | ".join(analyzers) + " | Unit tests |")
    out.append("| --- |" + " --- |" * (len(analyzers) + 1))
    for row in rows:
        cells = []
        for name in analyzers:
            value = f"{row.analyzer_secure_rate(name)}"
            if row.attack in deltas and name in deltas[row.attack]:
                value += f" {_fmt_delta(deltas[row.attack][name])}"
            cells.append(value)
        unit = display_rate(
            sum(1 for slot in run.slots_for_attack(row.attack)
                if slot.generated and slot.test is not None and slot.test.status.value == "pass"),
            row.expected if row.rate_denominator == "expected" else max(row.generated, 1),
        )
        out.append(f"| {row.attack} | " + " | ".join(cells) + f" | {unit} |")
    out.append("")

    out.append(f"## Security ratio ({ratio_analyzer})")
    out.append("")
    out.append("| Attack | Secure rate |")
    out.append("| --- | --- |")
    for row in rows:
        value = f"{row.analyzer_secure_rate(ratio_analyzer)}"
        if row.attack in deltas and ratio_analyzer in deltas[row.attack]:
            value += f" {_fmt_delta(deltas[row.attack][ratio_analyzer])}"
        out.append(f"| {row.attack} | {value} |")
    out.append("")

    out.append("## Overestimation factors (analyzer secure rate / joint rate)")
    out.append("")
    out.append("| Attack | " + " | ".join(analyzers) + " |")
    out.append("| --- |" + " --- |" * len(analyzers))
    for row in rows:
        cells = []
        for name in analyzers:
            factor = row.overestimation(name)
            cells.append("inf" if factor == float("inf") else f"{factor:.1f}")
        out.append(f"| {row.attack} | " + " | ".join(cells) + " |")
    out.append("")
    out.append("CodeQL absence-of-alert counts as secure (no-alert default); the factors above "
               "surface how far that overestimates the jointly secure-and-functional rate.")
    out.append("")

    for row in rows:
        breakdown = per_cwe_breakdown(run, manifest, row.attack)
        nonzero = [b for b in breakdown if b.expected]
        if not nonzero:
            continue
        out.append(f"## Per-CWE breakdown: {row.attack}")
        out.append("")
        out.append("| CWE | Expected | Generated | S&F | Vulnerable | Non-Functional |")
        out.append("| --- | --- | --- | --- | --- | --- |")
        for b in nonzero:
            out.append(
                f"| {b.cwe} | {b.expected} | {b.generated} | {b.secure_functional} | "
                f"{b.vulnerable} | {b.non_functional} |"
            )
        out.append("")

    return "\n".join(out)


def render_csv(rows: list[AuditReportRow]) -> str:
    if not rows:
        raise EmptyRun("no rows to report")
    analyzers = _analyzer_names(rows)
    header = [
        "endpoint", "attack", "expected", "generated", "secure_functional",
        "vulnerable", "non_functional", "generation_failure",
        "generated_rate", "secure_functional_rate", "vulnerable_rate",
        "non_functional_rate",
    ] + [f"{name}_secure_rate" for name in analyzers]
    lines = [",".join(header)]
    for row in rows:
        cells = [
            row.endpoint, row.attack, str(row.expected), str(row.generated),
            str(row.secure_functional), str(row.vulnerable), str(row.non_functional),
            str(row.generation_failure),
            str(row.generated_rate), str(row.secure_functional_rate),
            str(row.vulnerable_rate), str(row.non_functional_rate),
        ] + [str(row.analyzer_secure_rate(name)) for name in analyzers]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def render_json(
    rows: list[AuditReportRow],
    run: RecordedRun,
    manifest: "CorpusManifest",
    baseline: str = "Baseline",
) -> str:
    if not rows:
        raise EmptyRun("no rows to report")
    deltas = attack_deltas(rows, baseline) if any(r.attack == baseline for r in rows) else {}
    payload = {
        "endpoint": rows[0].endpoint,
        "rate_denominator": rows[0].rate_denominator,
        "attacks": [
            {
                "attack": row.attack,
                "expected": row.expected,
                "counts": {
                    "generated": row.generated,
                    "secure_functional": row.secure_functional,
                    "vulnerable": row.vulnerable,
                    "non_functional": row.non_functional,
                    "generation_failure": row.generation_failure,
                },
                "rates": {
                    "generated": str(row.generated_rate),
                    "secure_functional": str(row.secure_functional_rate),
                    "vulnerable": str(row.vulnerable_rate),
                    "non_functional": str(row.non_functional_rate),
                },
                "analyzers": {
                    name: {
                        "secure": counts.secure,
                        "insecure": counts.insecure,
                        "error": counts.error,
                        "version": counts.version,
                        "secure_rate": str(row.analyzer_secure_rate(name)),
                        "overestimation": (
                            None
                            if row.overestimation(name) == float("inf")
                            else round(row.overestimation(name), 3)
                        ),
                    }
                    for name, counts in sorted(row.analyzer_counts.items())
                },
                "deltas": {k: str(v) for k, v in deltas.get(row.attack, {}).items()},
                "per_cwe": [
                    {
                        "cwe": b.cwe,
                        "expected": b.expected,
                        "generated": b.generated,
                        "secure_functional": b.secure_functional,
                        "vulnerable": b.vulnerable,
                        "non_functional": b.non_functional,
                    }
                    for b in per_cwe_breakdown(run, manifest, row.attack)
                    if b.expected
                ],
            }
            for row in rows
        ],
    }
    return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
