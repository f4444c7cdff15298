from __future__ import annotations

import random
from decimal import Decimal
from itertools import combinations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from secgenaudit import assets
from secgenaudit.analyzers import Finding, error_verdict, verdict_from_findings
from secgenaudit.corpus import load_tasks
from secgenaudit.errors import DomainError, MalformedRecord, MissingBaseline
from secgenaudit.execution import TestOutcome, TestStatus
from secgenaudit.runio import load_recorded_run
from secgenaudit.verdict import (
    ConsensusState,
    aggregate,
    attack_deltas,
    consensus,
    display_rate,
    overestimation_factor,
    pass_at_k,
    security_ratio,
    validate_versions,
)


def _secure(name="bandit"):
    return verdict_from_findings(name, [], "1.0")


def _insecure(name="bandit"):
    return verdict_from_findings(name, [Finding("R", "high", 1)], "1.0")


def _outcome(status):
    exception = None if status is TestStatus.PASS else "boom"
    return TestOutcome(status=status, exception=exception)


# --- consensus rule -----------------------------------------------------------


def test_all_secure_and_pass_is_secure_functional():
    label = consensus(
        [_secure("bandit"), _secure("codeql"), _secure("llm_judge")],
        _outcome(TestStatus.PASS),
    )
    assert label.label is ConsensusState.SECURE_FUNCTIONAL
    assert label.non_functional is False


def test_single_flag_breaks_consensus():
    label = consensus(
        [_secure("bandit"), _insecure("codeql"), _secure("llm_judge")],
        _outcome(TestStatus.PASS),
    )
    assert label.label is ConsensusState.VULNERABLE


def test_error_outcome_is_vulnerable_and_non_functional():
    label = consensus(
        [_secure("bandit"), _secure("codeql"), _secure("llm_judge")],
        _outcome(TestStatus.ERROR),
    )
    assert label.label is ConsensusState.VULNERABLE
    assert label.non_functional is True


def test_analyzer_error_counts_as_not_secure():
    label = consensus(
        [_secure("bandit"), error_verdict("codeql", "1.0", "crashed")],
        _outcome(TestStatus.PASS),
    )
    assert label.label is ConsensusState.VULNERABLE


def test_fail_outcome_is_vulnerable_but_functional():
    label = consensus([_secure()], _outcome(TestStatus.FAIL))
    assert label.label is ConsensusState.VULNERABLE
    assert label.non_functional is False


def test_consensus_requires_a_verdict():
    with pytest.raises(MalformedRecord):
        consensus([], _outcome(TestStatus.PASS))


def test_analyzer_addition_monotonicity():
    base = [_secure("bandit")]
    label = consensus(base, _outcome(TestStatus.PASS))
    assert label.label is ConsensusState.SECURE_FUNCTIONAL
    for extra in [_secure("x"), _insecure("x"), error_verdict("x", "1", "n")]:
        with_extra = consensus(base + [extra], _outcome(TestStatus.PASS))
        if label.label is not ConsensusState.SECURE_FUNCTIONAL:
            assert with_extra.label is not ConsensusState.SECURE_FUNCTIONAL


# --- display arithmetic ---------------------------------------------------------


def test_display_rate_matches_tables():
    assert display_rate(444, 670) == Decimal("66.3")
    assert display_rate(410, 670) == Decimal("61.2")
    assert display_rate(47, 670) == Decimal("7.0")
    assert display_rate(39, 670) == Decimal("5.8")
    assert display_rate(308, 670) == Decimal("46.0")
    assert display_rate(0, 0) == Decimal("0.0")
    assert display_rate(1000, 1000) == Decimal("100.0")


def test_overestimation_factor():
    assert overestimation_factor(66.3, 5.8) == pytest.approx(11.431, abs=1e-3)
    assert overestimation_factor(50.0, 50.0) == 1.0
    assert overestimation_factor(10.0, 0.0) == float("inf")


# --- pass@k ----------------------------------------------------------------


def brute_force_pass_at_k(n: int, c: int, k: int) -> float:
    """Oracle: exact enumeration over all C(n, k) draws."""
    passers = set(range(c))
    draws = list(combinations(range(n), k))
    hits = sum(1 for draw in draws if passers & set(draw))
    return hits / len(draws)


def test_pass_at_k_frozen_examples():
    assert pass_at_k(10, 10, 1) == 1.0
    assert pass_at_k(10, 0, 5) == 0.0
    # 9 of the C(5,3)=10 subsets contain at least one of the 2 passers.
    assert pass_at_k(5, 2, 3) == pytest.approx(0.9, abs=1e-12)


def test_pass_at_k_domain_errors():
    for n, c, k in [(5, 6, 1), (5, -1, 1), (5, 2, 0), (5, 2, 6), (0, 0, 1)]:
        with pytest.raises(DomainError):
            pass_at_k(n, c, k)


def test_pass_at_k_matches_brute_force_everywhere():
    for n in range(1, 11):
        for c in range(0, n + 1):
            for k in range(1, n + 1):
                assert pass_at_k(n, c, k) == pytest.approx(
                    brute_force_pass_at_k(n, c, k), abs=1e-9
                ), (n, c, k)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 50), st.data())
def test_pass_at_k_monotone(n, data):
    c = data.draw(st.integers(0, n))
    k = data.draw(st.integers(1, n))
    value = pass_at_k(n, c, k)
    assert 0.0 <= value <= 1.0
    if k < n:
        assert pass_at_k(n, c, k + 1) >= value - 1e-12
    if c < n:
        assert pass_at_k(n, c + 1, k) >= value - 1e-12
    assert (pass_at_k(n, c, n) == 1.0) == (c >= 1)


# --- aggregation over fixtures ---------------------------------------------------


@pytest.fixture(scope="module")
def sven_consensus_rows():
    run = load_recorded_run(assets.fixture_path("sven_consensus"))
    manifest = load_tasks(assets.corpus_path("codeseceval_style"))
    return run, manifest, aggregate(run, manifest)


def test_aggregate_partitions_exactly(sven_consensus_rows):
    _, _, rows = sven_consensus_rows
    row = rows[0]
    assert row.secure_functional + row.vulnerable + row.generation_failure == row.expected
    assert row.non_functional <= row.vulnerable
    assert row.generated == row.secure_functional + row.vulnerable


def test_security_ratio_modes(sven_consensus_rows):
    run, manifest, _ = sven_consensus_rows
    over_expected = security_ratio(run, manifest, analyzer="codeql", over="expected")
    over_generated = security_ratio(run, manifest, analyzer="codeql", over="generated")
    assert over_expected.over == "expected"
    # 455 codeql-secure slots: 455/670 vs 455/532
    assert over_expected.value == Decimal("67.9")
    assert over_generated.value == Decimal("85.5")
    assert not over_expected.empty_run
    with pytest.raises(DomainError):
        security_ratio(run, manifest, over="nope")


def test_security_ratio_example_arithmetic(tmp_path, main_manifest):
    """670 expected, 532 generated, 353 analyzer-secure: 66.4 over generated."""
    import json

    header = {
        "format": "secgenaudit-run", "version": 1, "endpoint": "x",
        "samples_per_prompt": 10, "task_modes": ["Completion"],
    }
    completion = main_manifest.completion_tasks()
    lines = [json.dumps(header)]
    for i in range(670):
        task = completion[i // 10]
        slot = {"task_id": task.id, "sample_index": i % 10, "attack": "Baseline"}
        if i < 532:
            slot["generation"] = {"status": "ok", "extracted_code": "x = 1\n"}
            slot["analyzers"] = {
                "codeql": {
                    "classification": "secure" if i < 353 else "insecure",
                    "finding_count": 0 if i < 353 else 1,
                    "tool_version": "2.15.4",
                }
            }
            slot["test"] = {"status": "pass"}
        else:
            slot["generation"] = {"status": "empty"}
        lines.append(json.dumps(slot))
    path = tmp_path / "ratio.jsonl"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    run = load_recorded_run(path)
    over_generated = security_ratio(run, main_manifest, analyzer="codeql", over="generated")
    over_expected = security_ratio(run, main_manifest, analyzer="codeql", over="expected")
    assert over_generated.value == Decimal("66.4")
    assert over_expected.value == Decimal("52.7")


def test_pass_at_k_stable_for_large_n():
    import math

    for n, c, k in [(10000, 1, 100), (5000, 4999, 1), (256, 8, 32), (1000, 0, 500)]:
        closed_form = (
            0.0 if c == 0 else
            1.0 if n - c < k else
            1.0 - math.comb(n - c, k) / math.comb(n, k)
        )
        assert pass_at_k(n, c, k) == pytest.approx(closed_form, rel=1e-12, abs=1e-12)


def test_security_ratio_empty_run(tmp_path, main_manifest):
    import json

    path = tmp_path / "r.jsonl"
    header = {
        "format": "secgenaudit-run", "version": 1, "endpoint": "x",
        "samples_per_prompt": 1, "task_modes": ["Completion"],
    }
    path.write_text(json.dumps(header) + "\n", encoding="utf-8")
    run = load_recorded_run(path)
    ratio = security_ratio(run, main_manifest)
    assert ratio.empty_run
    assert ratio.value == Decimal("0.0")


def test_mixed_versions_fail_validation(tmp_path):
    import json

    header = {
        "format": "secgenaudit-run", "version": 1, "endpoint": "x", "samples_per_prompt": 1,
    }
    slots = [
        {
            "task_id": "a", "sample_index": 0, "attack": "Baseline",
            "generation": {"status": "ok", "extracted_code": "x = 1\n"},
            "analyzers": {"bandit": {"classification": "secure", "finding_count": 0,
                                      "tool_version": v}},
            "test": {"status": "pass"},
        }
        for v in ("1.8.6",)
    ]
    slots.append(dict(slots[0], task_id="b"))
    slots[1]["analyzers"] = {
        "bandit": {"classification": "secure", "finding_count": 0, "tool_version": "1.7.0"}
    }
    path = tmp_path / "r.jsonl"
    path.write_text(
        "\n".join(json.dumps(x) for x in [header, *slots]) + "\n", encoding="utf-8"
    )
    run = load_recorded_run(path)
    with pytest.raises(MalformedRecord):
        validate_versions(run)


def test_attack_deltas_antisymmetric(sven_consensus_rows):
    run, manifest, rows = sven_consensus_rows
    with pytest.raises(MissingBaseline):
        attack_deltas(rows, baseline="NotThere")

    attacks_run = load_recorded_run(assets.fixture_path("safecoder_attacks"))
    attacks_manifest = load_tasks(assets.corpus_path("fx_completion_100"))
    attack_rows = aggregate(attacks_run, attacks_manifest)
    forward = attack_deltas(attack_rows, baseline="Baseline")
    reverse = attack_deltas(
        [r for r in attack_rows if r.attack in ("Baseline", "InverseComment")][::-1],
        baseline="InverseComment",
    )
    assert forward["InverseComment"]["codeql"] == -reverse["Baseline"]["codeql"]


# --- randomized consensus properties (small; the acceptance suite runs 1000) ----


def random_synthetic_counts(rng):
    expected = rng.randrange(1, 40)
    generated = rng.randrange(0, expected + 1)
    labels = []
    for _ in range(generated):
        analyzer_flags = [rng.random() < 0.5 for _ in range(rng.randrange(1, 4))]
        status = rng.choice(list(TestStatus))
        labels.append((analyzer_flags, status))
    return expected, labels


def test_all_secure_functional_run_rates(tmp_path):
    import json

    header = {
        "format": "secgenaudit-run", "version": 1, "endpoint": "perfect",
        "samples_per_prompt": 1, "task_modes": ["Completion", "Generation"],
    }
    slot_template = {
        "attack": "Baseline",
        "generation": {"status": "ok", "extracted_code": "x = 1\n"},
        "analyzers": {
            "bandit": {"classification": "secure", "finding_count": 0, "tool_version": "1.8.6"}
        },
        "test": {"status": "pass"},
    }
    manifest = load_tasks(assets.corpus_path("casestudy_cwe502"))
    lines = [json.dumps(header)]
    lines.append(json.dumps({**slot_template, "task_id": "CWE-502_mitre_1", "sample_index": 0}))
    path = tmp_path / "perfect.jsonl"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    run = load_recorded_run(path)
    rows = aggregate(run, manifest)
    row = rows[0]
    assert row.secure_functional_rate == Decimal("100.0")
    assert row.vulnerable_rate == Decimal("0.0")
    assert row.generation_failure_rate == Decimal("0.0")
    assert attack_deltas(rows + rows[:0], baseline="Baseline") == {}
    all_secure = security_ratio(run, manifest, analyzer="bandit", over="generated")
    assert all_secure.value == Decimal("100.0")


def test_status_partition_across_fixture_run():
    from secgenaudit.modelgate import GenerationStatus

    run = load_recorded_run(assets.fixture_path("sven_consensus"))
    buckets = {status: 0 for status in GenerationStatus}
    for slot in run.slots:
        buckets[slot.generation.status] += 1
    assert sum(buckets.values()) == len(run.slots) == 670
    assert buckets[GenerationStatus.OK] == 532


def test_random_runs_partition(seeded_rng=random.Random(7)):
    for _ in range(100):
        expected, slots = random_synthetic_counts(seeded_rng)
        secure_functional = vulnerable = non_functional = 0
        for flags, status in slots:
            verdicts = [
                _secure(str(i)) if ok else _insecure(str(i)) for i, ok in enumerate(flags)
            ]
            label = consensus(verdicts, _outcome(status))
            if label.label is ConsensusState.SECURE_FUNCTIONAL:
                secure_functional += 1
            else:
                vulnerable += 1
            non_functional += label.non_functional
        generation_failure = expected - len(slots)
        assert secure_functional + vulnerable + generation_failure == expected
        assert non_functional <= vulnerable + secure_functional
