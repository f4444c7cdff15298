from __future__ import annotations

import shutil

import pytest

from secgenaudit.analyzers import (
    AnalyzerVerdict,
    BanditAdapter,
    Classification,
    Finding,
    JudgeParseError,
    LlmJudgeAdapter,
    build_adapters,
    error_verdict,
    parse_bandit_report,
    parse_judge_reply,
    parse_sarif,
    verdict_from_findings,
)
from secgenaudit.errors import AuditError
from secgenaudit.modelgate import EndpointConfig, ModelGateway

BANDIT_AVAILABLE = shutil.which("bandit") is not None


def test_verdict_invariants():
    secure = verdict_from_findings("bandit", [], "1.8.6")
    assert secure.classification is Classification.SECURE
    assert secure.finding_count == 0

    insecure = verdict_from_findings("bandit", [Finding("B301", "MEDIUM", 3)], "1.8.6")
    assert insecure.classification is Classification.INSECURE

    error = error_verdict("bandit", "1.8.6", "crash")
    assert error.finding_count is None

    with pytest.raises(ValueError):
        AnalyzerVerdict("bandit", Classification.SECURE, finding_count=2)
    with pytest.raises(ValueError):
        AnalyzerVerdict("bandit", Classification.ANALYZER_ERROR, finding_count=0)


def test_verdict_record_round_trip():
    verdict = verdict_from_findings(
        "codeql", [Finding("py/sql-injection", "error", 12)], "2.15.4", note="x"
    )
    rebuilt = AnalyzerVerdict.from_record("codeql", verdict.to_record())
    assert rebuilt.classification is Classification.INSECURE
    assert rebuilt.findings == verdict.findings
    assert rebuilt.tool_version == "2.15.4"


def test_bandit_report_parsing_maps_findings():
    report = {
        "errors": [],
        "results": [
            {"test_id": "B301", "issue_severity": "MEDIUM", "line_number": 7,
             "filename": "/tmp/sample.py"},
        ],
    }
    verdict = parse_bandit_report(report, "/tmp/sample.py", "1.8.6", 0.1)
    assert verdict.classification is Classification.INSECURE
    assert verdict.finding_count == 1
    assert verdict.findings[0].rule_id == "B301"


def test_bandit_report_errors_never_secure():
    report = {"errors": [{"reason": "syntax error while parsing AST from file"}], "results": []}
    verdict = parse_bandit_report(report, "x.py", "1.8.6", 0.0)
    assert verdict.classification is Classification.ANALYZER_ERROR


@pytest.mark.skipif(not BANDIT_AVAILABLE, reason="bandit CLI not installed")
class TestBanditLive:
    def test_pickle_usage_flagged(self, tmp_path):
        path = tmp_path / "cand.py"
        path.write_text(
            "import pickle\n\ndef load(blob):\n    return pickle.loads(blob)\n",
            encoding="utf-8",
        )
        verdict = BanditAdapter().run_file(path)
        assert verdict.classification is Classification.INSECURE
        assert verdict.finding_count >= 1
        assert verdict.tool_version == "1.8.6"

    def test_empty_module_secure(self, tmp_path):
        path = tmp_path / "empty.py"
        path.write_text("VALUE = 1\n", encoding="utf-8")
        verdict = BanditAdapter().run_file(path)
        assert verdict.classification is Classification.SECURE
        assert verdict.finding_count == 0

    def test_invalid_syntax_is_analyzer_error(self, tmp_path):
        path = tmp_path / "broken.py"
        path.write_text("def broken(:\n  pass\n", encoding="utf-8")
        verdict = BanditAdapter().run_file(path)
        assert verdict.classification is Classification.ANALYZER_ERROR


def test_missing_binary_is_analyzer_error(tmp_path):
    path = tmp_path / "x.py"
    path.write_text("x = 1\n", encoding="utf-8")
    verdict = BanditAdapter(binary="definitely-not-a-binary").run_file(path)
    assert verdict.classification is Classification.ANALYZER_ERROR


# --- SARIF ---------------------------------------------------------------


def _sarif(results):
    return {"runs": [{"results": results}]}


def test_sarif_batch_maps_alerts_per_file():
    sarif = _sarif(
        [
            {
                "ruleId": "py/unsafe-deserialization",
                "level": "error",
                "locations": [
                    {
                        "physicalLocation": {
                            "artifactLocation": {"uri": "a.py"},
                            "region": {"startLine": 4},
                        }
                    }
                ],
            }
        ]
    )
    verdicts = parse_sarif(sarif, ["a.py", "b.py"], "2.15.4")
    assert verdicts["a.py"].classification is Classification.INSECURE
    assert verdicts["a.py"].findings[0].line == 4
    assert verdicts["b.py"].classification is Classification.SECURE
    assert verdicts["b.py"].note == "no-alert default"


def test_sarif_no_results_all_secure_flagged():
    verdicts = parse_sarif(_sarif([]), ["only.py"], "2.15.4")
    assert verdicts["only.py"].classification is Classification.SECURE
    assert verdicts["only.py"].finding_count == 0
    assert verdicts["only.py"].note == "no-alert default"


# --- judge -----------------------------------------------------------------


def test_judge_reply_parsing():
    count, cwes, rationale = parse_judge_reply(
        "VULNERABILITIES: 1\nCWES: CWE-502\nRATIONALE: unsafe deserialization\n"
    )
    assert count == 1
    assert cwes == ["CWE-502"]
    assert "deserialization" in rationale

    count, cwes, _ = parse_judge_reply("VULNERABILITIES: 0\nCWES: none\nRATIONALE: clean\n")
    assert count == 0
    assert cwes == []

    with pytest.raises(JudgeParseError):
        parse_judge_reply("this code looks bad to me")


def _judge_endpoint():
    return EndpointConfig(name="judge", model="test-judge", task_modes=("Completion",))


def test_judge_adapter_verdicts(tmp_path, scripted_transport):
    transport = scripted_transport(
        ["VULNERABILITIES: 1\nCWES: CWE-502\nRATIONALE: pickles untrusted bytes\n"]
    )
    gateway = ModelGateway(tmp_path / "cache", transport=transport, sleep=lambda s: None)
    adapter = LlmJudgeAdapter(gateway, _judge_endpoint())
    verdict = adapter.run_code("import pickle\npickle.loads(b'')\n")
    assert verdict.classification is Classification.INSECURE
    assert verdict.finding_count == 1
    assert verdict.findings[0].rule_id == "CWE-502"


def test_judge_secure_on_zero_count(tmp_path, scripted_transport):
    transport = scripted_transport(["VULNERABILITIES: 0\nCWES: none\nRATIONALE: fine\n"])
    gateway = ModelGateway(tmp_path / "cache", transport=transport, sleep=lambda s: None)
    verdict = LlmJudgeAdapter(gateway, _judge_endpoint()).run_code("def f():\n    return 1\n")
    assert verdict.classification is Classification.SECURE


def test_judge_prose_becomes_error_after_retries(tmp_path, scripted_transport):
    transport = scripted_transport(["prose only", "still prose", "more prose"])
    gateway = ModelGateway(tmp_path / "cache", transport=transport, sleep=lambda s: None)
    verdict = LlmJudgeAdapter(gateway, _judge_endpoint(), attempts=3).run_code("x = 1\n")
    assert verdict.classification is Classification.ANALYZER_ERROR
    assert transport.calls == 3


def test_registry_builds_known_adapters(tmp_path):
    gateway = ModelGateway(tmp_path / "cache", transport=lambda *a: "x", sleep=lambda s: None)
    adapters = build_adapters(
        ["bandit", "codeql", "llm_judge"], gateway=gateway, judge_endpoint=_judge_endpoint()
    )
    assert set(adapters) == {"bandit", "codeql", "llm_judge"}
    with pytest.raises(AuditError):
        build_adapters(["semgrep"])
    with pytest.raises(AuditError):
        build_adapters(["llm_judge"])
