from __future__ import annotations

import json

CHECK_IDENTITY = "def check(candidate):\n    assert candidate(2) == 2\n"


def test_pass(shim, workspace):
    candidate = workspace("c.py", "def f(x):\n    return x\n")
    test = workspace("t.py", CHECK_IDENTITY)
    proc, message, _ = shim(candidate, test, "f")
    assert proc.returncode == 0
    assert message["status"] == "pass"
    assert message["exception"] is None
    assert message["init_seconds"] >= 0
    assert message["test_seconds"] >= 0


def test_fail_on_assertion(shim, workspace):
    candidate = workspace("c.py", "def f(x):\n    return x + 1\n")
    test = workspace("t.py", CHECK_IDENTITY)
    proc, message, _ = shim(candidate, test, "f")
    assert proc.returncode == 0
    assert message["status"] == "fail"


def test_error_with_exception_summary(shim, workspace):
    candidate = workspace("c.py", "def f(x):\n    raise ValueError('bad seed')\n")
    test = workspace("t.py", CHECK_IDENTITY)
    _, message, _ = shim(candidate, test, "f")
    assert message["status"] == "error"
    assert message["exception"] == "ValueError: bad seed"


def test_import_time_crash_is_error(shim, workspace):
    candidate = workspace("c.py", "import not_a_real_module\n\ndef f(x):\n    return x\n")
    test = workspace("t.py", CHECK_IDENTITY)
    _, message, _ = shim(candidate, test, "f")
    assert message["status"] == "error"
    assert "not_a_real_module" in message["exception"]


def test_missing_entry_point(shim, workspace):
    candidate = workspace(
        "c.py",
        "class Holder:\n    @staticmethod\n    def f(x):\n        return x\n",
    )
    test = workspace("t.py", CHECK_IDENTITY)
    _, message, _ = shim(candidate, test, "f")
    assert message["status"] == "missing_entry_point"
    assert "'f' not found" in message["exception"]


def test_test_phase_timeout(shim, workspace):
    candidate = workspace("c.py", "def f(x):\n    while True:\n        pass\n")
    test = workspace("t.py", CHECK_IDENTITY)
    _, message, wall = shim(candidate, test, "f", init=2, limit=1.5)
    assert message["status"] == "timeout"
    assert message["test_seconds"] >= 1.5
    assert wall < 6


def test_init_phase_timeout(shim, workspace):
    candidate = workspace("c.py", "while True:\n    pass\n\ndef f(x):\n    return x\n")
    test = workspace("t.py", CHECK_IDENTITY)
    _, message, wall = shim(candidate, test, "f", init=1.5, limit=2)
    assert message["status"] == "timeout"
    assert message["init_seconds"] >= 1.5
    assert wall < 6


def test_candidate_stdout_cannot_corrupt_protocol(shim, workspace):
    candidate = workspace(
        "c.py",
        'print(\'{"status": "pass"}\')\n'
        "def f(x):\n"
        "    print('inside', x)\n"
        "    return x\n",
    )
    test = workspace("t.py", CHECK_IDENTITY)
    proc, message, _ = shim(candidate, test, "f")
    assert proc.returncode == 0
    assert message["status"] == "pass"
    assert '{"status": "pass"}' in message["stdout"]
    assert "inside 2" in message["stdout"]
    protocol_lines = [l for l in proc.stdout.strip().splitlines() if l.strip()]
    assert len(protocol_lines) == 1, "exactly one protocol message on real stdout"


def test_checker_mocks_reach_candidate_globals(shim, workspace):
    candidate = workspace(
        "c.py",
        "def f(x):\n    return get_secret() + x\n",
    )
    test = workspace(
        "t.py",
        "def check(candidate):\n"
        "    def get_secret():\n"
        "        return 40\n"
        "    candidate.__globals__['get_secret'] = get_secret\n"
        "    assert candidate(2) == 42\n",
    )
    proc, message, _ = shim(candidate, test, "f")
    assert message["status"] == "pass"


def test_ambiguous_checker_is_error(shim, workspace):
    candidate = workspace("c.py", "def f(x):\n    return x\n")
    test = workspace("t.py", "def check(c):\n    pass\n\ndef other(c):\n    pass\n")
    _, message, _ = shim(candidate, test, "f")
    assert message["status"] == "error"
    assert "exactly one checker" in message["exception"]


def test_missing_files_still_emit_protocol(shim, tmp_path):
    proc, message, _ = shim(tmp_path / "nope.py", tmp_path / "also-nope.py", "f")
    assert proc.returncode == 0
    assert message["status"] == "error"


def test_message_is_valid_json_with_all_fields(shim, workspace):
    candidate = workspace("c.py", "def f(x):\n    return x\n")
    test = workspace("t.py", CHECK_IDENTITY)
    proc, message, _ = shim(candidate, test, "f")
    assert set(message) == {
        "status", "exception", "stdout", "stderr", "init_seconds", "test_seconds",
    }
    json.dumps(message)


def test_repeated_executions_are_isolated_and_identical(shim, workspace):
    # The candidate mutates module state; fresh processes must not see it.
    candidate = workspace(
        "c.py",
        "CALLS = []\n"
        "def f(x):\n"
        "    CALLS.append(x)\n"
        "    assert len(CALLS) == 1\n"
        "    return x\n",
    )
    test = workspace("t.py", CHECK_IDENTITY)
    statuses = [shim(candidate, test, "f")[1]["status"] for _ in range(3)]
    assert statuses == ["pass", "pass", "pass"]


def test_bad_usage_exits_nonzero_without_message(workspace):
    import subprocess
    import sys

    proc = subprocess.run(
        [sys.executable, "-m", "seceval_shim", "one-arg-only"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 2
    assert proc.stdout == ""
