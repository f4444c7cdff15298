"""Load a candidate, run its checker under timeouts, emit one protocol message.

Invocation:

    python -m seceval_shim CANDIDATE TEST ENTRY_POINT INIT_TIMEOUT TEST_TIMEOUT

The single result document is the last stdout content; the exit code is 0
whenever a protocol message was emitted.  Timeouts are enforced with
interpreter-level alarms; the parent process is expected to hold a hard-kill
backstop on top of these.

Message fields: status (pass | fail | error | timeout | missing_entry_point),
exception, stdout, stderr, init_seconds, test_seconds.
"""

from __future__ import annotations

import ast
import io
import json
import os
import signal
import sys
import time
import types

STREAM_CAP = 64 * 1024


class _PhaseTimeout(Exception):
    pass


def _alarm(_signum, _frame):
    raise _PhaseTimeout()


def _arm(seconds: float) -> None:
    signal.signal(signal.SIGALRM, _alarm)
    signal.setitimer(signal.ITIMER_REAL, seconds)


def _disarm() -> None:
    signal.setitimer(signal.ITIMER_REAL, 0)


def _exception_summary(exc: BaseException) -> str:
    name = type(exc).__name__
    text = str(exc)
    return f"{name}: {text}" if text else name


def _checker_name(test_source: str) -> str | None:
    try:
        tree = ast.parse(test_source)
    except SyntaxError:
        return None
    names = [
        node.name
        for node in tree.body
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef))
    ]
    return names[0] if len(names) == 1 else None


def run(
    candidate_path: str,
    test_path: str,
    entry_point: str,
    init_timeout: float,
    test_timeout: float,
) -> dict:
    """Execute one candidate; always returns a protocol message dict."""
    out_buffer = io.StringIO()
    err_buffer = io.StringIO()
    message = {
        "status": "error",
        "exception": None,
        "stdout": "",
        "stderr": "",
        "init_seconds": 0.0,
        "test_seconds": 0.0,
    }

    # Candidate output is buffered from before the load so nothing the
    # candidate prints can masquerade as the protocol message.
    real_stdout, real_stderr = sys.stdout, sys.stderr
    sys.stdout, sys.stderr = out_buffer, err_buffer
    try:
        candidate_source = open(candidate_path, encoding="utf-8").read()
        test_source = open(test_path, encoding="utf-8").read()

        namespace = types.ModuleType("candidate").__dict__
        namespace["__file__"] = candidate_path

        started = time.monotonic()
        try:
            _arm(init_timeout)
            exec(compile(candidate_source, candidate_path, "exec"), namespace)  # noqa: S102
        except _PhaseTimeout:
            message["status"] = "timeout"
            message["init_seconds"] = time.monotonic() - started
            return message
        except BaseException as exc:  # import-time crash counts as error
            message["status"] = "error"
            message["exception"] = _exception_summary(exc)
            message["init_seconds"] = time.monotonic() - started
            return message
        finally:
            _disarm()
        message["init_seconds"] = time.monotonic() - started

        candidate_fn = namespace.get(entry_point)
        if not isinstance(candidate_fn, types.FunctionType):
            message["status"] = "missing_entry_point"
            message["exception"] = f"Entry point {entry_point!r} not found in code"
            return message

        checker_ns: dict = {}
        try:
            exec(compile(test_source, test_path, "exec"), checker_ns)  # noqa: S102
        except BaseException as exc:
            message["status"] = "error"
            message["exception"] = f"test suite failed to load: {_exception_summary(exc)}"
            return message
        name = _checker_name(test_source)
        checker = checker_ns.get(name) if name else None
        if not callable(checker):
            message["status"] = "error"
            message["exception"] = "test suite does not define exactly one checker"
            return message

        started = time.monotonic()
        try:
            _arm(test_timeout)
            checker(candidate_fn)
            message["status"] = "pass"
        except _PhaseTimeout:
            message["status"] = "timeout"
        except AssertionError as exc:
            message["status"] = "fail"
            message["exception"] = _exception_summary(exc)
        except BaseException as exc:
            message["status"] = "error"
            message["exception"] = _exception_summary(exc)
        finally:
            _disarm()
            message["test_seconds"] = time.monotonic() - started
        return message
    except OSError as exc:
        message["status"] = "error"
        message["exception"] = _exception_summary(exc)
        return message
    finally:
        sys.stdout, sys.stderr = real_stdout, real_stderr
        message["stdout"] = out_buffer.getvalue()[-STREAM_CAP:]
        message["stderr"] = err_buffer.getvalue()[-STREAM_CAP:]
        if message["status"] == "pass":
            message["exception"] = None


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 5:
        print(
            "usage: seceval-shim CANDIDATE TEST ENTRY_POINT INIT_TIMEOUT TEST_TIMEOUT",
            file=sys.stderr,
        )
        return 2
    candidate_path, test_path, entry_point, init_raw, test_raw = argv
    try:
        init_timeout = float(init_raw)
        test_timeout = float(test_raw)
    except ValueError:
        print("timeouts must be numbers", file=sys.stderr)
        return 2

    # Duplicate the real stdout first: even if the candidate rebinds or
    # closes Python-level streams, the protocol channel survives.
    protocol_fd = os.dup(1)
    message = run(candidate_path, test_path, entry_point, init_timeout, test_timeout)
    payload = json.dumps(message, sort_keys=True, ensure_ascii=False) + "\n"
    os.write(protocol_fd, payload.encode("utf-8"))
    os.close(protocol_fd)
    return 0


if __name__ == "__main__":
    sys.exit(main())
