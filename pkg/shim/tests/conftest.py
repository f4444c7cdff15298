from __future__ import annotations

import json
import subprocess
import sys
import time
from pathlib import Path

import pytest


def run_shim(candidate: Path, test: Path, entry: str, init: float = 5, limit: float = 10):
    started = time.monotonic()
    proc = subprocess.run(
        [sys.executable, "-m", "seceval_shim", str(candidate), str(test), entry,
         str(init), str(limit)],
        capture_output=True,
        text=True,
        timeout=init + limit + 10,
    )
    wall = time.monotonic() - started
    lines = [line for line in proc.stdout.strip().splitlines() if line.strip()]
    message = json.loads(lines[-1]) if lines else None
    return proc, message, wall


@pytest.fixture()
def shim():
    return run_shim


@pytest.fixture()
def workspace(tmp_path):
    def write(name: str, text: str) -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return write
