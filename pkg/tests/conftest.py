from __future__ import annotations

import pytest

from secgenaudit import assets
from secgenaudit.corpus import load_tasks
from secgenaudit.modelgate import Decoding, EndpointConfig


@pytest.fixture(scope="session")
def main_manifest():
    return load_tasks(assets.corpus_path("codeseceval_style"))


@pytest.fixture(scope="session")
def casestudy_manifest():
    return load_tasks(assets.corpus_path("casestudy_cwe502"))


@pytest.fixture(scope="session")
def casestudy_task(casestudy_manifest):
    return casestudy_manifest.by_id("CWE-502_mitre_1")


@pytest.fixture()
def endpoint():
    return EndpointConfig(
        name="unit-test",
        base_url="https://example.invalid/v1",
        model="test-model",
        decoding=Decoding(0.4, 0.95, 300, 1),
        samples_per_prompt=10,
        task_modes=("Completion",),
    )


class ScriptedTransport:
    """Transport double returning queued replies or raising queued errors."""

    def __init__(self, replies):
        self.replies = list(replies)
        self.calls = 0

    def __call__(self, endpoint, prompt, sample_index):
        self.calls += 1
        if not self.replies:
            raise ConnectionError("transport exhausted")
        reply = self.replies.pop(0)
        if isinstance(reply, Exception):
            raise reply
        return reply


@pytest.fixture()
def scripted_transport():
    return ScriptedTransport
