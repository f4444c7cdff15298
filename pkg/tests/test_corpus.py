from __future__ import annotations

import json

import pytest

from secgenaudit import assets
from secgenaudit.corpus import (
    Mode,
    Subset,
    checker_name,
    derive_entry_point,
    dump_tasks,
    load_fixture_run,
    load_tasks,
)
from secgenaudit.errors import IoFailure, MalformedRecord, VersionMismatch


def test_full_corpus_counts(main_manifest):
    assert len(main_manifest) == 180
    assert main_manifest.counts["SecEvalBase"] == 67
    assert main_manifest.counts["SecEvalPlus"] == 113
    assert len({t.cwe for t in main_manifest.tasks}) == 44


def test_order_preserved_and_partition(main_manifest):
    assert main_manifest.tasks[0].id == "seceval-base-000"
    base = sum(1 for t in main_manifest.tasks if t.subset is Subset.SECEVAL_BASE)
    plus = sum(1 for t in main_manifest.tasks if t.subset is Subset.SECEVAL_PLUS)
    assert base + plus == len(main_manifest)
    for task in main_manifest.tasks:
        assert (task.mode is Mode.COMPLETION) == (task.subset is Subset.SECEVAL_BASE)


def test_empty_corpus(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("", encoding="utf-8")
    manifest = load_tasks(path)
    assert len(manifest) == 0
    assert manifest.counts == {"SecEvalBase": 0, "SecEvalPlus": 0}


def _valid_record():
    return {
        "id": "t-1",
        "cwe": "CWE-78",
        "subset": "SecEvalBase",
        "mode": "Completion",
        "prompt": "# do the thing\ndef run(x):\n    '''doc'''\n",
        "insecure_code": "def run(x):\n    return eval(x)\n",
        "secure_code": "def run(x):\n    return x\n",
        "test": "def check(candidate):\n    assert candidate(1) == 1\n",
        "entry_point": "run",
    }


def _write_records(tmp_path, records):
    path = tmp_path / "corpus.jsonl"
    path.write_text(
        "".join(json.dumps(r) + "\n" for r in records), encoding="utf-8"
    )
    return path


def test_missing_test_field_names_field(tmp_path):
    record = _valid_record()
    record["test"] = ""
    with pytest.raises(MalformedRecord) as exc_info:
        load_tasks(_write_records(tmp_path, [record]))
    assert exc_info.value.field == "test"
    assert exc_info.value.record_id == "t-1"


def test_two_checkers_rejected(tmp_path):
    record = _valid_record()
    record["test"] = "def check(c):\n    pass\n\ndef also(c):\n    pass\n"
    with pytest.raises(MalformedRecord) as exc_info:
        load_tasks(_write_records(tmp_path, [record]))
    assert exc_info.value.field == "test"


def test_mode_subset_consistency_enforced(tmp_path):
    record = _valid_record()
    record["mode"] = "Generation"
    with pytest.raises(MalformedRecord) as exc_info:
        load_tasks(_write_records(tmp_path, [record]))
    assert exc_info.value.field == "mode"


def test_entry_point_must_be_defined_in_reference(tmp_path):
    record = _valid_record()
    record["entry_point"] = "not_there"
    with pytest.raises(MalformedRecord) as exc_info:
        load_tasks(_write_records(tmp_path, [record]))
    assert exc_info.value.field == "entry_point"


def test_entry_point_derived_when_absent(tmp_path):
    record = _valid_record()
    del record["entry_point"]
    manifest = load_tasks(_write_records(tmp_path, [record]))
    assert manifest.tasks[0].entry_point == "run"


def test_duplicate_ids_rejected(tmp_path):
    record = _valid_record()
    with pytest.raises(MalformedRecord) as exc_info:
        load_tasks(_write_records(tmp_path, [record, record]))
    assert exc_info.value.field == "id"


def test_unreadable_path_is_io_failure(tmp_path):
    with pytest.raises(IoFailure):
        load_tasks(tmp_path / "missing.jsonl")


def test_round_trip_equality(tmp_path, main_manifest):
    out = tmp_path / "round.jsonl"
    dump_tasks(main_manifest, out)
    reloaded = load_tasks(out)
    assert reloaded.tasks == main_manifest.tasks
    assert reloaded.counts == main_manifest.counts


def test_two_loads_identical(tmp_path):
    path = _write_records(tmp_path, [_valid_record()])
    assert load_tasks(path) == load_tasks(path)


def test_helpers():
    assert checker_name("def check(c):\n    pass\n") == "check"
    assert checker_name("x = 1\n") is None
    assert derive_entry_point("def a():\n    pass\n\ndef b():\n    pass\n") == "a"
    assert derive_entry_point("x = 1\n") is None


# --- fixture runs -----------------------------------------------------------


def test_sven_fixture_slots_and_generated(main_manifest):
    run = load_fixture_run(assets.fixture_path("sven_consensus"))
    assert len(run.slots) == 670
    assert run.generated_count() == 532
    run.validate_against(main_manifest)


def test_fixture_with_zero_records(tmp_path):
    path = tmp_path / "empty_run.jsonl"
    header = {"format": "secgenaudit-run", "version": 1, "endpoint": "x", "samples_per_prompt": 1}
    path.write_text(json.dumps(header) + "\n", encoding="utf-8")
    run = load_fixture_run(path)
    assert run.generated_count() == 0
    assert run.slots == []


def test_fixture_unknown_task_id_rejected(tmp_path, main_manifest):
    path = tmp_path / "bad_run.jsonl"
    header = {"format": "secgenaudit-run", "version": 1, "endpoint": "x", "samples_per_prompt": 1}
    slot = {
        "task_id": "no-such-task",
        "sample_index": 0,
        "attack": "Baseline",
        "generation": {"status": "ok", "extracted_code": "x = 1\n"},
        "test": {"status": "pass"},
    }
    path.write_text(json.dumps(header) + "\n" + json.dumps(slot) + "\n", encoding="utf-8")
    run = load_fixture_run(path)
    with pytest.raises(MalformedRecord):
        run.validate_against(main_manifest)


def test_version_mismatch(tmp_path):
    path = tmp_path / "v2.jsonl"
    path.write_text(
        json.dumps({"format": "secgenaudit-run", "version": 99}) + "\n", encoding="utf-8"
    )
    with pytest.raises(VersionMismatch):
        load_fixture_run(path)
