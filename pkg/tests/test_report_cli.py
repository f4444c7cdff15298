from __future__ import annotations

import json
import shutil
from pathlib import Path

import pytest

from secgenaudit import assets
from secgenaudit.cli import AuditConfig, Pipeline, load_config, main
from secgenaudit.corpus import load_tasks
from secgenaudit.errors import ConfigError, EmptyRun
from secgenaudit.report import per_cwe_breakdown, render_csv, render_json, render_markdown
from secgenaudit.runio import load_recorded_run
from secgenaudit.verdict import aggregate

GOLDEN = Path(__file__).parent / "golden"


# --- configuration ---------------------------------------------------------------


def test_default_config_requires_recorded_run():
    with pytest.raises(ConfigError):
        load_config(None)


def test_unknown_attack_is_config_error(tmp_path):
    config_file = tmp_path / "audit.yaml"
    config_file.write_text(
        "recorded_run: sven_consensus\nattacks: [NoSuchAttack]\n", encoding="utf-8"
    )
    with pytest.raises(ConfigError):
        load_config(config_file)


def test_unknown_key_is_config_error(tmp_path):
    config_file = tmp_path / "audit.yaml"
    config_file.write_text("recorded_run: sven_consensus\nbananas: 1\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(config_file)


def test_live_backend_requires_endpoint(tmp_path):
    config_file = tmp_path / "audit.yaml"
    config_file.write_text("backend: live\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(config_file)


def test_endpoint_parsing_with_preset(tmp_path):
    config_file = tmp_path / "audit.yaml"
    config_file.write_text(
        "backend: live\n"
        "corpus: codeseceval_style\n"
        "endpoints:\n"
        "  - name: svc\n"
        "    preset: unified-audit\n"
        "    base_url: https://svc.example/v1\n"
        "    model: m1\n"
        "judge:\n"
        "  name: judge\n"
        "  preset: judge\n"
        "  base_url: https://judge.example/v1\n"
        "  model: j1\n",
        encoding="utf-8",
    )
    config = load_config(config_file)
    assert config.endpoints[0].samples_per_prompt == 10
    assert config.endpoints[0].decoding.seed == 1
    assert config.endpoints[0].base_url == "https://svc.example/v1"
    assert config.judge.decoding.temperature == 0.0


def test_live_judge_requires_endpoint(tmp_path):
    config_file = tmp_path / "audit.yaml"
    config_file.write_text(
        "backend: live\n"
        "endpoints:\n"
        "  - name: svc\n"
        "    preset: unified-audit\n",
        encoding="utf-8",
    )
    with pytest.raises(ConfigError):
        load_config(config_file)


def test_cli_exit_codes(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("backend: nonsense\n", encoding="utf-8")
    assert main(["--config", str(bad), "audit"]) == 2
    assert main(["fixtures"]) == 0
    good = tmp_path / "good.yaml"
    good.write_text(
        f"recorded_run: sven_consensus\noutput_dir: {tmp_path / 'runs'}\n", encoding="utf-8"
    )
    assert main(["--config", str(good), "audit"]) == 0


# --- report rendering --------------------------------------------------------------


@pytest.fixture(scope="module")
def sven_rows():
    run = load_recorded_run(assets.fixture_path("sven_consensus"))
    manifest = load_tasks(assets.corpus_path("codeseceval_style"))
    return run, manifest, aggregate(run, manifest)


def test_markdown_carries_consensus_row(sven_rows):
    run, manifest, rows = sven_rows
    text = render_markdown(rows, run, manifest)
    assert "| Baseline | 79.4 | 7.0 | 72.4 | 46.0 |" in text


def test_markdown_attack_table_style():
    run = load_recorded_run(assets.fixture_path("safecoder_attacks"))
    manifest = load_tasks(assets.corpus_path("fx_completion_100"))
    rows = aggregate(run, manifest)
    text = render_markdown(rows, run, manifest)
    assert "| InverseComment | 80.6 (-8.4) |" in text
    assert "| StudentStyle | 86.3 (-2.7) |" in text
    assert "| SparseComment | 86.8 (-2.2) |" in text
    assert "| SparseQuestion | 86.4 (-2.6) |" in text


def test_promsec_attack_table_positive_deltas():
    run = load_recorded_run(assets.fixture_path("promsec_attacks"))
    manifest = load_tasks(assets.corpus_path("fx_generation_100"))
    rows = aggregate(run, manifest)
    text = render_markdown(rows, run, manifest, ratio_analyzer="bandit")
    assert "| SafeComment | 93.0 (+5.0) |" in text
    assert "| DeadFunc_200 | 98.0 (+10.0) |" in text


def test_csv_and_json_shapes(sven_rows):
    run, manifest, rows = sven_rows
    csv_text = render_csv(rows)
    assert csv_text.splitlines()[0].startswith("endpoint,attack,expected")
    assert "sven,Baseline,670,532,47,485,308,138" in csv_text

    payload = json.loads(render_json(rows, run, manifest))
    attack = payload["attacks"][0]
    assert attack["counts"] == {
        "generated": 532, "secure_functional": 47, "vulnerable": 485,
        "non_functional": 308, "generation_failure": 138,
    }
    assert attack["rates"]["secure_functional"] == "7.0"


def test_empty_rows_raise(sven_rows):
    run, manifest, _ = sven_rows
    with pytest.raises(EmptyRun):
        render_csv([])
    with pytest.raises(EmptyRun):
        render_markdown([], run, manifest)


def test_per_cwe_breakdown_conserves_slots(sven_rows):
    run, manifest, rows = sven_rows
    breakdown = per_cwe_breakdown(run, manifest)
    assert sum(b.expected for b in breakdown) == rows[0].expected
    assert sum(b.generated for b in breakdown) == rows[0].generated
    assert sum(b.secure_functional for b in breakdown) == rows[0].secure_functional
    assert sum(b.non_functional for b in breakdown) == rows[0].non_functional


def test_single_task_run_renders(tmp_path, casestudy_manifest):
    run = load_recorded_run(assets.fixture_path("casestudy_run"))
    rows = aggregate(run, casestudy_manifest)
    text = render_markdown(rows, run, casestudy_manifest)
    assert "CWE-502" in text
    assert render_csv(rows)


# --- pipeline ------------------------------------------------------------------


def _recorded_config(tmp_path, fixture="sven_consensus"):
    return AuditConfig(
        backend="recorded",
        recorded_run=fixture,
        output_dir=str(tmp_path / "runs"),
        cache_dir=str(tmp_path / "cache"),
    )


def test_audit_pipeline_end_to_end(tmp_path):
    pipeline = Pipeline(_recorded_config(tmp_path))
    report_dir = pipeline.run_all()
    report = (report_dir / "report.md").read_text(encoding="utf-8")
    assert "| Baseline | 79.4 | 7.0 | 72.4 | 46.0 |" in report


def test_stage_isolation_rebuilds_identically(tmp_path):
    pipeline = Pipeline(_recorded_config(tmp_path))
    report_dir = pipeline.run_all()
    before = (report_dir / "report.md").read_bytes()
    run_before = (pipeline.run_root / "run.jsonl").read_bytes()

    for stage_dir in [pipeline.run_root / "Baseline" / "consensus", report_dir]:
        shutil.rmtree(stage_dir)
    (pipeline.run_root / "run.jsonl").unlink()

    fresh = Pipeline(_recorded_config(tmp_path))
    fresh_report_dir = fresh.run_all()
    assert (fresh_report_dir / "report.md").read_bytes() == before
    assert (fresh.run_root / "run.jsonl").read_bytes() == run_before


def test_resume_after_interrupted_stage(tmp_path):
    pipeline = Pipeline(_recorded_config(tmp_path))
    pipeline.stage_ingest()
    pipeline.stage_perturb()
    pipeline.stage_generate()
    # Simulate a killed analyze stage: partial output, no completion marker.
    analysis_dir = pipeline.run_root / "Baseline" / "analysis"
    analysis_dir.mkdir(parents=True)
    (analysis_dir / "records.jsonl").write_text("{broken", encoding="utf-8")

    resumed = Pipeline(_recorded_config(tmp_path))
    report_dir = resumed.run_all()
    reference = Pipeline(
        _recorded_config(tmp_path / "fresh")
    ).run_all()
    assert (report_dir / "report.md").read_bytes() == (reference / "report.md").read_bytes()


def test_golden_report_bytes(tmp_path):
    pipeline = Pipeline(_recorded_config(tmp_path))
    report_dir = pipeline.run_all()
    golden = (GOLDEN / "sven_consensus_report.md").read_bytes()
    assert (report_dir / "report.md").read_bytes() == golden


def test_inertness_check_runs_recorded_free(tmp_path):
    # Static half only: the dynamic half needs the live shim and is owned by
    # the shim package's acceptance suite.
    from secgenaudit.perturb import dead_code_is_inert, inject_dead_code

    manifest = load_tasks(assets.corpus_path("codeseceval_style"))
    for task in manifest.tasks[:25]:
        assert dead_code_is_inert(inject_dead_code(task.secure_reference, 10))


def test_every_shipped_fixture_replays(tmp_path):
    for name in assets.list_fixtures():
        config = AuditConfig(
            backend="recorded", recorded_run=name,
            output_dir=str(tmp_path / name), cache_dir=str(tmp_path / "cache"),
        )
        pipeline = Pipeline(config)
        pipeline.run_all()
        run = load_recorded_run(pipeline.run_root / "run.jsonl")
        rows = aggregate(run, pipeline.manifest)
        assert rows, name
        for row in rows:
            assert row.expected == row.generated + row.generation_failure, (name, row.attack)
        assert (pipeline.run_root / "report" / "report.md").exists()
        assert (pipeline.run_root / "report" / "report.json").exists()


def test_llm_template_stage_handles_templateless_and_commentless(tmp_path):
    import json as json_module

    from secgenaudit.modelgate import EndpointConfig, ModelGateway

    manifest = load_tasks(assets.corpus_path("codeseceval_style"))
    task = manifest.by_id("seceval-base-000")
    bare = dict(task.to_record(), id="bare", prompt="x = 1\n",
                secure_code="def run_bare(v):\n    return v\n",
                test="def check(c):\n    assert c(1) == 1\n", entry_point="run_bare")
    corpus = tmp_path / "two.jsonl"
    corpus.write_text(
        json_module.dumps(task.to_record()) + "\n" + json_module.dumps(bare) + "\n",
        encoding="utf-8",
    )
    config = AuditConfig(
        backend="live", corpus=str(corpus),
        output_dir=str(tmp_path / "runs"), cache_dir=str(tmp_path / "cache"),
        analyzers=["bandit"], attacks=["SparseComment", "SparseQuestion"],
        attack_backend="llm_template",
        endpoints=[EndpointConfig(name="svc", task_modes=("Completion",))],
        attack_llm=EndpointConfig(name="attacker", task_modes=("Completion",)),
    )
    pipeline = Pipeline(config)
    pipeline._gateway = ModelGateway(
        config.cache_dir,
        transport=lambda e, p, s: "How do I finish this function?",
        sleep=lambda s: None,
    )
    pipeline.stage_ingest()
    pipeline.stage_perturb()

    sparse = {
        r["task_id"]: r
        for r in json_read(pipeline.run_root / "SparseComment" / "prompts" / "prompts.jsonl")
    }
    # SparseComment has no template: deterministic removal still applies.
    assert sparse[task.id]["status"] == "ok"
    assert sparse[task.id]["transformed"] != task.prompt_source
    # A comment-free prompt degrades to flagged identity instead of failing.
    question = {
        r["task_id"]: r
        for r in json_read(pipeline.run_root / "SparseQuestion" / "prompts" / "prompts.jsonl")
    }
    assert question["bare"]["status"] == "ok"
    assert question["bare"]["transformed"] == "x = 1\n"
    assert "degraded" in question["bare"].get("note", "")
    assert "?" in question[task.id]["transformed"]


def json_read(path):
    import json as json_module

    return [
        json_module.loads(line)
        for line in path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]


def test_failed_perturbation_becomes_generation_failure(tmp_path, monkeypatch):
    import secgenaudit.cli as cli_module
    from secgenaudit.errors import MutationBrokeTheParse

    def always_breaks(spec, task, llm_response=None, seed=0):
        raise MutationBrokeTheParse("forced")

    monkeypatch.setattr(cli_module, "apply_attack", always_breaks)
    config = AuditConfig(
        backend="recorded", recorded_run="casestudy_run",
        output_dir=str(tmp_path / "runs"), cache_dir=str(tmp_path / "cache"),
    )
    pipeline = Pipeline(config)
    # Case-study fixture carries InverseComment/StudentStyle attacks whose
    # perturbation we just sabotaged; Baseline is untouched.
    pipeline.run_all()
    run = load_recorded_run(pipeline.run_root / "run.jsonl")
    sabotaged = [s for s in run.slots if s.attack != "Baseline"]
    assert sabotaged
    assert all(s.generation.status.value == "failed_perturbation" for s in sabotaged)
    rows = {r.attack: r for r in aggregate(run, pipeline.manifest)}
    assert rows["InverseComment"].generation_failure == rows["InverseComment"].expected


def _shim_available() -> bool:
    import importlib.util

    return importlib.util.find_spec("seceval_shim") is not None


@pytest.mark.skipif(
    not _shim_available() or shutil.which("bandit") is None,
    reason="live path needs the shim package and the bandit CLI",
)
def test_live_pipeline_small_corpus(tmp_path):
    """Live backend end to end: scripted transport, real bandit, real shim."""
    import json as json_module

    from secgenaudit.modelgate import EndpointConfig, ModelGateway

    manifest = load_tasks(assets.corpus_path("codeseceval_style"))
    small = tmp_path / "small.jsonl"
    records = [manifest.by_id("seceval-base-000"), manifest.by_id("seceval-base-003")]
    small.write_text(
        "\n".join(json_module.dumps(t.to_record()) for t in records) + "\n",
        encoding="utf-8",
    )

    replies = {
        records[0].id: records[0].secure_reference,          # passes, bandit-clean
        records[1].id: records[1].insecure_example,          # pickle use, bandit flags
    }

    def transport(endpoint, prompt, sample_index):
        for task in records:
            if task.entry_point in prompt:
                return f"```python\n{replies[task.id]}\n```"
        return "I cannot help with that."

    config = AuditConfig(
        backend="live", corpus=str(small),
        output_dir=str(tmp_path / "runs"), cache_dir=str(tmp_path / "cache"),
        analyzers=["bandit"], attacks=["Baseline", "DeadCode_10"],
        endpoints=[
            EndpointConfig(name="scripted", samples_per_prompt=2, task_modes=("Completion",))
        ],
    )
    pipeline = Pipeline(config)
    pipeline._gateway = ModelGateway(
        config.cache_dir, transport=transport, sleep=lambda s: None
    )
    pipeline.run_all()

    run = load_recorded_run(pipeline.run_root / "run.jsonl")
    rows = {r.attack: r for r in aggregate(run, pipeline.manifest)}
    for attack in ("Baseline", "DeadCode_10"):
        row = rows[attack]
        assert row.expected == 4
        assert row.generated == 4
        # The clean reference passes everything; the pickle variant is flagged.
        assert row.secure_functional == 2
        assert row.vulnerable == 2
        assert row.analyzer_counts["bandit"].secure == 2

    report = (pipeline.run_root / "report" / "report.md").read_text(encoding="utf-8")
    assert "DeadCode_10" in report
