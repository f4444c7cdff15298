"""Pipeline driver: configuration, staged runs, persistence, reports.

The audit composes ingest -> perturb -> generate -> analyze -> test ->
consensus -> report.  Every stage persists its output under the run
directory (one directory per attack with prompts/, generations/,
analysis/, tests/, consensus/ subdirs), so any stage can be deleted and
reproduced from its upstream artifacts.  Recorded-backend audits replay
shipped or saved run files and are byte-deterministic end to end.

Exit codes: 0 success, 2 configuration error, 3 stage fault.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path

import click
import yaml

from . import assets
from .analyzers import build_adapters
from .corpus import Mode, Task, dump_tasks, load_tasks
from .errors import (
    AuditError,
    ConfigError,
    EmptyRun,
    MissingSlot,
    MutationBrokeTheParse,
    StageFault,
)
from .execution import LiveShimBackend, execute_batch
from .modelgate import (
    Decoding,
    EndpointConfig,
    GenerationRecord,
    GenerationStatus,
    ModelGateway,
    expected_count,
    preset,
)
from .perturb import (
    BASELINE_LABEL,
    AttackName,
    Backend,
    apply_attack,
    dead_code_is_inert,
    inject_dead_code,
    inject_dead_functions,
    parse_attack_label,
    render_attack_prompt,
)
from .report import render_csv, render_json, render_markdown
from .runio import RecordedRun, RecordedSlot, load_recorded_run, write_recorded_run
from .verdict import aggregate, slot_consensus

STAGES = ("ingest", "perturb", "generate", "analyze", "test", "consensus", "report")


# ---------------------------------------------------------------------------
# Configuration


@dataclass
class AuditConfig:
    corpus: str = "codeseceval_style"
    output_dir: str = "runs"
    cache_dir: str = ".secgenaudit-cache"
    backend: str = "recorded"
    recorded_run: str | None = None
    seed: int = 0
    jobs: int = 0
    limits: dict = dataclass_field(default_factory=lambda: {"init": 5.0, "test": 10.0})
    analyzers: list[str] = dataclass_field(
        default_factory=lambda: ["bandit", "codeql", "llm_judge"]
    )
    attacks: list[str] = dataclass_field(default_factory=lambda: [BASELINE_LABEL])
    attack_backend: str = "deterministic"
    endpoints: list[EndpointConfig] = dataclass_field(default_factory=list)
    judge: EndpointConfig | None = None
    attack_llm: EndpointConfig | None = None
    ratio_analyzer: str = "codeql"
    rate_denominator: str = "expected"
    shim_cmd: list[str] | None = None

    def validate(self) -> None:
        if self.backend not in ("recorded", "live"):
            raise ConfigError(f"backend must be recorded or live, got {self.backend!r}")
        if self.backend == "recorded" and not self.recorded_run:
            raise ConfigError("recorded backend requires recorded_run (fixture name or path)")
        if self.backend == "live" and not self.endpoints:
            raise ConfigError("live backend requires at least one endpoint")
        for label in self.attacks:
            if label != BASELINE_LABEL:
                parse_attack_label(label)
        if float(self.limits.get("init", 0)) <= 0 or float(self.limits.get("test", 0)) <= 0:
            raise ConfigError("sandbox limits must be positive")
        if self.attack_backend not in ("deterministic", "llm_template"):
            raise ConfigError(f"unknown attack backend {self.attack_backend!r}")
        if self.rate_denominator not in ("expected", "generated"):
            raise ConfigError(f"unknown rate denominator {self.rate_denominator!r}")
        if self.backend == "live" and "llm_judge" in self.analyzers and self.judge is None:
            raise ConfigError("live runs with the llm_judge analyzer need a judge endpoint")
        if self.backend == "live" and self.attack_backend == "llm_template" and self.attack_llm is None:
            raise ConfigError("the llm_template attack backend needs an attack_llm endpoint")


def _endpoint_from_dict(raw: dict) -> EndpointConfig:
    raw = dict(raw)
    kind = raw.pop("preset", None)
    decoding_raw = raw.pop("decoding", None)
    if decoding_raw is not None:
        raw["decoding"] = Decoding(
            temperature=float(decoding_raw.get("temperature", 0.4)),
            top_p=float(decoding_raw.get("top_p", 0.95)),
            max_new_tokens=int(decoding_raw.get("max_new_tokens", 300)),
            seed=decoding_raw.get("seed", 1),
        )
    if "task_modes" in raw:
        raw["task_modes"] = tuple(raw["task_modes"])
    try:
        if kind:
            name = raw.pop("name", None)
            return preset(kind, name=name, **raw)
        return EndpointConfig(**raw)
    except TypeError as exc:
        raise ConfigError(f"bad endpoint definition: {exc}") from exc


def load_config(path: str | Path | None, **overrides) -> AuditConfig:
    raw: dict = {}
    if path is not None:
        try:
            raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid config YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")

    endpoints = [_endpoint_from_dict(e) for e in raw.pop("endpoints", [])]
    judge = raw.pop("judge", None)
    attack_llm = raw.pop("attack_llm", None)
    config = AuditConfig(
        endpoints=endpoints,
        judge=_endpoint_from_dict(judge) if judge else None,
        attack_llm=_endpoint_from_dict(attack_llm) if attack_llm else None,
    )
    for key, value in raw.items():
        if not hasattr(config, key):
            raise ConfigError(f"unknown config key {key!r}")
        setattr(config, key, value)
    for key, value in overrides.items():
        if value is not None:
            setattr(config, key, value)
    config.validate()
    return config


def resolve_corpus(name_or_path: str) -> Path:
    path = Path(name_or_path)
    if path.exists():
        return path
    return assets.corpus_path(name_or_path)


def resolve_run(name_or_path: str) -> Path:
    path = Path(name_or_path)
    if path.exists():
        return path
    return assets.fixture_path(name_or_path)


# ---------------------------------------------------------------------------
# Stage plumbing


def _write_jsonl(path: Path, records: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(r, sort_keys=True, ensure_ascii=False) for r in records]
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def _read_jsonl(path: Path) -> list[dict]:
    return [
        json.loads(line)
        for line in path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]


def _mark_complete(stage_dir: Path) -> None:
    stage_dir.mkdir(parents=True, exist_ok=True)
    (stage_dir / ".complete").write_text("ok\n", encoding="utf-8")


def _is_complete(stage_dir: Path) -> bool:
    return (stage_dir / ".complete").exists()


class Pipeline:
    """One endpoint's staged audit under a single run directory."""

    def __init__(self, config: AuditConfig, endpoint_name: str | None = None):
        self.config = config
        self.fixture: RecordedRun | None = None
        if config.backend == "recorded":
            self.fixture = load_recorded_run(resolve_run(config.recorded_run))
            corpus_ref = self.fixture.header.get("corpus") or config.corpus
            self.manifest = load_tasks(resolve_corpus(corpus_ref))
            self.fixture.validate_against(self.manifest)
            self.endpoint = self.fixture.endpoint_config()
            self.attacks = list(self.fixture.attacks())
        else:
            self.manifest = load_tasks(resolve_corpus(config.corpus))
            self.endpoint = self._pick_endpoint(endpoint_name)
            self.attacks = list(config.attacks)
        self.run_root = Path(config.output_dir) / self.endpoint.name
        self._gateway: ModelGateway | None = None

    def _pick_endpoint(self, name: str | None) -> EndpointConfig:
        if name is None:
            return self.config.endpoints[0]
        for endpoint in self.config.endpoints:
            if endpoint.name == name:
                return endpoint
        raise ConfigError(f"no endpoint named {name!r} in config")

    @property
    def gateway(self) -> ModelGateway:
        if self._gateway is None:
            self._gateway = ModelGateway(self.config.cache_dir)
        return self._gateway

    def eligible_tasks(self) -> list[Task]:
        return [
            task for task in self.manifest.tasks
            if task.mode.value in self.endpoint.task_modes
        ]

    def _attack_dir(self, attack: str) -> Path:
        return self.run_root / attack

    # -- stages ------------------------------------------------------------

    def stage_ingest(self, force: bool = False) -> Path:
        stage = self.run_root / "ingest"
        if _is_complete(stage) and not force:
            return stage
        stage.mkdir(parents=True, exist_ok=True)
        dump_tasks(self.manifest, stage / "manifest.jsonl")
        meta = {
            "endpoint": self.endpoint.name,
            "samples_per_prompt": self.endpoint.samples_per_prompt,
            "task_modes": list(self.endpoint.task_modes),
            "expected": expected_count(self.manifest, self.endpoint),
            "counts": self.manifest.counts,
            "attacks": self.attacks,
            "backend": self.config.backend,
        }
        (stage / "meta.json").write_text(
            json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        _mark_complete(stage)
        return stage

    def stage_perturb(self, force: bool = False) -> None:
        # Recorded replays take generations from the fixture; prompts are
        # materialized deterministically so the stage stays offline.
        backend = (
            Backend.LLM_TEMPLATE
            if self.config.attack_backend == "llm_template" and self.fixture is None
            else Backend.DETERMINISTIC
        )
        for attack in self.attacks:
            stage = self._attack_dir(attack) / "prompts"
            if _is_complete(stage) and not force:
                continue
            records = []
            for task in self.eligible_tasks():
                records.append(self._perturb_one(attack, task, backend))
            _write_jsonl(stage / "prompts.jsonl", records)
            _mark_complete(stage)

    def _perturb_one(self, attack: str, task: Task, backend: Backend) -> dict:
        if attack == BASELINE_LABEL:
            return {
                "task_id": task.id,
                "attack": attack,
                "status": "ok",
                "transformed": task.prompt_source,
                "provenance": ["deterministic", str(self.config.seed)],
            }
        spec = parse_attack_label(attack, backend)
        if spec.name is AttackName.SPARSE_COMMENT:
            # Pure removal has no instruction template; always deterministic.
            spec = parse_attack_label(attack, Backend.DETERMINISTIC)
        llm_response = None
        if spec.backend is Backend.LLM_TEMPLATE:
            try:
                instruction = render_attack_prompt(spec, task)
            except MissingSlot as exc:
                # Comment-free tasks cannot fill comment slots; the attack
                # degrades to a flagged identity rather than failing the run.
                return {
                    "task_id": task.id,
                    "attack": attack,
                    "status": "ok",
                    "transformed": task.prompt_source,
                    "note": f"degraded: {exc}",
                    "provenance": ["deterministic", str(self.config.seed)],
                }
            record = self.gateway.complete(
                self._require_attack_llm(), instruction, self.config.seed
            )
            llm_response = record.raw_output
        try:
            perturbed = apply_attack(spec, task, llm_response, seed=self.config.seed)
        except MutationBrokeTheParse as exc:
            return {
                "task_id": task.id,
                "attack": attack,
                "status": "failed_perturbation",
                "note": str(exc),
            }
        return {
            "task_id": task.id,
            "attack": attack,
            "status": "ok",
            "transformed": perturbed.transformed,
            "diff": perturbed.diff_summary,
            "provenance": list(perturbed.provenance),
        }

    def _require_attack_llm(self) -> EndpointConfig:
        if self.config.attack_llm is None:
            raise ConfigError("llm_template attack backend requires an attack_llm endpoint")
        return self.config.attack_llm

    def stage_generate(self, force: bool = False) -> None:
        for attack in self.attacks:
            stage = self._attack_dir(attack) / "generations"
            if _is_complete(stage) and not force:
                continue
            prompts = {
                r["task_id"]: r
                for r in _read_jsonl(self._attack_dir(attack) / "prompts" / "prompts.jsonl")
            }
            records = []
            for task in self.eligible_tasks():
                prompt_record = prompts.get(task.id)
                for sample_index in range(self.endpoint.samples_per_prompt):
                    records.append(
                        self._generate_one(attack, task, sample_index, prompt_record)
                    )
            _write_jsonl(stage / "records.jsonl", records)
            _mark_complete(stage)

    def _generate_one(
        self, attack: str, task: Task, sample_index: int, prompt_record: dict | None
    ) -> dict:
        if prompt_record is not None and prompt_record.get("status") == "failed_perturbation":
            generation = GenerationRecord(
                task_id=task.id, attack=attack, sample_index=sample_index,
                raw_output="", extracted_code="",
                status=GenerationStatus.FAILED_PERTURBATION, endpoint=self.endpoint.name,
            )
            return {
                "task_id": task.id,
                "sample_index": sample_index,
                "generation": generation.to_record(),
            }
        if self.fixture is not None:
            slot = self.fixture.slot(task.id, sample_index, attack)
            if slot is None:
                generation = GenerationRecord(
                    task_id=task.id, attack=attack, sample_index=sample_index,
                    raw_output="", extracted_code="",
                    status=GenerationStatus.EMPTY, endpoint=self.endpoint.name,
                )
            else:
                generation = slot.generation
            return {
                "task_id": task.id,
                "sample_index": sample_index,
                "generation": generation.to_record(),
            }
        prompt = prompt_record["transformed"] if prompt_record else task.prompt_source
        record = self.gateway.complete(self.endpoint, prompt, sample_index)
        return {
            "task_id": task.id,
            "sample_index": sample_index,
            "generation": record.to_record(),
        }

    def stage_analyze(self, force: bool = False) -> None:
        for attack in self.attacks:
            stage = self._attack_dir(attack) / "analysis"
            if _is_complete(stage) and not force:
                continue
            generations = _read_jsonl(
                self._attack_dir(attack) / "generations" / "records.jsonl"
            )
            records = (
                self._analyze_recorded(attack, generations)
                if self.fixture is not None
                else self._analyze_live(attack, generations)
            )
            _write_jsonl(stage / "records.jsonl", records)
            _mark_complete(stage)

    def _analyze_recorded(self, attack: str, generations: list[dict]) -> list[dict]:
        records = []
        for gen in generations:
            if gen["generation"].get("status") != "ok":
                continue
            slot = self.fixture.slot(gen["task_id"], gen["sample_index"], attack)
            verdicts = slot.analyzers if slot else {}
            records.append(
                {
                    "task_id": gen["task_id"],
                    "sample_index": gen["sample_index"],
                    "analyzers": {n: v.to_record() for n, v in sorted(verdicts.items())},
                }
            )
        return records

    def _analyze_live(self, attack: str, generations: list[dict]) -> list[dict]:
        import tempfile

        adapters = build_adapters(
            self.config.analyzers,
            gateway=self.gateway if "llm_judge" in self.config.analyzers else None,
            judge_endpoint=self.config.judge,
        )
        ok = [g for g in generations if g["generation"].get("status") == "ok"]
        records = []
        with tempfile.TemporaryDirectory(prefix="secgenaudit-analysis-") as workdir:
            paths = []
            for gen in ok:
                path = Path(workdir) / f"{gen['task_id']}__{gen['sample_index']}.py"
                path.write_text(gen["generation"].get("extracted_code", ""), encoding="utf-8")
                paths.append(path)
            per_adapter = {
                name: adapter.analyze(paths) for name, adapter in adapters.items()
            }
            for gen, path in zip(ok, paths):
                verdicts = {
                    name: results[str(path)].to_record()
                    for name, results in per_adapter.items()
                }
                records.append(
                    {
                        "task_id": gen["task_id"],
                        "sample_index": gen["sample_index"],
                        "analyzers": verdicts,
                    }
                )
        return records

    def stage_test(self, force: bool = False) -> None:
        for attack in self.attacks:
            stage = self._attack_dir(attack) / "tests"
            if _is_complete(stage) and not force:
                continue
            generations = _read_jsonl(
                self._attack_dir(attack) / "generations" / "records.jsonl"
            )
            ok = [g for g in generations if g["generation"].get("status") == "ok"]
            if self.fixture is not None:
                records = []
                for gen in ok:
                    slot = self.fixture.slot(gen["task_id"], gen["sample_index"], attack)
                    if slot is None or slot.test is None:
                        continue
                    records.append(
                        {
                            "task_id": gen["task_id"],
                            "sample_index": gen["sample_index"],
                            "test": slot.test.to_record(),
                        }
                    )
            else:
                backend = LiveShimBackend(shim_cmd=self.config.shim_cmd)
                items = [
                    (
                        gen["generation"].get("extracted_code", ""),
                        self.manifest.by_id(gen["task_id"]),
                        gen["sample_index"],
                        attack,
                    )
                    for gen in ok
                ]
                outcomes = execute_batch(
                    items, backend, self.config.limits, self.config.jobs or None
                )
                records = [
                    {
                        "task_id": task_id,
                        "sample_index": sample_index,
                        "test": outcome.to_record(),
                    }
                    for (task_id, sample_index, _), outcome in sorted(
                        outcomes.items(), key=lambda kv: (kv[0][0], kv[0][1])
                    )
                ]
            _write_jsonl(stage / "records.jsonl", records)
            _mark_complete(stage)

    def stage_consensus(self, force: bool = False) -> None:
        run_file = self.run_root / "run.jsonl"
        markers = [self._attack_dir(a) / "consensus" for a in self.attacks]
        if run_file.exists() and all(_is_complete(m) for m in markers) and not force:
            return
        all_slots: list[RecordedSlot] = []
        for attack in self.attacks:
            attack_dir = self._attack_dir(attack)
            generations = _read_jsonl(attack_dir / "generations" / "records.jsonl")
            analysis = {
                (r["task_id"], r["sample_index"]): r["analyzers"]
                for r in _read_jsonl(attack_dir / "analysis" / "records.jsonl")
            }
            tests = {
                (r["task_id"], r["sample_index"]): r["test"]
                for r in _read_jsonl(attack_dir / "tests" / "records.jsonl")
            }
            labels = []
            for gen in generations:
                key = (gen["task_id"], gen["sample_index"])
                slot_record = {
                    "task_id": gen["task_id"],
                    "sample_index": gen["sample_index"],
                    "attack": attack,
                    "generation": gen["generation"],
                }
                if key in analysis:
                    slot_record["analyzers"] = analysis[key]
                if key in tests:
                    slot_record["test"] = tests[key]
                slot = RecordedSlot.from_record(slot_record)
                all_slots.append(slot)
                label = slot_consensus(slot)
                labels.append(
                    {
                        "task_id": slot.task_id,
                        "sample_index": slot.sample_index,
                        "label": label.label.value,
                        "non_functional": label.non_functional,
                        "evidence": label.evidence,
                    }
                )
            stage = self._attack_dir(attack) / "consensus"
            _write_jsonl(stage / "labels.jsonl", labels)
            _mark_complete(stage)

        header = {
            "endpoint": self.endpoint.name,
            "samples_per_prompt": self.endpoint.samples_per_prompt,
            "task_modes": list(self.endpoint.task_modes),
            "corpus": (
                self.fixture.header.get("corpus", self.config.corpus)
                if self.fixture is not None
                else self.config.corpus
            ),
            "decoding": self.endpoint.decoding.to_record(),
        }
        write_recorded_run(run_file, header, all_slots)

    def stage_report(self, force: bool = False) -> Path:
        stage = self.run_root / "report"
        if _is_complete(stage) and not force:
            return stage
        run_file = self.run_root / "run.jsonl"
        if not run_file.exists():
            raise EmptyRun(f"no assembled run at {run_file}")
        run = load_recorded_run(run_file)
        rows = aggregate(run, self.manifest, rate_denominator=self.config.rate_denominator)
        stage.mkdir(parents=True, exist_ok=True)
        (stage / "report.md").write_text(
            render_markdown(run=run, manifest=self.manifest, rows=rows,
                            ratio_analyzer=self.config.ratio_analyzer),
            encoding="utf-8",
        )
        (stage / "report.csv").write_text(render_csv(rows), encoding="utf-8")
        (stage / "report.json").write_text(
            render_json(rows, run, self.manifest), encoding="utf-8"
        )
        _mark_complete(stage)
        return stage

    def run_all(self, force: bool = False) -> Path:
        stages = [
            ("ingest", lambda: self.stage_ingest(force)),
            ("perturb", lambda: self.stage_perturb(force)),
            ("generate", lambda: self.stage_generate(force)),
            ("analyze", lambda: self.stage_analyze(force)),
            ("test", lambda: self.stage_test(force)),
            ("consensus", lambda: self.stage_consensus(force)),
            ("report", lambda: self.stage_report(force)),
        ]
        for name, runner in stages:
            try:
                runner()
            except (ConfigError, EmptyRun):
                raise
            except AuditError as exc:
                raise StageFault(name, str(exc)) from exc
            except OSError as exc:
                raise StageFault(name, str(exc)) from exc
        return self.run_root / "report"


# ---------------------------------------------------------------------------
# Dead-code inertness self-check (drives perturb + live execution end to end)


def run_inertness_check(
    corpus: str,
    attacks: list[str],
    min_tasks: int,
    shim_cmd: list[str] | None,
    limits: dict,
    jobs: int,
    echo=print,
) -> int:
    """Compare reference test outcomes before/after dead-code injection."""
    manifest = load_tasks(resolve_corpus(corpus))
    tasks = [t for t in manifest.tasks if t.mode is Mode.COMPLETION] or list(manifest.tasks)
    tasks = tasks[: max(min_tasks, 20)]
    backend = LiveShimBackend(shim_cmd=shim_cmd)

    violations = 0
    checked = 0
    for label in attacks:
        spec = parse_attack_label(label)
        items: list[tuple[str, Task, int, str]] = []
        for task in tasks:
            if spec.name.value == "DeadCode":
                mutated = inject_dead_code(task.secure_reference, spec.lines or 0)
            else:
                mutated = inject_dead_functions(task.secure_reference, spec.lines or 0)
            if not dead_code_is_inert(mutated):
                echo(f"VIOLATION {label} {task.id}: injected identifiers not inert")
                violations += 1
                continue
            items.append((task.secure_reference, task, 0, "before"))
            items.append((mutated, task, 0, f"after-{label}"))
        outcomes = execute_batch(items, backend, limits, jobs or None)
        for task in tasks:
            before = outcomes.get((task.id, 0, "before"))
            after = outcomes.get((task.id, 0, f"after-{label}"))
            if before is None or after is None:
                continue
            checked += 1
            marker = "ok" if before.status == after.status else "VIOLATION"
            if marker == "VIOLATION":
                violations += 1
            echo(
                f"{marker} {label} {task.id}: before={before.status.value} "
                f"after={after.status.value}"
            )
    echo(f"inertness: {checked} comparisons, {violations} violations")
    return violations


# ---------------------------------------------------------------------------
# Command-line interface


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="YAML config file.")
@click.option("--backend", type=click.Choice(["recorded", "live"]), default=None)
@click.option("--cache-dir", default=None)
@click.option("--seed", type=int, default=None)
@click.option("--jobs", type=int, default=None)
@click.pass_context
def cli(ctx, config_path, backend, cache_dir, seed, jobs):
    """Adversarial audit harness for secure code generation services."""
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path
    ctx.obj["overrides"] = {
        "backend": backend,
        "cache_dir": cache_dir,
        "seed": seed,
        "jobs": jobs,
    }


def _build_config(ctx, **extra) -> AuditConfig:
    overrides = dict(ctx.obj["overrides"])
    overrides.update(extra)
    return load_config(ctx.obj["config_path"], **overrides)


def _pipeline(ctx, run=None, corpus=None, output_dir=None, endpoint=None) -> Pipeline:
    extra = {}
    if run:
        extra["recorded_run"] = run
        extra["backend"] = "recorded"
    if corpus:
        extra["corpus"] = corpus
    if output_dir:
        extra["output_dir"] = output_dir
    config = _build_config(ctx, **extra)
    return Pipeline(config, endpoint_name=endpoint)


_shared_options = [
    click.option("--run", default=None, help="Recorded run: shipped fixture name or path."),
    click.option("--corpus", default=None, help="Corpus: shipped name or path."),
    click.option("--output-dir", default=None, help="Run directory root."),
    click.option("--endpoint", default=None, help="Endpoint name (live backend)."),
    click.option("--force", is_flag=True, help="Recompute even if the stage is complete."),
]


def shared_options(fn):
    for option in reversed(_shared_options):
        fn = option(fn)
    return fn


def _stage_command(name: str):
    def runner(ctx, run, corpus, output_dir, endpoint, force):
        pipeline = _pipeline(ctx, run, corpus, output_dir, endpoint)
        order = STAGES[: STAGES.index(name) + 1]
        for stage in order:
            method = getattr(pipeline, f"stage_{stage}")
            try:
                # Upstream stages are only filled in if missing; the named
                # stage honors --force.
                method(force=force if stage == name else False)
            except AuditError as exc:
                raise StageFault(stage, str(exc)) from exc
        click.echo(f"{name}: done ({pipeline.run_root})")

    runner.__name__ = f"cmd_{name}"
    return runner


for _stage_name, _help in [
    ("ingest", "Load and validate the corpus; persist the manifest."),
    ("perturb", "Apply the attack suite to every eligible task."),
    ("generate", "Collect (or replay) model outputs for every slot."),
    ("analyze", "Run the analyzer adapters over generated code."),
    ("test", "Execute candidates against their task checkers."),
    ("consensus", "Join stages into consensus labels and the run document."),
]:
    cli.command(name=_stage_name, help=_help)(
        click.pass_context(shared_options(_stage_command(_stage_name)))
    )


@cli.command(name="report", help="Render reports from an assembled run.")
@shared_options
@click.option("--format", "fmt", type=click.Choice(["md", "csv", "json", "all"]), default="all")
@click.pass_context
def cmd_report(ctx, run, corpus, output_dir, endpoint, force, fmt):
    pipeline = _pipeline(ctx, run, corpus, output_dir, endpoint)
    for stage in STAGES[:-1]:
        getattr(pipeline, f"stage_{stage}")(force=False)
    stage_dir = pipeline.stage_report(force=True)
    if fmt != "all":
        suffix = {"md": "report.md", "csv": "report.csv", "json": "report.json"}[fmt]
        click.echo((stage_dir / suffix).read_text(encoding="utf-8"), nl=False)
    else:
        click.echo(f"report: {stage_dir}")


@cli.command(name="audit", help="Run the whole pipeline end to end.")
@shared_options
@click.pass_context
def cmd_audit(ctx, run, corpus, output_dir, endpoint, force):
    pipeline = _pipeline(ctx, run, corpus, output_dir, endpoint)
    report_dir = pipeline.run_all(force=force)
    click.echo(f"audit complete: {report_dir}")


@cli.command(name="fixtures", help="List shipped fixture runs and data paths.")
def cmd_fixtures():
    click.echo(f"data root: {assets.data_root()}")
    for name in assets.list_fixtures():
        click.echo(name)


@cli.command(
    name="inertness",
    help="Dynamic dead-code inertness check on secure references (needs the shim).",
)
@click.option("--corpus", default="codeseceval_style")
@click.option("--attacks", default="DeadCode_10,DeadFunc_10",
              help="Comma-separated DeadCode_x/DeadFunc_x labels.")
@click.option("--min-tasks", type=int, default=20)
@click.option("--shim-cmd", default=None,
              help="Shim command line (default: python -m seceval_shim).")
@click.option("--jobs", type=int, default=0)
@click.pass_context
def cmd_inertness(ctx, corpus, attacks, min_tasks, shim_cmd, jobs):
    limits = {"init": 5.0, "test": 10.0}
    config_path = ctx.obj.get("config_path")
    if config_path:
        raw = yaml.safe_load(Path(config_path).read_text(encoding="utf-8")) or {}
        limits = raw.get("limits", limits)
    violations = run_inertness_check(
        corpus=corpus,
        attacks=[a.strip() for a in attacks.split(",") if a.strip()],
        min_tasks=min_tasks,
        shim_cmd=shim_cmd.split() if shim_cmd else None,
        limits=limits,
        jobs=jobs,
        echo=click.echo,
    )
    if violations:
        raise StageFault("inertness", f"{violations} violations")


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False, obj={})
        return 0
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return 2
    except StageFault as exc:
        click.echo(f"stage fault: {exc}", err=True)
        return 3
    except AuditError as exc:
        click.echo(f"pipeline fault: {exc}", err=True)
        return 3
    except click.ClickException as exc:
        exc.show()
        return 2
    except click.exceptions.Abort:
        return 130


if __name__ == "__main__":
    sys.exit(main())
