"""Adversarial audit harness for black-box secure code generation services."""

from .analyzers import AnalyzerVerdict, Classification
from .corpus import CorpusManifest, Mode, Subset, Task, load_fixture_run, load_tasks
from .execution import TestOutcome, TestStatus, locate_entry_point, run_tests
from .modelgate import (
    Decoding,
    EndpointConfig,
    GenerationRecord,
    GenerationStatus,
    ModelGateway,
    expected_count,
    judge_prompt,
)
from .perturb import (
    AttackName,
    AttackSpec,
    Backend,
    CommentSpan,
    PerturbedPrompt,
    apply_attack,
    extract_comments,
    render_attack_prompt,
    select_retained_comment,
)
from .verdict import (
    ConsensusLabel,
    ConsensusState,
    aggregate,
    consensus,
    overestimation_factor,
    pass_at_k,
    security_ratio,
)

__version__ = "0.1.0"

__all__ = [
    "AnalyzerVerdict",
    "AttackName",
    "AttackSpec",
    "Backend",
    "Classification",
    "CommentSpan",
    "ConsensusLabel",
    "ConsensusState",
    "CorpusManifest",
    "Decoding",
    "EndpointConfig",
    "GenerationRecord",
    "GenerationStatus",
    "Mode",
    "ModelGateway",
    "PerturbedPrompt",
    "Subset",
    "Task",
    "TestOutcome",
    "TestStatus",
    "aggregate",
    "apply_attack",
    "consensus",
    "expected_count",
    "extract_comments",
    "judge_prompt",
    "load_fixture_run",
    "load_tasks",
    "locate_entry_point",
    "overestimation_factor",
    "pass_at_k",
    "render_attack_prompt",
    "run_tests",
    "security_ratio",
    "select_retained_comment",
]
