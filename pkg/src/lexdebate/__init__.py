"""lexdebate: debate-driven legal judgment prediction.

A judge model predicts a case outcome, a panel of debater models argues the
case, a deterministic reliability scorer rates each argument, and a gated
smoothing update folds trustworthy debate back into the judge's prediction.
Every backend call can be journaled and replayed offline, bit for bit.
"""

from __future__ import annotations

from .backends import (
    Backend,
    ChatMessage,
    Completion,
    Conversation,
    HttpChatBackend,
    ScriptedBackend,
    complete,
    fnv1a64,
    parse_label,
    parse_probability,
    prompt_key,
)
from .cases import (
    CaseRecord,
    LabelAssignment,
    LabelSpace,
    PromptTemplate,
    format_case,
    load_case_file,
    load_dataset,
    load_dataset_with_report,
    space_for_task,
    write_dataset,
)
from .config import RunConfig, StepTemplates, load_config, resolve_config
from .engine import (
    DebateTranscript,
    DebaterSpec,
    PredictionState,
    apply_update,
    debate_round,
    decision,
    initial_prediction,
    run_case,
    verify_round,
)
from .errors import (
    BackendRefusal,
    CaseRunFailed,
    ConfigError,
    DegenerateDataset,
    EmptyInput,
    LengthMismatch,
    LexDebateError,
    MalformedRecord,
    MissingGroundTruth,
    MissingPlaceholderValue,
    MissingPosition,
    RoundFailed,
    ScriptMiss,
    TransportError,
    UnknownLabel,
    UnparseableReply,
)
from .evaluation import (
    EvalResult,
    ExperimentReport,
    SweepGrid,
    accuracy,
    correction_degradation,
    evaluate_run,
    macro_f1,
    micro_f1,
    per_class_metrics,
    run_experiment,
)
from .journal import CallJournal, JournalEntry, read_journal, scripted_from_journal
from .reliability import (
    GatePolicy,
    ReliabilityExample,
    ReliabilityModel,
    TrainConfig,
    build_training_set,
    load_model,
    save_model,
    score,
    threshold_gate,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "Backend",
    "BackendRefusal",
    "CallJournal",
    "CaseRecord",
    "CaseRunFailed",
    "ChatMessage",
    "Completion",
    "ConfigError",
    "Conversation",
    "DebateTranscript",
    "DebaterSpec",
    "DegenerateDataset",
    "EmptyInput",
    "EvalResult",
    "ExperimentReport",
    "GatePolicy",
    "HttpChatBackend",
    "JournalEntry",
    "LabelAssignment",
    "LabelSpace",
    "LengthMismatch",
    "LexDebateError",
    "MalformedRecord",
    "MissingGroundTruth",
    "MissingPlaceholderValue",
    "MissingPosition",
    "PredictionState",
    "PromptTemplate",
    "ReliabilityExample",
    "ReliabilityModel",
    "RoundFailed",
    "RunConfig",
    "ScriptMiss",
    "ScriptedBackend",
    "StepTemplates",
    "SweepGrid",
    "TrainConfig",
    "TransportError",
    "UnknownLabel",
    "UnparseableReply",
    "accuracy",
    "apply_update",
    "build_training_set",
    "complete",
    "correction_degradation",
    "debate_round",
    "decision",
    "evaluate_run",
    "fnv1a64",
    "format_case",
    "initial_prediction",
    "load_case_file",
    "load_config",
    "load_dataset",
    "load_dataset_with_report",
    "load_model",
    "macro_f1",
    "micro_f1",
    "parse_label",
    "parse_probability",
    "per_class_metrics",
    "prompt_key",
    "read_journal",
    "resolve_config",
    "run_case",
    "run_experiment",
    "save_model",
    "score",
    "scripted_from_journal",
    "space_for_task",
    "threshold_gate",
    "train",
    "verify_round",
    "write_dataset",
]
