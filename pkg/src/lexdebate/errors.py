"""Exception types shared across the pipeline.

Every error raised on a contract boundary derives from LexDebateError so
callers (and the CLI exit-code mapping) can tell pipeline failures apart
from plain programming errors.
"""

from __future__ import annotations

from typing import Any


class LexDebateError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(LexDebateError):
    """Invalid run configuration. The message carries the offending field path."""

    def __init__(self, field_path: str, message: str) -> None:
        super().__init__(f"{field_path}: {message}")
        self.field_path = field_path


class MalformedRecord(LexDebateError):
    """A dataset line that cannot be read as a case record."""

    def __init__(self, line_no: int, reason: str) -> None:
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class UnknownLabel(LexDebateError):
    """A dataset line whose label is outside the configured label space."""

    def __init__(self, line_no: int, label: str) -> None:
        super().__init__(f"line {line_no}: label {label!r} is not in the label space")
        self.line_no = line_no
        self.label = label


class MissingPlaceholderValue(LexDebateError):
    def __init__(self, placeholder: str) -> None:
        super().__init__(
            f"template references {{{placeholder}}} but the case provides no value for it"
        )
        self.placeholder = placeholder


class TransportError(LexDebateError):
    """The backend could not be reached, after exhausting the retry budget."""

    def __init__(self, message: str, attempts: int = 1) -> None:
        super().__init__(f"{message} (after {attempts} attempt(s))")
        self.attempts = attempts


class BackendRefusal(LexDebateError):
    """The backend answered with a non-retryable error."""

    def __init__(self, message: str, status: int | None = None) -> None:
        super().__init__(message)
        self.status = status


class ScriptMiss(LexDebateError):
    """A strict scripted backend has no reply for the prompt it was given."""

    def __init__(self, prompt_preview: str) -> None:
        super().__init__(f"no scripted reply for prompt {prompt_preview!r}")
        self.prompt_preview = prompt_preview


class UnparseableReply(LexDebateError):
    """A model reply from which no usable label or score could be extracted."""

    def __init__(self, reply: str, expected: str) -> None:
        preview = reply if len(reply) <= 120 else reply[:117] + "..."
        super().__init__(f"could not extract {expected} from reply {preview!r}")
        self.reply = reply
        self.expected = expected


class MissingGroundTruth(LexDebateError):
    def __init__(self, case_id: str) -> None:
        super().__init__(f"case {case_id!r} has no ground-truth label")
        self.case_id = case_id


class MissingPosition(LexDebateError):
    def __init__(self, transcript_id: str, debater_id: str) -> None:
        super().__init__(
            f"transcript {transcript_id!r}: no parseable position for debater {debater_id!r}"
        )
        self.transcript_id = transcript_id
        self.debater_id = debater_id


class DegenerateDataset(LexDebateError):
    """Training data with only one target class present."""


class RoundFailed(LexDebateError):
    """Fewer than two debaters completed the round."""

    def __init__(self, round_index: int, reason: str) -> None:
        super().__init__(f"round {round_index}: {reason}")
        self.round_index = round_index


class CaseRunFailed(LexDebateError):
    """A case run aborted. Wraps the first unrecoverable error as __cause__.

    The partial transcript assembled up to the failure point is attached so
    callers can inspect what happened before the abort.
    """

    def __init__(self, case_id: str, transcript: Any = None) -> None:
        super().__init__(f"run aborted for case {case_id!r}")
        self.case_id = case_id
        self.transcript = transcript


class LengthMismatch(LexDebateError):
    def __init__(self, n_predictions: int, n_truths: int) -> None:
        super().__init__(
            f"got {n_predictions} predictions but {n_truths} ground-truth labels"
        )
        self.n_predictions = n_predictions
        self.n_truths = n_truths


class EmptyInput(LexDebateError):
    """An evaluation call with nothing to evaluate."""
