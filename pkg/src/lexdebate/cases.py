"""Case records, label spaces, dataset loading, and prompt templating.

A dataset is a UTF-8 JSONL file, one case per line:

    {"id": str, "background": str, "plaintiff_claim": str?,
     "defendant_statement": str?, "label": str | [str]}

The label space always comes from configuration; it is never inferred from
the data.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .errors import MalformedRecord, MissingPlaceholderValue, UnknownLabel

logger = logging.getLogger(__name__)

BINARY_EXCLUSIVE = "binary-exclusive"
MULTI_LABEL = "multi-label"

TASK_TRIAL = "trial"
TASK_ARTICLE = "article"
TASKS = (TASK_TRIAL, TASK_ARTICLE)

CASELAW_JSONL = "caselaw-jsonl"
CAIL18_JSONL = "cail18-jsonl"
DATASET_FORMATS = (CASELAW_JSONL, CAIL18_JSONL)


@dataclass(frozen=True)
class LabelAssignment:
    """A chosen point in a label space: indices into LabelSpace.labels.

    Exclusive spaces carry exactly one index; multi-label spaces carry a
    non-empty set of indices (empty sets may appear transiently when a
    parser was told not to require one).
    """

    indices: frozenset[int]

    @property
    def single_index(self) -> int:
        if len(self.indices) != 1:
            raise ValueError(f"assignment holds {len(self.indices)} indices, not 1")
        return next(iter(self.indices))

    def sorted_indices(self) -> list[int]:
        return sorted(self.indices)


@dataclass(frozen=True)
class LabelSpace:
    """Ordered label strings plus the rule for picking among them."""

    kind: str
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.kind not in (BINARY_EXCLUSIVE, MULTI_LABEL):
            raise ValueError(f"unknown label-space kind {self.kind!r}")
        if any(not lab for lab in self.labels):
            raise ValueError("label strings must be non-empty")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("label strings must be unique")
        if self.kind == BINARY_EXCLUSIVE and len(self.labels) != 2:
            raise ValueError("a binary-exclusive space needs exactly 2 labels")
        if not self.labels:
            raise ValueError("label space must not be empty")

    @classmethod
    def binary(cls, labels: Iterable[str]) -> LabelSpace:
        return cls(BINARY_EXCLUSIVE, tuple(labels))

    @classmethod
    def multi(cls, labels: Iterable[str]) -> LabelSpace:
        return cls(MULTI_LABEL, tuple(labels))

    @property
    def is_binary(self) -> bool:
        return self.kind == BINARY_EXCLUSIVE

    def index_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValueError(f"label {label!r} is not in the label space") from None

    def single(self, index: int) -> LabelAssignment:
        self._check_index(index)
        return LabelAssignment(frozenset({index}))

    def subset(self, indices: Iterable[int]) -> LabelAssignment:
        indices = frozenset(indices)
        for i in indices:
            self._check_index(i)
        if not indices:
            raise ValueError("an assignment must carry at least one label")
        return LabelAssignment(indices)

    def _check_index(self, index: int) -> None:
        if not 0 <= index < len(self.labels):
            raise ValueError(f"label index {index} out of range")

    def labels_of(self, assignment: LabelAssignment) -> list[str]:
        return [self.labels[i] for i in assignment.sorted_indices()]

    def render(self) -> str:
        """Render the label list for prompts, preserving order."""
        inner = ",".join(f"'{lab}'" for lab in self.labels)
        return f"[{inner}]"


def space_for_task(task: str, labels: Iterable[str]) -> LabelSpace:
    """Trial outcomes form a binary-exclusive space, articles a multi-label one."""
    if task == TASK_TRIAL:
        return LabelSpace.binary(labels)
    if task == TASK_ARTICLE:
        return LabelSpace.multi(labels)
    raise ValueError(f"unknown task {task!r}")


@dataclass(frozen=True)
class CaseRecord:
    """One legal case. `background` is never empty; the two party texts may be."""

    id: str
    background: str
    plaintiff_claim: str = ""
    defendant_statement: str = ""
    ground_truth: LabelAssignment | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("case id must be non-empty")
        if not self.background.strip():
            raise ValueError("case background must be non-empty")


# --------------------------------------------------------------------------
# Prompt templates

CASE_PLACEHOLDERS = frozenset(
    {"background", "plaintiff_claim", "defendant_statement", "labels"}
)

_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")


@dataclass(frozen=True)
class PromptTemplate:
    """A prompt body with `{name}` placeholders, checked at construction."""

    text: str
    allowed: frozenset[str] = field(default=CASE_PLACEHOLDERS)

    def __post_init__(self) -> None:
        bad = self.placeholders - self.allowed
        if bad:
            raise ValueError(
                f"template uses unsupported placeholder(s): {sorted(bad)}"
            )

    @property
    def placeholders(self) -> frozenset[str]:
        return frozenset(_PLACEHOLDER_RE.findall(self.text))


def substitute(text: str, values: Mapping[str, str | None]) -> str:
    """Fill `{name}` slots from `values`; a None value means "not available"."""

    def _fill(match: re.Match[str]) -> str:
        name = match.group(1)
        value = values.get(name)
        if value is None:
            raise MissingPlaceholderValue(name)
        return value

    return _PLACEHOLDER_RE.sub(_fill, text)


def format_case(
    case: CaseRecord, template: PromptTemplate, space: LabelSpace | None = None
) -> str:
    """Render a case into a template. Deterministic; raises on missing fields."""
    values: dict[str, str | None] = {
        "background": case.background or None,
        "plaintiff_claim": case.plaintiff_claim or None,
        "defendant_statement": case.defendant_statement or None,
        "labels": space.render() if space is not None else None,
    }
    return substitute(template.text, values)


# --------------------------------------------------------------------------
# Dataset loading

@dataclass(frozen=True)
class RejectedLine:
    line_no: int
    reason: str


def _parse_label_value(
    value: object, space: LabelSpace, line_no: int
) -> LabelAssignment:
    if isinstance(value, str):
        names = [value]
    elif isinstance(value, list) and all(isinstance(v, str) for v in value):
        names = list(value)
    else:
        raise MalformedRecord(line_no, "label must be a string or a list of strings")
    if not names:
        raise MalformedRecord(line_no, "label list must be non-empty")
    if space.is_binary and len(names) != 1:
        raise MalformedRecord(line_no, "a binary-exclusive case takes exactly one label")
    indices = set()
    for name in names:
        try:
            indices.add(space.index_of(name))
        except ValueError:
            raise UnknownLabel(line_no, name) from None
    return LabelAssignment(frozenset(indices))


def _case_from_record(
    record: dict, format: str, space: LabelSpace, line_no: int, max_chars: int | None
) -> CaseRecord:
    if not isinstance(record, dict):
        raise MalformedRecord(line_no, "record is not a JSON object")

    if format == CAIL18_JSONL:
        background = record.get("fact", record.get("background"))
        case_id = record.get("id", f"line-{line_no}")
    else:
        background = record.get("background")
        case_id = record.get("id")

    if not isinstance(case_id, str) or not case_id:
        raise MalformedRecord(line_no, "missing or empty id")
    if not isinstance(background, str) or not background.strip():
        raise MalformedRecord(line_no, "missing or empty background")

    def _text(key: str) -> str:
        value = record.get(key, "")
        if value is None:
            return ""
        if not isinstance(value, str):
            raise MalformedRecord(line_no, f"{key} must be a string")
        return value

    claim = _text("plaintiff_claim")
    statement = _text("defendant_statement")

    truth: LabelAssignment | None = None
    if "label" in record and record["label"] is not None:
        truth = _parse_label_value(record["label"], space, line_no)

    if max_chars is not None:
        background = background[:max_chars]
        claim = claim[:max_chars]
        statement = statement[:max_chars]

    return CaseRecord(
        id=case_id,
        background=background,
        plaintiff_claim=claim,
        defendant_statement=statement,
        ground_truth=truth,
    )


def load_dataset_with_report(
    path: str | Path,
    format: str,
    space: LabelSpace,
    *,
    strict: bool = False,
    max_chars: int | None = None,
    label_filter: Iterable[str] = (),
) -> tuple[list[CaseRecord], list[RejectedLine]]:
    """Load a JSONL dataset, returning kept records and the rejected lines.

    Order and count of kept records follow the file. In strict mode the
    first invalid line aborts the load; otherwise invalid lines are skipped
    and reported. `label_filter` drops records whose ground-truth label set
    intersects the given label strings.
    """
    if format not in DATASET_FORMATS:
        raise ValueError(f"unknown dataset format {format!r}")
    filter_indices: set[int] = set()
    for name in label_filter:
        filter_indices.add(space.index_of(name))

    records: list[CaseRecord] = []
    rejects: list[RejectedLine] = []
    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as err:
                raise MalformedRecord(line_no, f"invalid JSON: {err.msg}") from None
            case = _case_from_record(raw, format, space, line_no, max_chars)
        except (MalformedRecord, UnknownLabel) as err:
            if strict:
                raise
            logger.warning("skipping dataset line %d: %s", line_no, err)
            rejects.append(RejectedLine(line_no, str(err)))
            continue
        if case.ground_truth is not None and case.ground_truth.indices & filter_indices:
            logger.info("filtering dataset line %d: label excluded by filter", line_no)
            rejects.append(RejectedLine(line_no, "label excluded by filter"))
            continue
        records.append(case)
    return records, rejects


def load_dataset(
    path: str | Path,
    format: str,
    space: LabelSpace,
    *,
    strict: bool = False,
    max_chars: int | None = None,
    label_filter: Iterable[str] = (),
) -> list[CaseRecord]:
    records, _ = load_dataset_with_report(
        path, format, space, strict=strict, max_chars=max_chars, label_filter=label_filter
    )
    return records


def load_case_file(path: str | Path, space: LabelSpace, format: str = CASELAW_JSONL) -> CaseRecord:
    """Load a single case from a JSON file holding one record object."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return _case_from_record(raw, format, space, line_no=1, max_chars=None)


def case_to_record(case: CaseRecord, space: LabelSpace) -> dict:
    """Inverse of the loader: a JSON-ready record dict for this case."""
    record: dict[str, object] = {"id": case.id, "background": case.background}
    if case.plaintiff_claim:
        record["plaintiff_claim"] = case.plaintiff_claim
    if case.defendant_statement:
        record["defendant_statement"] = case.defendant_statement
    if case.ground_truth is not None:
        names = space.labels_of(case.ground_truth)
        record["label"] = names[0] if space.is_binary else names
    return record


def write_dataset(path: str | Path, cases: Iterable[CaseRecord], space: LabelSpace) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for case in cases:
            handle.write(json.dumps(case_to_record(case, space), sort_keys=True))
            handle.write("\n")
