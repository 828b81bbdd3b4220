"""Metrics and the sweep runner.

Accuracy is exact-match (set equality for multi-label tasks). Per-class
precision/recall/F1 are computed over label-membership indicators; macro F1
averages over every class in the label space, including zero-support ones,
with F1 defined as 0 whenever precision + recall is 0. Correction counts
cases the debate fixed (initial decision wrong, final right); degradation
counts the ones it broke.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Iterable, Mapping, Sequence

from .cases import CaseRecord, LabelAssignment, LabelSpace, space_for_task
from .engine import DebaterSpec, DebateTranscript, decision, run_case
from .errors import CaseRunFailed, EmptyInput, LengthMismatch, MissingGroundTruth
from .journal import CallJournal
from .reliability import GatePolicy, ReliabilityModel

if TYPE_CHECKING:
    from .backends import Backend
    from .config import RunConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClassMetrics:
    label: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class EvalResult:
    n: int
    accuracy: float
    macro_f1: float
    micro_f1: float
    per_class: tuple[ClassMetrics, ...]
    correction: int
    degradation: int


def _check_pairs(
    predictions: Sequence[LabelAssignment], truths: Sequence[LabelAssignment]
) -> None:
    if len(predictions) != len(truths):
        raise LengthMismatch(len(predictions), len(truths))
    if not predictions:
        raise EmptyInput("nothing to evaluate")


def accuracy(
    predictions: Sequence[LabelAssignment], truths: Sequence[LabelAssignment]
) -> float:
    """Exact matches over N; a multi-label hit needs the full label set."""
    _check_pairs(predictions, truths)
    hits = sum(1 for p, t in zip(predictions, truths) if p.indices == t.indices)
    return hits / len(predictions)


def _membership_counts(
    predictions: Sequence[LabelAssignment],
    truths: Sequence[LabelAssignment],
    n_classes: int,
) -> list[tuple[int, int, int]]:
    """(tp, fp, fn) per class over label-membership indicators."""
    tp = [0] * n_classes
    fp = [0] * n_classes
    fn = [0] * n_classes
    for predicted, truth in zip(predictions, truths):
        for c in range(n_classes):
            in_pred = c in predicted.indices
            in_truth = c in truth.indices
            if in_pred and in_truth:
                tp[c] += 1
            elif in_pred:
                fp[c] += 1
            elif in_truth:
                fn[c] += 1
    return list(zip(tp, fp, fn))


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def per_class_metrics(
    predictions: Sequence[LabelAssignment],
    truths: Sequence[LabelAssignment],
    space: LabelSpace,
) -> tuple[ClassMetrics, ...]:
    _check_pairs(predictions, truths)
    out = []
    for c, (tp, fp, fn) in enumerate(
        _membership_counts(predictions, truths, len(space.labels))
    ):
        precision, recall, f1 = _prf(tp, fp, fn)
        out.append(ClassMetrics(space.labels[c], precision, recall, f1, tp + fn))
    return tuple(out)


def macro_f1(
    predictions: Sequence[LabelAssignment],
    truths: Sequence[LabelAssignment],
    space: LabelSpace,
) -> float:
    """Unweighted mean of per-class F1 over ALL classes in the space."""
    per_class = per_class_metrics(predictions, truths, space)
    return sum(m.f1 for m in per_class) / len(per_class)


def micro_f1(
    predictions: Sequence[LabelAssignment],
    truths: Sequence[LabelAssignment],
    space: LabelSpace,
) -> float:
    """Supplementary micro-averaged F1 over pooled membership counts."""
    _check_pairs(predictions, truths)
    counts = _membership_counts(predictions, truths, len(space.labels))
    tp = sum(c[0] for c in counts)
    fp = sum(c[1] for c in counts)
    fn = sum(c[2] for c in counts)
    return _prf(tp, fp, fn)[2]


def _transcript_space(transcript: DebateTranscript) -> tuple[LabelSpace, float]:
    snapshot = transcript.config
    space = space_for_task(snapshot["task"], snapshot["labels"])
    return space, snapshot.get("multi_label_cutoff", 0.5)


def correction_degradation(
    transcripts: Iterable[DebateTranscript],
    truths: Mapping[str, LabelAssignment],
) -> tuple[int, int]:
    """How many cases the debate corrected, and how many it degraded.

    The initial decision is the decision rule applied to O_0 under each
    transcript's own config snapshot. Every transcript's case id must
    resolve to a ground-truth label.
    """
    corrected = 0
    degraded = 0
    for transcript in transcripts:
        truth = truths.get(transcript.case_id)
        if truth is None:
            raise MissingGroundTruth(transcript.case_id)
        if transcript.o0 is None or transcript.final is None:
            raise ValueError(f"transcript {transcript.case_id!r} is incomplete")
        space, cutoff = _transcript_space(transcript)
        initial = decision(transcript.o0, space, cutoff)
        initial_right = initial.indices == truth.indices
        final_right = transcript.final.indices == truth.indices
        if not initial_right and final_right:
            corrected += 1
        elif initial_right and not final_right:
            degraded += 1
    return corrected, degraded


def evaluate_run(
    transcripts: Sequence[DebateTranscript],
    truths: Mapping[str, LabelAssignment],
    space: LabelSpace,
) -> EvalResult:
    if not transcripts:
        raise EmptyInput("no transcripts to evaluate")
    predictions = []
    truth_list = []
    for transcript in transcripts:
        truth = truths.get(transcript.case_id)
        if truth is None:
            raise MissingGroundTruth(transcript.case_id)
        if transcript.final is None:
            raise ValueError(f"transcript {transcript.case_id!r} has no final decision")
        predictions.append(transcript.final)
        truth_list.append(truth)
    corrected, degraded = correction_degradation(transcripts, truths)
    return EvalResult(
        n=len(transcripts),
        accuracy=accuracy(predictions, truth_list),
        macro_f1=macro_f1(predictions, truth_list, space),
        micro_f1=micro_f1(predictions, truth_list, space),
        per_class=per_class_metrics(predictions, truth_list, space),
        correction=corrected,
        degradation=degraded,
    )


# --------------------------------------------------------------------------
# Sweep runner


@dataclass(frozen=True)
class SweepGrid:
    rounds: tuple[int, ...]
    debater_counts: tuple[int, ...]
    smoothing: tuple[float, ...]
    gates: tuple[GatePolicy, ...]

    def __post_init__(self) -> None:
        if not (self.rounds and self.debater_counts and self.smoothing and self.gates):
            raise ValueError("every grid axis needs at least one value")

    def points(self) -> list[tuple[int, int, float, GatePolicy]]:
        return [
            (rounds, count, smoothing, gate)
            for rounds in self.rounds
            for count in self.debater_counts
            for smoothing in self.smoothing
            for gate in self.gates
        ]


@dataclass
class ReportRow:
    rounds: int
    debaters: int
    smoothing: float
    gate: GatePolicy
    n_labels: int
    n: int
    result: EvalResult | None
    failures: int
    valid: bool
    config_snapshot: dict
    point_tag: str


@dataclass
class ExperimentReport:
    rows: list[ReportRow]
    space: LabelSpace

    def csv_text(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        header = [
            "rounds",
            "debaters",
            "T",
            "gate_mode",
            "gate_cutoff",
            "n_labels",
            "N",
            "accuracy",
            "macro_f1",
            "micro_f1",
        ]
        header += [f"f1_{label}" for label in self.space.labels]
        header += ["correction", "degradation", "failures", "valid"]
        writer.writerow(header)
        for row in self.rows:
            cells: list[object] = [
                row.rounds,
                row.debaters,
                row.smoothing,
                row.gate.mode,
                row.gate.cutoff,
                row.n_labels,
                row.n,
            ]
            if row.result is None:
                cells += [""] * (3 + len(self.space.labels)) + ["", ""]
            else:
                cells += [row.result.accuracy, row.result.macro_f1, row.result.micro_f1]
                cells += [m.f1 for m in row.result.per_class]
                cells += [row.result.correction, row.result.degradation]
            cells += [row.failures, "true" if row.valid else "false"]
            writer.writerow(cells)
        return buffer.getvalue()

    def sidecar_json(self) -> str:
        document = {
            "rows": [
                {
                    "point": {
                        "rounds": row.rounds,
                        "debaters": row.debaters,
                        "smoothing_T": row.smoothing,
                        "gate": {"mode": row.gate.mode, "cutoff": row.gate.cutoff},
                    },
                    "config": row.config_snapshot,
                    "N": row.n,
                    "failures": row.failures,
                    "valid": row.valid,
                }
                for row in self.rows
            ]
        }
        return json.dumps(document, sort_keys=True, indent=2) + "\n"


def _point_tag(rounds: int, count: int, smoothing: float, gate: GatePolicy) -> str:
    return f"r{rounds}_d{count}_T{smoothing}_{gate.mode}{gate.cutoff}"


def roster_for(config: RunConfig, count: int) -> tuple[DebaterSpec, ...]:
    """The first `count` configured debaters, extended with synthesized
    symmetric experts when the roster is too short."""
    if count < 2:
        raise ValueError("a debate needs at least 2 debaters")
    roster = list(config.debaters[:count])
    existing = {debater.id for debater in roster}
    index = 0
    while len(roster) < count:
        index += 1
        debater_id = f"expert-{index}"
        if debater_id in existing:
            continue
        roster.append(
            DebaterSpec(id=debater_id, perspective_tag=f"independent expert {index}")
        )
        existing.add(debater_id)
    return tuple(roster)


def run_experiment(
    cases: Sequence[CaseRecord],
    config: RunConfig,
    grid: SweepGrid,
    model: ReliabilityModel | None = None,
    *,
    scorer: Callable[[str, str, str], float] | None = None,
    out_dir: str | Path | None = None,
    parallel: int = 1,
    backend_for_case: Callable[[str], Backend] | None = None,
) -> ExperimentReport:
    """Run every grid point over the whole case list and build the report.

    Rows follow grid product order; within a point, cases keep dataset
    order, so reruns with scripted backends are byte-identical. Per-case
    failures are counted per point; a point whose failure rate exceeds
    config.max_failure_rate is marked invalid. `backend_for_case` lets a
    replay substitute a journal-derived backend for every role of a case.
    """
    if not cases:
        raise EmptyInput("no cases to run")
    for case in cases:
        if case.ground_truth is None:
            raise MissingGroundTruth(case.id)
    truths = {case.id: case.ground_truth for case in cases}
    out_path = Path(out_dir) if out_dir is not None else None

    rows: list[ReportRow] = []
    for rounds, count, smoothing, gate in grid.points():
        tag = _point_tag(rounds, count, smoothing, gate)
        point_config = replace(
            config,
            rounds=rounds,
            smoothing_T=smoothing,
            gate=gate,
            debaters=roster_for(config, count),
        )

        def run_one(case: CaseRecord) -> DebateTranscript | None:
            journal = None
            if out_path is not None:
                journal_file = out_path / "journals" / tag / f"{case.id}.jsonl"
                journal_file.unlink(missing_ok=True)
                journal = CallJournal(journal_file)
            case_config = point_config
            if backend_for_case is not None:
                case_config = case_config.with_all_backends(backend_for_case(case.id))
            try:
                transcript = run_case(
                    case, case_config, model, scorer=scorer, journal=journal
                )
            except CaseRunFailed as err:
                logger.warning("case %s failed at point %s: %s", case.id, tag, err)
                return None
            finally:
                if journal is not None:
                    journal.close()
            if out_path is not None:
                transcript_file = out_path / "transcripts" / tag / f"{case.id}.json"
                transcript_file.parent.mkdir(parents=True, exist_ok=True)
                transcript_file.write_text(
                    transcript.to_json(config.space), encoding="utf-8"
                )
            return transcript

        if parallel > 1:
            with ThreadPoolExecutor(max_workers=parallel) as pool:
                outcomes = list(pool.map(run_one, cases))
        else:
            outcomes = [run_one(case) for case in cases]

        transcripts = [t for t in outcomes if t is not None]
        failures = len(cases) - len(transcripts)
        result = (
            evaluate_run(transcripts, truths, config.space) if transcripts else None
        )
        failure_rate = failures / len(cases)
        rows.append(
            ReportRow(
                rounds=rounds,
                debaters=count,
                smoothing=smoothing,
                gate=gate,
                n_labels=len(config.space.labels),
                n=len(transcripts),
                result=result,
                failures=failures,
                valid=failure_rate <= config.max_failure_rate,
                config_snapshot=point_config.snapshot(),
                point_tag=tag,
            )
        )

    report = ExperimentReport(rows, config.space)
    if out_path is not None:
        reports_dir = out_path / "reports"
        reports_dir.mkdir(parents=True, exist_ok=True)
        name = "sweep" if len(rows) > 1 else "report"
        (reports_dir / f"{name}.csv").write_text(report.csv_text(), encoding="utf-8")
        (reports_dir / f"{name}.json").write_text(
            report.sidecar_json(), encoding="utf-8"
        )
    return report
