"""Command line interface.

Subcommands:

    run              run the debate pipeline on a single case
    evaluate         run a whole dataset and report accuracy and F1
    sweep            evaluate a grid of rounds / debaters / smoothing / gates
    build-trainset   turn finished transcripts into reliability training rows
    train-assistant  fit and save the reliability scorer
    replay           re-run a case against a recorded journal, offline

Exit codes: 0 success, 1 configuration or dataset problems, 2 backend
failures (transport, refusals, script misses), 3 parse failures or aborted
runs.
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from pathlib import Path

from . import cases, reliability
from .backends import Backend
from .config import RunConfig, load_config
from .engine import DebateTranscript, run_case
from .errors import (
    BackendRefusal,
    CaseRunFailed,
    ConfigError,
    EmptyInput,
    LexDebateError,
    MissingGroundTruth,
    MissingPosition,
    RoundFailed,
    ScriptMiss,
    TransportError,
    UnparseableReply,
)
from .evaluation import ReportRow, SweepGrid, run_experiment
from .journal import CallJournal, scripted_from_journal
from .reliability import GatePolicy, ReliabilityModel, TrainConfig

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_BACKEND = 2
EXIT_ABORT = 3

_BACKEND_FAILURES = (TransportError, BackendRefusal, ScriptMiss)
_ABORT_FAILURES = (UnparseableReply, MissingGroundTruth, MissingPosition, RoundFailed)


def _exit_code(err: LexDebateError) -> int:
    if isinstance(err, CaseRunFailed):
        if isinstance(err.__cause__, _BACKEND_FAILURES):
            return EXIT_BACKEND
        return EXIT_ABORT
    if isinstance(err, _BACKEND_FAILURES):
        return EXIT_BACKEND
    if isinstance(err, _ABORT_FAILURES):
        return EXIT_ABORT
    return EXIT_CONFIG


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="path to the run config JSON")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--seed", type=int, help="seed override")
    common.add_argument(
        "--strict", action="store_true", help="abort on the first malformed dataset line"
    )
    common.add_argument("--parallel", type=int, help="worker threads for dataset runs")

    parser = argparse.ArgumentParser(
        prog="lexdebate",
        description="Debate-driven legal judgment prediction.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", parents=[common], help="run one case")
    run_p.add_argument("--case-id", help="case id to look up in the configured dataset")
    run_p.add_argument("--case-file", help="JSON file holding a single case record")

    sub.add_parser("evaluate", parents=[common], help="run and score a dataset").add_argument(
        "--replay-from",
        help="directory of per-case journals; replays them instead of calling backends",
    )

    sweep_p = sub.add_parser("sweep", parents=[common], help="grid-evaluate a dataset")
    sweep_p.add_argument("--rounds", help="comma-separated round counts, e.g. 1,2,4")
    sweep_p.add_argument("--debaters", help="comma-separated debater counts, e.g. 3,5")
    sweep_p.add_argument("--smoothing", help="comma-separated weights, e.g. 0.3,0.5")
    sweep_p.add_argument(
        "--gates", help="comma-separated gate specs, mode[:cutoff], e.g. mean:0.5,any:0.8"
    )

    build_p = sub.add_parser(
        "build-trainset", parents=[common], help="extract reliability training rows"
    )
    build_p.add_argument(
        "--transcripts", required=True, help="directory of transcript JSON files"
    )
    build_p.add_argument("--out-file", help="where to write the JSONL training file")

    train_p = sub.add_parser(
        "train-assistant", parents=[common], help="train the reliability scorer"
    )
    train_p.add_argument("--train-file", required=True, help="JSONL training file")
    train_p.add_argument(
        "--holdout", type=float, default=0.2, help="holdout fraction (default 0.2)"
    )
    train_p.add_argument("--model-out", help="where to save the model JSON")
    train_p.add_argument("--epochs", type=int, help="training epochs")
    train_p.add_argument("--learning-rate", type=float, help="initial learning rate")
    train_p.add_argument("--dim", type=int, help="hashed feature dimension")

    replay_p = sub.add_parser(
        "replay", parents=[common], help="re-run a case from a recorded journal"
    )
    replay_p.add_argument("--journal", required=True, help="journal JSONL to replay")
    replay_p.add_argument("--case-id", help="case id to look up in the configured dataset")
    replay_p.add_argument("--case-file", help="JSON file holding a single case record")

    return parser


# --------------------------------------------------------------------------
# Shared helpers


def _select_case(args: argparse.Namespace, config: RunConfig) -> cases.CaseRecord:
    if bool(args.case_id) == bool(args.case_file):
        raise ConfigError("case", "provide exactly one of --case-id or --case-file")
    if args.case_file:
        return cases.load_case_file(args.case_file, config.space, config.dataset_format)
    if config.dataset_path is None:
        raise ConfigError("dataset_path", "required to look a case up by id")
    records = cases.load_dataset(
        config.dataset_path,
        config.dataset_format,
        config.space,
        strict=config.strict,
        max_chars=config.max_case_chars,
        label_filter=config.label_filter,
    )
    for record in records:
        if record.id == args.case_id:
            return record
    raise ConfigError("case", f"no case with id {args.case_id!r} in the dataset")


def _load_eval_cases(config: RunConfig) -> list[cases.CaseRecord]:
    if config.dataset_path is None:
        raise ConfigError("dataset_path", "required")
    records, rejects = cases.load_dataset_with_report(
        config.dataset_path,
        config.dataset_format,
        config.space,
        strict=config.strict,
        max_chars=config.max_case_chars,
        label_filter=config.label_filter,
    )
    if rejects:
        print(f"note: skipped {len(rejects)} dataset line(s)", file=sys.stderr)
    usable = [record for record in records if record.ground_truth is not None]
    dropped = len(records) - len(usable)
    if dropped:
        print(f"note: dropped {dropped} case(s) without ground truth", file=sys.stderr)
    if not usable:
        raise EmptyInput("no usable cases in the dataset")
    return usable


def _load_model(config: RunConfig) -> ReliabilityModel | None:
    if config.assistant_model_path is None:
        return None
    path = Path(config.assistant_model_path)
    if not path.is_file():
        raise ConfigError("assistant_model_path", f"no such file: {path}")
    try:
        return reliability.load_model(path)
    except (ValueError, KeyError, json.JSONDecodeError) as err:
        raise ConfigError("assistant_model_path", f"unreadable model: {err}") from err


def _write_transcript(
    transcript: DebateTranscript, out_dir: Path, config: RunConfig
) -> Path:
    path = out_dir / "transcripts" / f"{transcript.case_id}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(transcript.to_json(config.space), encoding="utf-8")
    return path


def _format_score(score: float | tuple[float, ...] | None) -> str:
    if score is None:
        return "n/a"
    if isinstance(score, tuple):
        return "[" + ", ".join(f"{v:.4f}" for v in score) + "]"
    return f"{score:.4f}"


def _print_run_summary(transcript: DebateTranscript, config: RunConfig) -> None:
    """Human-readable run trace; the bare final label is the last line."""
    print(f"case: {transcript.case_id}")
    print(f"initial prediction: {_format_score(transcript.o0)}")
    for record in transcript.rounds:
        parts = [f"round {record.index}:"]
        if record.reliabilities is not None:
            scored = ", ".join(
                f"{debater}={'n/a' if value is None else format(value, '.2f')}"
                for debater, value in zip(transcript.debater_ids, record.reliabilities)
            )
            parts.append(f"reliability [{scored}]")
        parts.append("gate open" if record.gate else "gate closed")
        parts.append(f"score {_format_score(record.score)}")
        print(" ".join(parts))
    print(", ".join(config.space.labels_of(transcript.final)))


def _print_row(row: ReportRow) -> None:
    result = row.result
    print(f"cases: {row.n} evaluated, {row.failures} failed")
    if not row.valid:
        print(
            "warning: failure rate exceeds max_failure_rate; row marked invalid",
            file=sys.stderr,
        )
    if result is None:
        return
    print(f"accuracy: {result.accuracy:.4f}")
    print(f"macro F1: {result.macro_f1:.4f}")
    print(f"micro F1: {result.micro_f1:.4f}")
    for metric in result.per_class:
        print(
            f"  {metric.label}: F1 {metric.f1:.4f}"
            f" (precision {metric.precision:.4f}, recall {metric.recall:.4f},"
            f" support {metric.support})"
        )
    print(f"corrected: {result.correction}")
    print(f"degraded: {result.degradation}")


# --------------------------------------------------------------------------
# Subcommands


def _cmd_run(args: argparse.Namespace, config: RunConfig) -> int:
    case = _select_case(args, config)
    model = _load_model(config)
    out = Path(config.output_dir)
    journal_path = out / "journals" / f"{case.id}.jsonl"
    journal_path.unlink(missing_ok=True)
    with CallJournal(journal_path) as journal:
        transcript = run_case(case, config, model, journal=journal)
    _write_transcript(transcript, out, config)
    _print_run_summary(transcript, config)
    return EXIT_OK


def _cmd_evaluate(args: argparse.Namespace, config: RunConfig) -> int:
    records = _load_eval_cases(config)
    model = _load_model(config)

    backend_for_case = None
    if args.replay_from:
        replay_dir = Path(args.replay_from)
        if not replay_dir.is_dir():
            raise ConfigError("replay-from", f"no such directory: {replay_dir}")

        def backend_for_case(case_id: str) -> Backend:
            journal_file = replay_dir / f"{case_id}.jsonl"
            if not journal_file.is_file():
                raise ConfigError("replay-from", f"no journal for case {case_id!r}")
            return scripted_from_journal(journal_file)

    grid = SweepGrid(
        rounds=(config.rounds,),
        debater_counts=(len(config.debaters),),
        smoothing=(config.smoothing_T,),
        gates=(config.gate,),
    )
    report = run_experiment(
        records,
        config,
        grid,
        model,
        out_dir=config.output_dir,
        parallel=config.parallel,
        backend_for_case=backend_for_case,
    )
    row = report.rows[0]
    if row.result is None:
        print("error: every case failed; nothing to report", file=sys.stderr)
        return EXIT_ABORT
    _print_row(row)
    print(f"reports written to {Path(config.output_dir) / 'reports'}")
    return EXIT_OK


def _parse_int_list(text: str | None, name: str) -> tuple[int, ...] | None:
    if text is None:
        return None
    try:
        values = tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise ConfigError(name, "must be a comma-separated list of integers") from None
    if not values:
        raise ConfigError(name, "must be non-empty")
    return values


def _parse_float_list(text: str | None, name: str) -> tuple[float, ...] | None:
    if text is None:
        return None
    try:
        values = tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise ConfigError(name, "must be a comma-separated list of numbers") from None
    if not values:
        raise ConfigError(name, "must be non-empty")
    return values


def _parse_gates(text: str | None) -> tuple[GatePolicy, ...] | None:
    if text is None:
        return None
    gates = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        mode, _, cutoff_text = part.partition(":")
        try:
            cutoff = float(cutoff_text) if cutoff_text else 0.5
            gates.append(GatePolicy(mode.strip(), cutoff))
        except ValueError as err:
            raise ConfigError("gates", f"bad gate spec {part!r}: {err}") from None
    if not gates:
        raise ConfigError("gates", "must be non-empty")
    return tuple(gates)


def _cmd_sweep(args: argparse.Namespace, config: RunConfig) -> int:
    records = _load_eval_cases(config)
    model = _load_model(config)
    grid = SweepGrid(
        rounds=_parse_int_list(args.rounds, "rounds") or (config.rounds,),
        debater_counts=_parse_int_list(args.debaters, "debaters")
        or (len(config.debaters),),
        smoothing=_parse_float_list(args.smoothing, "smoothing")
        or (config.smoothing_T,),
        gates=_parse_gates(args.gates) or (config.gate,),
    )
    for count in grid.debater_counts:
        if count < 2:
            raise ConfigError("debaters", "a debate needs at least 2 debaters")
    report = run_experiment(
        records, config, grid, model, out_dir=config.output_dir, parallel=config.parallel
    )
    for row in report.rows:
        if row.result is None:
            print(f"{row.point_tag}: no completed cases ({row.failures} failures)")
            continue
        note = "" if row.valid else " INVALID"
        print(
            f"{row.point_tag}: accuracy={row.result.accuracy:.4f}"
            f" macro_f1={row.result.macro_f1:.4f} failures={row.failures}{note}"
        )
    print(f"wrote {len(report.rows)} row(s) to {Path(config.output_dir) / 'reports'}")
    return EXIT_OK


def _read_transcripts(directory: Path) -> list[DebateTranscript]:
    if not directory.is_dir():
        raise ConfigError("transcripts", f"no such directory: {directory}")
    transcripts = []
    for path in sorted(directory.rglob("*.json")):
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
            transcripts.append(DebateTranscript.from_json_dict(raw))
        except (KeyError, TypeError, ValueError) as err:
            raise ConfigError(
                "transcripts", f"unreadable transcript {path.name}: {err}"
            ) from err
    if not transcripts:
        raise ConfigError("transcripts", f"no transcript files under {directory}")
    return transcripts


def _cmd_build_trainset(args: argparse.Namespace, config: RunConfig) -> int:
    transcripts = _read_transcripts(Path(args.transcripts))
    if config.dataset_path is None:
        raise ConfigError("dataset_path", "required to look up ground truth")
    records = cases.load_dataset(
        config.dataset_path,
        config.dataset_format,
        config.space,
        strict=config.strict,
        max_chars=config.max_case_chars,
    )
    by_id = {record.id: record for record in records}
    missing = sorted(
        {
            t.case_id
            for t in transcripts
            if by_id.get(t.case_id) is None or by_id[t.case_id].ground_truth is None
        }
    )
    if missing:
        print(
            "error: missing ground truth for case(s): " + ", ".join(missing),
            file=sys.stderr,
        )
        return EXIT_ABORT
    examples = reliability.build_training_set(transcripts, records)
    out_file = (
        Path(args.out_file)
        if args.out_file
        else Path(config.output_dir) / "models" / "trainset.jsonl"
    )
    reliability.write_training_file(out_file, examples)
    print(f"wrote {len(examples)} training example(s) to {out_file}")
    return EXIT_OK


def _cmd_train_assistant(args: argparse.Namespace, config: RunConfig) -> int:
    try:
        examples = reliability.read_training_file(args.train_file)
    except ValueError as err:
        raise ConfigError("train_file", str(err)) from err
    if not 0.0 <= args.holdout < 1.0:
        raise ConfigError("holdout", "must lie in [0, 1)")

    overrides = {}
    if args.dim is not None:
        overrides["dim"] = args.dim
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.learning_rate is not None:
        overrides["learning_rate"] = args.learning_rate
    try:
        train_config = TrainConfig(seed=config.seed, **overrides)
    except ValueError as err:
        raise ConfigError("train", str(err)) from err

    rng = random.Random(config.seed)
    indices = list(range(len(examples)))
    rng.shuffle(indices)
    holdout_n = int(round(len(examples) * args.holdout))
    train_examples = [examples[i] for i in indices[holdout_n:]]

    model = reliability.train(train_examples, train_config)
    if holdout_n:
        holdout_examples = [examples[i] for i in indices[:holdout_n]]
        acc = reliability.evaluate_accuracy(model, holdout_examples)
        print(
            f"trained on {len(train_examples)} example(s);"
            f" holdout accuracy: {acc:.4f}"
        )
    else:
        acc = reliability.evaluate_accuracy(model, train_examples)
        print(
            f"trained on {len(train_examples)} example(s);"
            f" training accuracy: {acc:.4f}"
        )

    model_out = (
        Path(args.model_out)
        if args.model_out
        else Path(config.assistant_model_path)
        if config.assistant_model_path
        else Path(config.output_dir) / "models" / "assistant.json"
    )
    reliability.save_model(model, model_out)
    print(f"model written to {model_out}")
    return EXIT_OK


def _cmd_replay(args: argparse.Namespace, config: RunConfig) -> int:
    case = _select_case(args, config)
    journal_path = Path(args.journal)
    if not journal_path.is_file():
        raise ConfigError("journal", f"no such file: {journal_path}")
    backend = scripted_from_journal(journal_path)
    replay_config = config.with_all_backends(backend)
    model = _load_model(config)
    transcript = run_case(case, replay_config, model)
    _write_transcript(transcript, Path(config.output_dir), config)
    _print_run_summary(transcript, config)
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "evaluate": _cmd_evaluate,
    "sweep": _cmd_sweep,
    "build-trainset": _cmd_build_trainset,
    "train-assistant": _cmd_train_assistant,
    "replay": _cmd_replay,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help and 2 for usage errors; bad usage is a
        # configuration problem under this tool's exit-code contract.
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        config = load_config(
            args.config,
            out=args.out,
            seed=args.seed,
            strict=args.strict,
            parallel=args.parallel,
        )
        return _COMMANDS[args.command](args, config)
    except LexDebateError as err:
        print(f"error: {err}", file=sys.stderr)
        return _exit_code(err)
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
