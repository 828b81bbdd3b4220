"""End-to-end command line tests, driven in process through main(argv)."""

from __future__ import annotations

import json

import pytest

from lexdebate.cases import case_to_record, write_dataset
from lexdebate.cli import EXIT_ABORT, EXIT_BACKEND, EXIT_CONFIG, EXIT_OK, main
from lexdebate.reliability import ReliabilityExample, write_training_file

from conftest import RunScript, make_case, make_config


def _scripted_corpus(n_cases: int, *, rounds: int = 1, with_truth: bool = True,
                     initial: str = "0.9"):
    """Cases plus the full prompt->reply script for one-round runs on them."""
    config = make_config(None, rounds=rounds)
    space = config.space
    records = []
    script: dict[str, str] = {}
    for i in range(n_cases):
        truth = space.single(i % 2) if with_truth else None
        case = make_case(
            f"case-{i:03d}",
            background=f"Case {i}: the parties dispute a delivery contract clause.",
            ground_truth=truth,
        )
        builder = RunScript(case, config)
        builder.set_initial(initial)
        builder.add_round(
            {
                "a": "Opening from a: plaintiff wins on the merits.",
                "b": "Opening from b: defendant wins, the claim is time-barred.",
            },
            {
                "a": "Reply from a: still plaintiff wins.",
                "b": "Reply from b: still defendant wins.",
            },
            "One expert backs the plaintiff, the other the defendant.",
            update_reply="0.9",
        )
        script.update(builder.script)
        records.append(case)
    return records, script, space


@pytest.fixture
def workspace(tmp_path):
    """config.json + cases.jsonl + script.json wired together under tmp_path."""
    records, script, space = _scripted_corpus(3)
    write_dataset(tmp_path / "cases.jsonl", records, space)
    (tmp_path / "script.json").write_text(json.dumps(script), encoding="utf-8")
    config = {
        "task": "trial",
        "rounds": 1,
        "smoothing_T": 0.5,
        "judge": {"kind": "scripted", "script_path": "script.json"},
        "debaters": [
            {"id": "a", "perspective_tag": "advocate a"},
            {"id": "b", "perspective_tag": "advocate b"},
        ],
        "dataset_path": "cases.jsonl",
        "output_dir": str(tmp_path / "out"),
    }
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(config), encoding="utf-8")
    return tmp_path, config_path, records, space


class TestRun:
    def test_single_case(self, workspace, capsys):
        tmp_path, config_path, records, space = workspace
        code = main(["run", "--config", str(config_path), "--case-id", "case-000"])
        captured = capsys.readouterr()
        assert code == EXIT_OK
        lines = captured.out.strip().splitlines()
        assert lines[0] == "case: case-000"
        assert lines[1] == "initial prediction: 0.9000"
        assert lines[2] == "round 1: gate open score 0.9000"
        assert lines[-1] == "Plaintiff wins"
        assert (tmp_path / "out" / "transcripts" / "case-000.json").is_file()
        journal = tmp_path / "out" / "journals" / "case-000.jsonl"
        assert journal.is_file()
        assert len(journal.read_text().strip().splitlines()) == 7

    def test_case_file(self, workspace, capsys, tmp_path):
        _, config_path, records, space = workspace
        case_file = tmp_path / "one_case.json"
        case_file.write_text(json.dumps(case_to_record(records[1], space)))
        code = main(["run", "--config", str(config_path), "--case-file", str(case_file)])
        assert code == EXIT_OK
        assert capsys.readouterr().out.strip().splitlines()[-1] == "Plaintiff wins"

    def test_exactly_one_selector_required(self, workspace, capsys):
        _, config_path, records, space = workspace
        assert main(["run", "--config", str(config_path)]) == EXIT_CONFIG
        code = main(
            [
                "run",
                "--config",
                str(config_path),
                "--case-id",
                "case-000",
                "--case-file",
                "x.json",
            ]
        )
        assert code == EXIT_CONFIG

    def test_unknown_case_id(self, workspace, capsys):
        _, config_path, *_ = workspace
        assert main(["run", "--config", str(config_path), "--case-id", "nope"]) == EXIT_CONFIG
        assert "no case with id" in capsys.readouterr().err

    def test_script_miss_is_a_backend_failure(self, workspace, capsys):
        tmp_path, config_path, *_ = workspace
        (tmp_path / "script.json").write_text("{}")
        code = main(["run", "--config", str(config_path), "--case-id", "case-000"])
        assert code == EXIT_BACKEND
        assert capsys.readouterr().err.startswith("error:")

    def test_unparseable_initial_reply_aborts(self, workspace, capsys, tmp_path):
        _, config_path, records, space = workspace
        config = make_config(None, rounds=1)
        builder = RunScript(records[0], config)
        builder.set_initial("the court will surely decide for someone")
        script_path = tmp_path / "noscore.json"
        script_path.write_text(json.dumps(builder.script))
        doc = json.loads(config_path.read_text())
        doc["judge"] = {"kind": "scripted", "script_path": str(script_path)}
        config_path.write_text(json.dumps(doc))
        code = main(["run", "--config", str(config_path), "--case-id", "case-000"])
        assert code == EXIT_ABORT
        assert "error:" in capsys.readouterr().err


class TestArgumentHandling:
    def test_missing_config_file(self, tmp_path, capsys):
        code = main(["run", "--config", str(tmp_path / "absent.json"), "--case-id", "x"])
        assert code == EXIT_CONFIG
        assert "no such file" in capsys.readouterr().err

    def test_invalid_config_json(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["run", "--config", str(bad), "--case-id", "x"]) == EXIT_CONFIG
        assert "invalid JSON" in capsys.readouterr().err

    def test_usage_error_maps_to_config_exit(self, capsys):
        assert main(["run"]) == EXIT_CONFIG

    def test_unknown_command_maps_to_config_exit(self, capsys):
        assert main(["frobnicate"]) == EXIT_CONFIG

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == EXIT_OK
        assert "lexdebate" in capsys.readouterr().out


class TestEvaluate:
    def test_dataset_run(self, workspace, capsys):
        tmp_path, config_path, *_ = workspace
        code = main(["evaluate", "--config", str(config_path)])
        captured = capsys.readouterr()
        assert code == EXIT_OK
        assert "cases: 3 evaluated, 0 failed" in captured.out
        assert "accuracy: 0.6667" in captured.out
        assert "macro F1:" in captured.out
        assert "corrected: 0" in captured.out
        assert f"reports written to {tmp_path / 'out' / 'reports'}" in captured.out
        assert (tmp_path / "out" / "reports" / "report.csv").is_file()
        assert (tmp_path / "out" / "reports" / "report.json").is_file()

    def test_no_usable_cases(self, tmp_path, capsys):
        records, script, space = _scripted_corpus(2, with_truth=False)
        write_dataset(tmp_path / "cases.jsonl", records, space)
        (tmp_path / "script.json").write_text(json.dumps(script))
        config_path = tmp_path / "config.json"
        config_path.write_text(
            json.dumps(
                {
                    "rounds": 1,
                    "judge": {"kind": "scripted", "script_path": "script.json"},
                    "debaters": [
                        {"id": "a", "perspective_tag": "advocate a"},
                        {"id": "b", "perspective_tag": "advocate b"},
                    ],
                    "dataset_path": "cases.jsonl",
                    "output_dir": str(tmp_path / "out"),
                }
            )
        )
        assert main(["evaluate", "--config", str(config_path)]) == EXIT_CONFIG
        err = capsys.readouterr().err
        assert "dropped 2 case(s) without ground truth" in err
        assert "no usable cases" in err

    def test_malformed_line_lenient_vs_strict(self, workspace, capsys):
        tmp_path, config_path, *_ = workspace
        with open(tmp_path / "cases.jsonl", "a", encoding="utf-8") as handle:
            handle.write("{broken\n")
        assert main(["evaluate", "--config", str(config_path)]) == EXIT_OK
        assert "skipped 1 dataset line(s)" in capsys.readouterr().err
        code = main(["evaluate", "--config", str(config_path), "--strict"])
        assert code == EXIT_CONFIG
        assert "line 4" in capsys.readouterr().err

    def test_replay_from_journals_is_byte_identical(self, workspace, capsys):
        tmp_path, config_path, *_ = workspace
        assert main(["evaluate", "--config", str(config_path)]) == EXIT_OK
        journal_root = tmp_path / "out" / "journals"
        (tag_dir,) = list(journal_root.iterdir())

        # Blank the script: a live call would now miss, so byte-identical
        # output proves the replay never touches the configured backend.
        (tmp_path / "script.json").write_text("{}")
        replay_out = tmp_path / "replay_out"
        code = main(
            [
                "evaluate",
                "--config",
                str(config_path),
                "--out",
                str(replay_out),
                "--replay-from",
                str(tag_dir),
            ]
        )
        assert code == EXIT_OK
        original = (tmp_path / "out" / "reports" / "report.csv").read_bytes()
        replayed = (replay_out / "reports" / "report.csv").read_bytes()
        assert original == replayed
        live_transcripts = sorted((tmp_path / "out" / "transcripts").rglob("*.json"))
        assert live_transcripts
        for path in live_transcripts:
            twin = replay_out / "transcripts" / path.relative_to(
                tmp_path / "out" / "transcripts"
            )
            assert path.read_bytes() == twin.read_bytes()

    def test_replay_from_missing_dir(self, workspace, capsys):
        _, config_path, *_ = workspace
        code = main(
            ["evaluate", "--config", str(config_path), "--replay-from", "/nonexistent/x"]
        )
        assert code == EXIT_CONFIG


class TestSweep:
    def test_two_by_two_grid(self, workspace, capsys):
        tmp_path, config_path, *_ = workspace
        code = main(
            [
                "sweep",
                "--config",
                str(config_path),
                "--rounds",
                "1,2",
                "--smoothing",
                "0.5,1.0",
            ]
        )
        captured = capsys.readouterr()
        assert code == EXIT_OK
        lines = captured.out.strip().splitlines()
        tags = [line.split(":")[0] for line in lines[:-1]]
        assert tags == [
            "r1_d2_T0.5_mean0.5",
            "r1_d2_T1.0_mean0.5",
            "r2_d2_T0.5_mean0.5",
            "r2_d2_T1.0_mean0.5",
        ]
        assert all("accuracy=0.6667" in line for line in lines[:-1])
        assert lines[-1] == f"wrote 4 row(s) to {tmp_path / 'out' / 'reports'}"
        sweep_csv = tmp_path / "out" / "reports" / "sweep.csv"
        assert len(sweep_csv.read_text().strip().splitlines()) == 5

    def test_bad_gate_spec(self, workspace, capsys):
        _, config_path, *_ = workspace
        code = main(["sweep", "--config", str(config_path), "--gates", "bogus:0.5"])
        assert code == EXIT_CONFIG
        assert "gates" in capsys.readouterr().err

    def test_debater_count_below_two(self, workspace, capsys):
        _, config_path, *_ = workspace
        assert main(["sweep", "--config", str(config_path), "--debaters", "1"]) == EXIT_CONFIG


class TestBuildTrainset:
    def test_from_evaluated_transcripts(self, workspace, capsys, tmp_path):
        ws_tmp, config_path, *_ = workspace
        assert main(["evaluate", "--config", str(config_path)]) == EXIT_OK
        capsys.readouterr()
        out_file = tmp_path / "train.jsonl"
        code = main(
            [
                "build-trainset",
                "--config",
                str(config_path),
                "--transcripts",
                str(ws_tmp / "out" / "transcripts"),
                "--out-file",
                str(out_file),
            ]
        )
        captured = capsys.readouterr()
        assert code == EXIT_OK
        rows = [json.loads(line) for line in out_file.read_text().strip().splitlines()]
        assert f"wrote {len(rows)} training example(s) to {out_file}" in captured.out
        assert len(rows) == 6  # 3 cases x 2 debaters
        assert all(set(row) == {"text", "target"} for row in rows)
        # truth alternates 0,1,0; debater a argues label 0, b argues label 1
        assert sum(row["target"] for row in rows) == 3

    def test_missing_ground_truth_lists_cases(self, tmp_path, capsys):
        records, script, space = _scripted_corpus(1, with_truth=False)
        write_dataset(tmp_path / "cases.jsonl", records, space)
        (tmp_path / "script.json").write_text(json.dumps(script))
        config_path = tmp_path / "config.json"
        config_path.write_text(
            json.dumps(
                {
                    "rounds": 1,
                    "judge": {"kind": "scripted", "script_path": "script.json"},
                    "debaters": [
                        {"id": "a", "perspective_tag": "advocate a"},
                        {"id": "b", "perspective_tag": "advocate b"},
                    ],
                    "dataset_path": "cases.jsonl",
                    "output_dir": str(tmp_path / "out"),
                }
            )
        )
        case_file = tmp_path / "case.json"
        case_file.write_text(json.dumps(case_to_record(records[0], space)))
        assert main(["run", "--config", str(config_path), "--case-file", str(case_file)]) == EXIT_OK
        capsys.readouterr()
        code = main(
            [
                "build-trainset",
                "--config",
                str(config_path),
                "--transcripts",
                str(tmp_path / "out" / "transcripts"),
            ]
        )
        assert code == EXIT_ABORT
        assert "missing ground truth for case(s): case-000" in capsys.readouterr().err


def _write_separable_training_file(path, n=40):
    examples = []
    for i in range(n):
        if i % 2:
            text = f"claim {i}\n\nThe opinion rests on solid precedent and record facts."
            target = 0
        else:
            text = f"claim {i}\n\nThe opinion is wild speculation without authority."
            target = 1
        examples.append(ReliabilityExample(text, target))
    write_training_file(path, examples)


class TestTrainAssistant:
    def test_train_and_save(self, workspace, capsys, tmp_path):
        _, config_path, *_ = workspace
        train_file = tmp_path / "train.jsonl"
        _write_separable_training_file(train_file)
        model_out = tmp_path / "assistant.json"
        code = main(
            [
                "train-assistant",
                "--config",
                str(config_path),
                "--train-file",
                str(train_file),
                "--model-out",
                str(model_out),
                "--dim",
                "256",
                "--epochs",
                "5",
            ]
        )
        captured = capsys.readouterr()
        assert code == EXIT_OK
        assert "trained on 32 example(s); holdout accuracy:" in captured.out
        assert f"model written to {model_out}" in captured.out
        assert model_out.is_file()

    def test_retraining_is_deterministic(self, workspace, capsys, tmp_path):
        _, config_path, *_ = workspace
        train_file = tmp_path / "train.jsonl"
        _write_separable_training_file(train_file)
        args = [
            "train-assistant",
            "--config",
            str(config_path),
            "--train-file",
            str(train_file),
            "--dim",
            "256",
        ]
        assert main(args + ["--model-out", str(tmp_path / "m1.json")]) == EXIT_OK
        assert main(args + ["--model-out", str(tmp_path / "m2.json")]) == EXIT_OK
        assert (tmp_path / "m1.json").read_bytes() == (tmp_path / "m2.json").read_bytes()

    def test_zero_holdout_reports_training_accuracy(self, workspace, capsys, tmp_path):
        _, config_path, *_ = workspace
        train_file = tmp_path / "train.jsonl"
        _write_separable_training_file(train_file, n=10)
        code = main(
            [
                "train-assistant",
                "--config",
                str(config_path),
                "--train-file",
                str(train_file),
                "--model-out",
                str(tmp_path / "m.json"),
                "--holdout",
                "0",
                "--dim",
                "256",
            ]
        )
        assert code == EXIT_OK
        assert "training accuracy:" in capsys.readouterr().out

    def test_holdout_out_of_range(self, workspace, capsys, tmp_path):
        _, config_path, *_ = workspace
        train_file = tmp_path / "train.jsonl"
        _write_separable_training_file(train_file, n=10)
        code = main(
            [
                "train-assistant",
                "--config",
                str(config_path),
                "--train-file",
                str(train_file),
                "--holdout",
                "1.5",
            ]
        )
        assert code == EXIT_CONFIG
        assert "holdout" in capsys.readouterr().err


class TestReplay:
    def test_replay_reproduces_the_original_transcript(self, workspace, capsys):
        tmp_path, config_path, *_ = workspace
        assert main(["run", "--config", str(config_path), "--case-id", "case-000"]) == EXIT_OK
        capsys.readouterr()
        original = (tmp_path / "out" / "transcripts" / "case-000.json").read_bytes()
        journal = tmp_path / "out" / "journals" / "case-000.jsonl"

        # prove offline-ness: a live call against this script would miss
        (tmp_path / "script.json").write_text("{}")
        replay_out = tmp_path / "replay_out"
        code = main(
            [
                "replay",
                "--config",
                str(config_path),
                "--case-id",
                "case-000",
                "--journal",
                str(journal),
                "--out",
                str(replay_out),
            ]
        )
        captured = capsys.readouterr()
        assert code == EXIT_OK
        assert captured.out.strip().splitlines()[-1] == "Plaintiff wins"
        replayed = (replay_out / "transcripts" / "case-000.json").read_bytes()
        assert replayed == original

    def test_missing_journal_file(self, workspace, capsys):
        _, config_path, *_ = workspace
        code = main(
            [
                "replay",
                "--config",
                str(config_path),
                "--case-id",
                "case-000",
                "--journal",
                "/nonexistent/journal.jsonl",
            ]
        )
        assert code == EXIT_CONFIG


class TestHttpBackendFailure:
    def test_connection_refused_exits_backend(self, tmp_path, capsys):
        records, _, space = _scripted_corpus(1)
        write_dataset(tmp_path / "cases.jsonl", records, space)
        config_path = tmp_path / "config.json"
        config_path.write_text(
            json.dumps(
                {
                    "rounds": 1,
                    "judge": {
                        "kind": "http-chat",
                        "endpoint_url": "http://127.0.0.1:9/v1/chat/completions",
                        "model": "test-model",
                        "timeout_ms": 500,
                        "max_retries": 0,
                    },
                    "debaters": [
                        {"id": "a", "perspective_tag": "advocate a"},
                        {"id": "b", "perspective_tag": "advocate b"},
                    ],
                    "dataset_path": "cases.jsonl",
                    "output_dir": str(tmp_path / "out"),
                }
            )
        )
        code = main(["run", "--config", str(config_path), "--case-id", "case-000"])
        assert code == EXIT_BACKEND
        assert capsys.readouterr().err.startswith("error:")
