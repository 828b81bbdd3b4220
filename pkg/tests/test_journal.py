"""Journal round trips and journal-to-backend replay."""

from __future__ import annotations

import json

import pytest

from lexdebate.backends import Conversation, ScriptedBackend, complete, fnv1a64
from lexdebate.errors import ScriptMiss
from lexdebate.journal import (
    CallJournal,
    read_journal,
    scripted_from_journal,
)


def test_in_memory_journal_keeps_entries():
    journal = CallJournal()
    journal.record("judge.initial", "abc", "reply", 1, 12.5)
    assert journal.path is None
    assert len(journal.entries) == 1
    assert journal.entries[0].reply == "reply"


def test_file_round_trip(tmp_path):
    path = tmp_path / "calls.jsonl"
    with CallJournal(path) as journal:
        journal.record("judge.initial", "aa", "first", 1, 3.0)
        journal.record("debater.a.opening", "bb", "second", 2, 4.5)
    entries = read_journal(path)
    assert [e.role_tag for e in entries] == ["judge.initial", "debater.a.opening"]
    assert entries[1].attempts == 2
    assert entries[0].error is None


def test_failure_rows_carry_error_and_null_reply(tmp_path):
    path = tmp_path / "calls.jsonl"
    with CallJournal(path) as journal:
        journal.record_failure("judge.update", "cc", 3, 9.0, "HTTP 503")
    raw = json.loads(path.read_text(encoding="utf-8").strip())
    assert raw["reply"] is None
    assert raw["error"] == "HTTP 503"
    assert raw["attempts"] == 3
    entries = read_journal(path)
    assert entries[0].error == "HTTP 503"


def test_success_rows_have_no_error_key(tmp_path):
    path = tmp_path / "calls.jsonl"
    with CallJournal(path) as journal:
        journal.record("judge.initial", "aa", "ok", 1, 1.0)
    raw = json.loads(path.read_text(encoding="utf-8").strip())
    assert "error" not in raw


def test_no_file_created_before_first_write(tmp_path):
    path = tmp_path / "sub" / "calls.jsonl"
    journal = CallJournal(path)
    assert not path.exists()
    journal.record("r", "h", "x", 1, 0.0)
    assert path.exists()
    journal.close()


def test_complete_journals_prompt_hash(tmp_path):
    path = tmp_path / "calls.jsonl"
    backend = ScriptedBackend({"the prompt": "the reply"})
    with CallJournal(path) as journal:
        complete(
            backend,
            Conversation.single_user("the prompt"),
            journal=journal,
            role_tag="judge.initial",
        )
    (entry,) = read_journal(path)
    assert entry.prompt_hash == fnv1a64("the prompt")
    assert entry.reply == "the reply"


def test_complete_journals_failures_and_reraises(tmp_path):
    path = tmp_path / "calls.jsonl"
    backend = ScriptedBackend({})
    with CallJournal(path) as journal:
        with pytest.raises(ScriptMiss):
            complete(backend, Conversation.single_user("unknown"), journal=journal)
    (entry,) = read_journal(path)
    assert entry.reply is None
    assert entry.error


def test_scripted_from_journal_replays_by_hash(tmp_path):
    path = tmp_path / "calls.jsonl"
    original = ScriptedBackend({"q1": "a1", "q2": "a2"})
    with CallJournal(path) as journal:
        complete(original, Conversation.single_user("q1"), journal=journal)
        complete(original, Conversation.single_user("q2"), journal=journal)
    replayed = scripted_from_journal(path)
    assert replayed.complete_conversation(Conversation.single_user("q1")).text == "a1"
    assert replayed.complete_conversation(Conversation.single_user("q2")).text == "a2"
    # Strict by default: anything off-script is a miss.
    with pytest.raises(ScriptMiss):
        replayed.complete_conversation(Conversation.single_user("q3"))


def test_scripted_from_journal_skips_failure_rows():
    journal = CallJournal()
    journal.record("r", fnv1a64("q"), "good", 1, 0.0)
    journal.record_failure("r", fnv1a64("bad"), 1, 0.0, "boom")
    backend = scripted_from_journal(journal.entries)
    assert backend.complete_conversation(Conversation.single_user("q")).text == "good"
    with pytest.raises(ScriptMiss):
        backend.complete_conversation(Conversation.single_user("bad"))


def test_scripted_from_journal_first_reply_wins(caplog):
    journal = CallJournal()
    journal.record("r", fnv1a64("q"), "first", 1, 0.0)
    journal.record("r", fnv1a64("q"), "second", 1, 0.0)
    with caplog.at_level("WARNING"):
        backend = scripted_from_journal(journal.entries)
    assert backend.complete_conversation(Conversation.single_user("q")).text == "first"
    assert any("conflicting" in r.message for r in caplog.records)


def test_journal_appends_across_instances(tmp_path):
    path = tmp_path / "calls.jsonl"
    with CallJournal(path) as journal:
        journal.record("r", "h1", "x", 1, 0.0)
    with CallJournal(path) as journal:
        journal.record("r", "h2", "y", 1, 0.0)
    assert [e.prompt_hash for e in read_journal(path)] == ["h1", "h2"]
