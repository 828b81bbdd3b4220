"""Label spaces, case records, templating, and dataset loading."""

from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lexdebate.cases import (
    CAIL18_JSONL,
    CASELAW_JSONL,
    CaseRecord,
    LabelAssignment,
    LabelSpace,
    PromptTemplate,
    case_to_record,
    format_case,
    load_case_file,
    load_dataset,
    load_dataset_with_report,
    space_for_task,
    substitute,
    write_dataset,
)
from lexdebate.errors import (
    MalformedRecord,
    MissingPlaceholderValue,
    UnknownLabel,
)

from conftest import make_case


class TestLabelSpace:
    def test_binary_requires_two_labels(self):
        with pytest.raises(ValueError):
            LabelSpace.binary(("only one",))
        with pytest.raises(ValueError):
            LabelSpace.binary(("a", "b", "c"))

    def test_labels_must_be_unique_and_non_empty(self):
        with pytest.raises(ValueError):
            LabelSpace.multi(("x", "x"))
        with pytest.raises(ValueError):
            LabelSpace.multi(("x", ""))
        with pytest.raises(ValueError):
            LabelSpace.multi(())

    def test_single_and_subset(self, multi_space):
        assert multi_space.single(1).single_index == 1
        assert multi_space.subset({0, 2}).sorted_indices() == [0, 2]
        with pytest.raises(ValueError):
            multi_space.single(3)
        with pytest.raises(ValueError):
            multi_space.subset(set())
        with pytest.raises(ValueError):
            multi_space.subset({-1})

    def test_single_index_rejects_multi(self):
        with pytest.raises(ValueError):
            LabelAssignment(frozenset({0, 1})).single_index

    def test_index_of(self, binary_space):
        assert binary_space.index_of("Plaintiff wins") == 0
        with pytest.raises(ValueError):
            binary_space.index_of("nobody wins")

    def test_labels_of_orders_by_index(self, multi_space):
        assignment = multi_space.subset({2, 0})
        assert multi_space.labels_of(assignment) == ["article 12", "article 56"]

    def test_render_preserves_order(self, binary_space):
        assert binary_space.render() == "['Plaintiff wins','Defendant wins']"

    def test_space_for_task(self):
        assert space_for_task("trial", ("a", "b")).is_binary
        assert not space_for_task("article", ("a", "b", "c")).is_binary
        with pytest.raises(ValueError):
            space_for_task("appeal", ("a", "b"))


class TestCaseRecord:
    def test_background_required(self):
        with pytest.raises(ValueError):
            CaseRecord(id="x", background="   ")
        with pytest.raises(ValueError):
            CaseRecord(id="", background="fine")

    def test_optional_fields_default_empty(self):
        case = make_case()
        assert case.plaintiff_claim == ""
        assert case.ground_truth is None


class TestTemplates:
    def test_unknown_placeholder_rejected_at_construction(self):
        with pytest.raises(ValueError):
            PromptTemplate("hello {nonexistent_slot}")

    def test_substitute_fills_values(self):
        out = substitute("A: {background} B: {labels}", {"background": "x", "labels": "y"})
        assert out == "A: x B: y"

    def test_substitute_missing_value_raises(self):
        with pytest.raises(MissingPlaceholderValue):
            substitute("{background}", {"background": None})
        with pytest.raises(MissingPlaceholderValue):
            substitute("{background}", {})

    def test_format_case_empty_field_raises(self, binary_space):
        template = PromptTemplate("claim: {plaintiff_claim}")
        with pytest.raises(MissingPlaceholderValue):
            format_case(make_case(), template, binary_space)

    def test_format_case_renders_labels(self, binary_space):
        template = PromptTemplate("{background} / {labels}")
        case = make_case(background="short facts")
        out = format_case(case, template, binary_space)
        assert out == "short facts / ['Plaintiff wins','Defendant wins']"

    @given(st.text())
    def test_substitute_identity_without_placeholders(self, text):
        # Brace-free text passes through untouched.
        if "{" in text or "}" in text:
            return
        assert substitute(text, {}) == text


def _write_jsonl(path, rows):
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")


class TestDatasetLoading:
    def test_caselaw_round_trip(self, tmp_path, binary_space):
        rows = [
            {"id": "c1", "background": "facts one", "label": "Plaintiff wins"},
            {
                "id": "c2",
                "background": "facts two",
                "plaintiff_claim": "claim",
                "defendant_statement": "denial",
                "label": "Defendant wins",
            },
        ]
        path = tmp_path / "data.jsonl"
        _write_jsonl(path, rows)
        records = load_dataset(path, CASELAW_JSONL, binary_space)
        assert [r.id for r in records] == ["c1", "c2"]
        assert records[0].ground_truth.single_index == 0
        assert records[1].defendant_statement == "denial"

    def test_cail18_fact_alias_and_synth_ids(self, tmp_path, multi_space):
        rows = [
            {"fact": "facts", "label": ["article 12", "article 56"]},
            {"id": "named", "fact": "more facts", "label": ["article 34"]},
        ]
        path = tmp_path / "data.jsonl"
        _write_jsonl(path, rows)
        records = load_dataset(path, CAIL18_JSONL, multi_space)
        assert records[0].id == "line-1"
        assert records[0].ground_truth.sorted_indices() == [0, 2]
        assert records[1].id == "named"

    def test_label_optional(self, tmp_path, binary_space):
        path = tmp_path / "data.jsonl"
        _write_jsonl(path, [{"id": "c1", "background": "facts"}])
        records = load_dataset(path, CASELAW_JSONL, binary_space)
        assert records[0].ground_truth is None

    def test_lenient_mode_reports_rejects(self, tmp_path, binary_space):
        path = tmp_path / "data.jsonl"
        path.write_text(
            "\n".join(
                [
                    json.dumps({"id": "ok", "background": "facts", "label": "Plaintiff wins"}),
                    "{not json",
                    json.dumps({"id": "nolabelspace", "background": "x", "label": "Nobody wins"}),
                    json.dumps({"background": "missing id"}),
                    "",
                ]
            ),
            encoding="utf-8",
        )
        records, rejects = load_dataset_with_report(path, CASELAW_JSONL, binary_space)
        assert [r.id for r in records] == ["ok"]
        assert [r.line_no for r in rejects] == [2, 3, 4]

    def test_strict_mode_raises_on_first_bad_line(self, tmp_path, binary_space):
        path = tmp_path / "data.jsonl"
        path.write_text('{"id": "a"\n', encoding="utf-8")
        with pytest.raises(MalformedRecord) as exc_info:
            load_dataset(path, CASELAW_JSONL, binary_space, strict=True)
        assert "line 1" in str(exc_info.value)

    def test_unknown_label_carries_line_and_name(self, tmp_path, binary_space):
        path = tmp_path / "data.jsonl"
        _write_jsonl(path, [{"id": "a", "background": "x", "label": "Nobody"}])
        with pytest.raises(UnknownLabel) as exc_info:
            load_dataset(path, CASELAW_JSONL, binary_space, strict=True)
        assert "Nobody" in str(exc_info.value)

    def test_binary_rejects_label_lists(self, tmp_path, binary_space):
        path = tmp_path / "data.jsonl"
        _write_jsonl(
            path,
            [{"id": "a", "background": "x", "label": ["Plaintiff wins", "Defendant wins"]}],
        )
        with pytest.raises(MalformedRecord):
            load_dataset(path, CASELAW_JSONL, binary_space, strict=True)

    def test_label_filter_drops_and_reports(self, tmp_path, binary_space):
        path = tmp_path / "data.jsonl"
        _write_jsonl(
            path,
            [
                {"id": "keep", "background": "x", "label": "Plaintiff wins"},
                {"id": "drop", "background": "y", "label": "Defendant wins"},
            ],
        )
        records, rejects = load_dataset_with_report(
            path, CASELAW_JSONL, binary_space, label_filter=("Defendant wins",)
        )
        assert [r.id for r in records] == ["keep"]
        assert rejects and rejects[0].line_no == 2

    def test_max_chars_truncates_fields(self, tmp_path, binary_space):
        path = tmp_path / "data.jsonl"
        _write_jsonl(
            path,
            [{"id": "a", "background": "0123456789", "plaintiff_claim": "abcdefgh"}],
        )
        records = load_dataset(path, CASELAW_JSONL, binary_space, max_chars=4)
        assert records[0].background == "0123"
        assert records[0].plaintiff_claim == "abcd"

    def test_unknown_format_rejected(self, tmp_path, binary_space):
        path = tmp_path / "data.jsonl"
        _write_jsonl(path, [{"id": "a", "background": "x"}])
        with pytest.raises(ValueError):
            load_dataset(path, "csv", binary_space)

    def test_write_then_load_is_identity(self, tmp_path, multi_space):
        cases = [
            make_case("c1", "facts one", ground_truth=multi_space.subset({0, 1})),
            make_case("c2", "facts two", plaintiff_claim="claim"),
        ]
        path = tmp_path / "out.jsonl"
        write_dataset(path, cases, multi_space)
        reloaded = load_dataset(path, CASELAW_JSONL, multi_space)
        assert reloaded == cases

    def test_case_to_record_binary_label_is_string(self, binary_space):
        case = make_case(ground_truth=binary_space.single(1))
        record = case_to_record(case, binary_space)
        assert record["label"] == "Defendant wins"

    def test_load_case_file(self, tmp_path, binary_space):
        path = tmp_path / "case.json"
        path.write_text(
            json.dumps({"id": "solo", "background": "facts", "label": "Plaintiff wins"}),
            encoding="utf-8",
        )
        case = load_case_file(path, binary_space)
        assert case.id == "solo"
        assert case.ground_truth.single_index == 0

    def test_order_and_count_follow_the_file(self, tmp_path, binary_space):
        rows = [
            {"id": f"c{i}", "background": f"facts {i}", "label": "Plaintiff wins"}
            for i in range(20)
        ]
        path = tmp_path / "data.jsonl"
        _write_jsonl(path, rows)
        records = load_dataset(path, CASELAW_JSONL, binary_space)
        assert [r.id for r in records] == [f"c{i}" for i in range(20)]
