"""Shared fixtures: label spaces, case factories, and script builders.

Scripted backends answer by exact prompt text, so tests precompute every
prompt a run will send with the same public builders the engine uses. The
RunScript helper keeps that bookkeeping in one place.
"""

from __future__ import annotations

import dataclasses

import pytest

from lexdebate.backends import ScriptedBackend
from lexdebate.cases import CaseRecord, LabelSpace
from lexdebate.config import (
    DEFAULT_TRIAL_LABELS,
    RunConfig,
    default_templates,
)
from lexdebate.engine import (
    DebaterSpec,
    build_exchange_prompt,
    build_initial_prompt,
    build_opening_prompt,
    build_summary_prompt,
    build_update_prompt,
    render_reliability_lines,
)
from lexdebate.reliability import GatePolicy, zero_model


@pytest.fixture
def binary_space() -> LabelSpace:
    return LabelSpace.binary(DEFAULT_TRIAL_LABELS)


@pytest.fixture
def multi_space() -> LabelSpace:
    return LabelSpace.multi(("article 12", "article 34", "article 56"))


def make_case(
    case_id: str = "case-1",
    background: str = "The tenant stopped paying rent in March; the landlord sued in June.",
    **kwargs,
) -> CaseRecord:
    return CaseRecord(id=case_id, background=background, **kwargs)


def make_config(
    judge,
    *,
    task: str = "trial",
    space: LabelSpace | None = None,
    rounds: int = 1,
    debater_ids: tuple[str, ...] = ("a", "b"),
    smoothing: float = 0.5,
    gate: GatePolicy | None = None,
    **overrides,
) -> RunConfig:
    if space is None:
        space = (
            LabelSpace.binary(DEFAULT_TRIAL_LABELS)
            if task == "trial"
            else LabelSpace.multi(("article 12", "article 34", "article 56"))
        )
    debaters = tuple(
        DebaterSpec(id=d, perspective_tag=f"advocate {d}") for d in debater_ids
    )
    return RunConfig(
        task=task,
        space=space,
        rounds=rounds,
        smoothing_T=smoothing,
        gate=gate or GatePolicy(),
        debaters=debaters,
        judge=judge,
        templates=default_templates(),
        **overrides,
    )


class FixedScorer:
    """scorer(debater_id, background, opinion) -> a fixed per-debater value."""

    def __init__(self, by_debater: dict[str, float]) -> None:
        self.by_debater = by_debater
        self.calls: list[tuple[str, str, str]] = []

    def __call__(self, debater_id: str, background: str, opinion: str) -> float:
        self.calls.append((debater_id, background, opinion))
        return self.by_debater[debater_id]


class RunScript:
    """Accumulates the exact prompt->reply map for one run_case invocation.

    Rounds are added in order; the helper mirrors the engine's own prompt
    construction (including cumulative-mode carryover) so the resulting
    ScriptedBackend can drive a strict, network-free run.
    """

    def __init__(self, case: CaseRecord, config: RunConfig) -> None:
        self.case = case
        self.config = config
        self.space = config.space
        self.script: dict[str, str] = {}
        self._prior: list[tuple[str, str]] | None = None

    @property
    def debater_ids(self) -> tuple[str, ...]:
        return tuple(d.id for d in self.config.debaters)

    def set_initial(self, reply: str) -> str:
        prompt = build_initial_prompt(
            self.case, self.space, self.config.templates.initial
        )
        self.script[prompt] = reply
        return prompt

    def add_round(
        self,
        openings: dict[str, str],
        exchanges: dict[str, str],
        summary_reply: str,
        *,
        scores: list[float | None] | None = None,
        update_reply: str | None = None,
    ) -> None:
        templates = self.config.templates
        opening_list: list[str | None] = []
        for debater in self.config.debaters:
            template = debater.opening_template or templates.opening
            prompt = build_opening_prompt(
                self.case, self.space, debater, template, prior_exchanges=self._prior
            )
            reply = openings.get(debater.id)
            if reply is not None:
                self.script[prompt] = reply
            opening_list.append(reply)

        exchange_list: list[str | None] = []
        for index, debater in enumerate(self.config.debaters):
            if opening_list[index] is None:
                exchange_list.append(None)
                continue
            peers = [
                (other.id, opening_list[j])
                for j, other in enumerate(self.config.debaters)
                if j != index and opening_list[j] is not None
            ]
            if not peers:
                exchange_list.append(None)
                continue
            template = debater.exchange_template or templates.exchange
            prompt = build_exchange_prompt(
                self.case, self.space, debater, template, peers
            )
            reply = exchanges.get(debater.id)
            if reply is not None:
                self.script[prompt] = reply
            exchange_list.append(reply)

        summary_prompt = build_summary_prompt(
            self.debater_ids, opening_list, exchange_list, scores
        )
        self.script[summary_prompt] = summary_reply

        if update_reply is not None:
            reliability_text = (
                ""
                if scores is None
                else render_reliability_lines(self.debater_ids, scores)
            )
            update_prompt = build_update_prompt(
                self.case,
                self.space,
                templates.summary_update,
                summary_reply,
                reliability_text,
            )
            self.script[update_prompt] = update_reply

        if self.config.cumulative_mode:
            self._prior = [
                (debater_id, exchange)
                for debater_id, exchange in zip(self.debater_ids, exchange_list)
                if exchange is not None
            ]

    def backend(self, default: str | None = None) -> ScriptedBackend:
        return ScriptedBackend(self.script, default=default)

    def config_with_backend(self, default: str | None = None) -> RunConfig:
        return dataclasses.replace(self.config, judge=self.backend(default))


@pytest.fixture
def neutral_model():
    return zero_model()
