"""The debate loop: initial judgment, debate rounds, gated feedback updates.

One case runs as follows. The judge backend first predicts the outcome from
the bare case (O_0). Each round, every debater states an opening opinion
from the case alone, then writes an exchange response after seeing all of
the *other* debaters' openings verbatim, never its own. The exchanges are
scored for reliability, the judge summarizes the debate, and a threshold
gate decides what happens to the running prediction:

    gate true:   O_i = (1 - T) * O_(i-1) + T * latest
    gate false:  O_i = fresh re-query of the judge on the bare case

where `latest` is parsed from the judge's reply to the summary (asked in
the same conversation that produced O_0) and T is the smoothing weight.
After the last round the running score is mapped to the final decision.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Sequence

from . import reliability
from .backends import (
    Backend,
    Conversation,
    ROLE_ASSISTANT,
    ROLE_USER,
    complete,
    parse_label,
    parse_probability,
)
from .cases import (
    CASE_PLACEHOLDERS,
    CaseRecord,
    LabelAssignment,
    LabelSpace,
    PromptTemplate,
    substitute,
)
from .errors import (
    BackendRefusal,
    CaseRunFailed,
    ConfigError,
    LexDebateError,
    RoundFailed,
    ScriptMiss,
    TransportError,
    UnparseableReply,
)

if TYPE_CHECKING:
    from .config import RunConfig
    from .journal import CallJournal

logger = logging.getLogger(__name__)

# Placeholder vocabularies per step. Case fields stay available everywhere.
INITIAL_PLACEHOLDERS = CASE_PLACEHOLDERS
OPENING_PLACEHOLDERS = CASE_PLACEHOLDERS | {"perspective"}
EXCHANGE_PLACEHOLDERS = CASE_PLACEHOLDERS | {"perspective", "peer_openings"}
UPDATE_PLACEHOLDERS = CASE_PLACEHOLDERS | {"summary", "reliabilities"}

DEFAULT_INITIAL_TEMPLATE = (
    "You are the judge of a legal case and must predict its outcome.\n"
    "The possible labels are: {labels}.\n"
    "Reply with exactly one of the labels and nothing else.\n"
    "Here is the case background:\n{background}"
)

DEFAULT_OPENING_TEMPLATE = (
    "You are a legal expert asked to predict the outcome of a case and to debate it"
    " with other experts.\n"
    "You argue from this perspective: {perspective}.\n"
    "The possible labels are: {labels}.\n"
    "State the label you find most likely and justify it, citing concrete facts"
    " where possible. Keep your answer under 200 words.\n"
    "Here is the case background:\n{background}"
)

DEFAULT_EXCHANGE_TEMPLATE = (
    "Other experts reviewed the same case; their opinions follow.\n"
    "Where they disagree with you, either defend your view or explain why you now"
    " side with them. This exchange will be shown to the judge, so state your final"
    " stance clearly. Keep your answer under 200 words.\n"
    "Their opinions:\n{peer_openings}"
)

DEFAULT_UPDATE_TEMPLATE = (
    "A panel of experts has debated the case. Here is a summary of their"
    " discussion:\n{summary}\n"
    "{reliabilities}\n"
    "Taking the discussion into account, give your final prediction.\n"
    "The possible labels are: {labels}.\n"
    "Reply with exactly one of the labels and nothing else."
)

_SUMMARY_PROMPT_HEADER = (
    "You assist the judge of a legal case. Several experts have debated its likely"
    " outcome.\n"
    "Summarize the debate below concisely and neutrally, noting where the experts"
    " agree and where they disagree.\n"
)

RELIABILITY_HEADER = (
    "Reliability scores for the experts' statements (0 = unreliable, 1 = reliable):"
)


@dataclass(frozen=True)
class DebaterSpec:
    """One debater seat: identity, stance, and optional overrides."""

    id: str
    perspective_tag: str
    backend: Backend | None = None
    opening_template: PromptTemplate | None = None
    exchange_template: PromptTemplate | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("debater id must be non-empty")
        if not self.perspective_tag:
            raise ValueError("debater perspective_tag must be non-empty")


@dataclass
class PredictionState:
    """The running score and every value it has taken, O_0 first."""

    current: float | tuple[float, ...]
    history: list[float | tuple[float, ...]] = field(default_factory=list)


@dataclass
class RoundRecord:
    """One debate round. List slots align with the debater roster; a None
    entry marks a debater whose turn failed. `reliabilities` is None as a
    whole when no reliability scoring ran (single mode)."""

    index: int
    openings: list[str | None]
    exchanges: list[str | None]
    reliabilities: list[float | None] | None
    summary: str | None
    gate: bool
    score: float | tuple[float, ...]


@dataclass(frozen=True)
class CallRecord:
    role_tag: str
    prompt: str
    reply: str


@dataclass
class DebateTranscript:
    case_id: str
    config: dict
    debater_ids: tuple[str, ...]
    o0: float | tuple[float, ...] | None
    rounds: list[RoundRecord]
    final: LabelAssignment | None
    final_positions: dict[str, LabelAssignment | None]
    calls: list[CallRecord]

    def final_statement(self, debater_id: str) -> str | None:
        """The debater's last successful exchange text, if any."""
        index = self.debater_ids.index(debater_id)
        for record in reversed(self.rounds):
            if record.exchanges[index] is not None:
                return record.exchanges[index]
        return None

    def to_json_dict(self, space: LabelSpace) -> dict:
        def _score(value: float | tuple[float, ...] | None) -> object:
            if value is None or isinstance(value, float):
                return value
            return list(value)

        return {
            "case_id": self.case_id,
            "config": self.config,
            "debaters": list(self.debater_ids),
            "o0": _score(self.o0),
            "rounds": [
                {
                    "index": r.index,
                    "openings": r.openings,
                    "exchanges": r.exchanges,
                    "reliabilities": r.reliabilities,
                    "summary": r.summary,
                    "gate": r.gate,
                    "score": _score(r.score),
                }
                for r in self.rounds
            ],
            "final": None
            if self.final is None
            else {
                "indices": self.final.sorted_indices(),
                "labels": space.labels_of(self.final),
            },
            "positions": {
                debater_id: None if assignment is None else assignment.sorted_indices()
                for debater_id, assignment in self.final_positions.items()
            },
            "calls": [
                {"role": c.role_tag, "prompt": c.prompt, "reply": c.reply}
                for c in self.calls
            ],
        }

    def to_json(self, space: LabelSpace) -> str:
        import json

        return json.dumps(self.to_json_dict(space), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json_dict(cls, doc: dict) -> DebateTranscript:
        def _score(value: object) -> float | tuple[float, ...] | None:
            if value is None or isinstance(value, float):
                return value
            if isinstance(value, int):
                return float(value)
            return tuple(float(v) for v in value)  # type: ignore[union-attr]

        rounds = [
            RoundRecord(
                index=r["index"],
                openings=list(r["openings"]),
                exchanges=list(r["exchanges"]),
                reliabilities=None
                if r["reliabilities"] is None
                else list(r["reliabilities"]),
                summary=r["summary"],
                gate=r["gate"],
                score=_score(r["score"]),
            )
            for r in doc["rounds"]
        ]
        final = doc.get("final")
        positions = {
            debater_id: None if indices is None else LabelAssignment(frozenset(indices))
            for debater_id, indices in doc.get("positions", {}).items()
        }
        return cls(
            case_id=doc["case_id"],
            config=doc["config"],
            debater_ids=tuple(doc["debaters"]),
            o0=_score(doc["o0"]),
            rounds=rounds,
            final=None if final is None else LabelAssignment(frozenset(final["indices"])),
            final_positions=positions,
            calls=[
                CallRecord(c["role"], c["prompt"], c["reply"])
                for c in doc.get("calls", [])
            ],
        )


# --------------------------------------------------------------------------
# Prompt builders. Pure functions so fixtures and tests can precompute the
# exact strings a run will send.


def _render_blocks(pairs: Sequence[tuple[str, str]]) -> str:
    return "\n\n".join(f"[{speaker}]\n{text}" for speaker, text in pairs)


def render_reliability_lines(
    debater_ids: Sequence[str], scores: Sequence[float | None]
) -> str:
    lines = [
        f"- {debater_id}: {value:.2f}"
        for debater_id, value in zip(debater_ids, scores)
        if value is not None
    ]
    if not lines:
        return ""
    return RELIABILITY_HEADER + "\n" + "\n".join(lines)


def _case_values(case: CaseRecord, space: LabelSpace) -> dict[str, str | None]:
    return {
        "background": case.background or None,
        "plaintiff_claim": case.plaintiff_claim or None,
        "defendant_statement": case.defendant_statement or None,
        "labels": space.render(),
    }


def build_initial_prompt(
    case: CaseRecord, space: LabelSpace, template: PromptTemplate
) -> str:
    return substitute(template.text, _case_values(case, space))


def build_opening_prompt(
    case: CaseRecord,
    space: LabelSpace,
    debater: DebaterSpec,
    template: PromptTemplate,
    prior_exchanges: Sequence[tuple[str, str]] | None = None,
) -> str:
    values = _case_values(case, space)
    values["perspective"] = debater.perspective_tag
    text = substitute(template.text, values)
    if prior_exchanges:
        text += "\n\nStatements from the previous round:\n" + _render_blocks(
            prior_exchanges
        )
    return text


def build_exchange_prompt(
    case: CaseRecord,
    space: LabelSpace,
    debater: DebaterSpec,
    template: PromptTemplate,
    peer_openings: Sequence[tuple[str, str]],
) -> str:
    values = _case_values(case, space)
    values["perspective"] = debater.perspective_tag
    values["peer_openings"] = _render_blocks(peer_openings)
    return substitute(template.text, values)


def build_summary_prompt(
    debater_ids: Sequence[str],
    openings: Sequence[str | None],
    exchanges: Sequence[str | None],
    scores: Sequence[float | None] | None = None,
) -> str:
    opening_blocks = _render_blocks(
        [(d, o) for d, o in zip(debater_ids, openings) if o is not None]
    )
    exchange_blocks = _render_blocks(
        [(d, e) for d, e in zip(debater_ids, exchanges) if e is not None]
    )
    parts = [
        _SUMMARY_PROMPT_HEADER,
        "Opening statements:\n" + opening_blocks,
        "Exchange statements:\n" + exchange_blocks,
    ]
    if scores is not None:
        lines = render_reliability_lines(debater_ids, scores)
        if lines:
            parts.append(lines)
    return "\n".join(parts)


def build_update_prompt(
    case: CaseRecord,
    space: LabelSpace,
    template: PromptTemplate,
    summary: str,
    reliability_text: str,
) -> str:
    values = _case_values(case, space)
    values["summary"] = summary
    values["reliabilities"] = reliability_text
    return substitute(template.text, values)


# --------------------------------------------------------------------------
# Core operations


def _check_component(value: object, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"{name} must be numeric")
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value


def _check_score(value: object, name: str) -> float | tuple[float, ...]:
    if isinstance(value, (tuple, list)):
        return tuple(_check_component(v, name) for v in value)
    return _check_component(value, name)


def apply_update(
    state: PredictionState,
    gate: bool,
    latest: float | tuple[float, ...] | None,
    smoothing_t: float,
    fresh: float | tuple[float, ...] | None = None,
) -> PredictionState:
    """One recurrence step; returns a new state with the history extended."""
    if not 0.0 <= smoothing_t <= 1.0:
        raise ValueError("smoothing weight must lie in [0, 1]")
    if gate:
        checked = _check_score(latest, "latest")
        previous = state.current
        if isinstance(checked, tuple) != isinstance(previous, tuple):
            raise ValueError("latest and the running score have different shapes")
        if isinstance(checked, tuple):
            if len(checked) != len(previous):
                raise ValueError("latest and the running score have different lengths")
            new = tuple(
                (1.0 - smoothing_t) * p + smoothing_t * l
                for p, l in zip(previous, checked)
            )
        else:
            new = (1.0 - smoothing_t) * previous + smoothing_t * checked
    else:
        new = _check_score(fresh, "fresh")
    return PredictionState(new, state.history + [new])


def decision(
    score: float | tuple[float, ...],
    space: LabelSpace,
    multi_label_cutoff: float = 0.5,
) -> LabelAssignment:
    """Map a running score to a label assignment.

    Binary: label index 0 wins iff score >= 0.5 (a dead tie goes to index 0
    and is logged). Multi-label: every label at or above the cutoff; when
    none clears it, the single best-scoring label.
    """
    if space.is_binary:
        if isinstance(score, tuple):
            raise ValueError("a binary task carries a scalar score")
        if score == 0.5:
            logger.info("score ties at 0.5; picking label index 0")
        return space.single(0 if score >= 0.5 else 1)
    if not isinstance(score, tuple):
        raise ValueError("a multi-label task carries a score vector")
    if len(score) != len(space.labels):
        raise ValueError("score vector length does not match the label space")
    chosen = {i for i, value in enumerate(score) if value >= multi_label_cutoff}
    if not chosen:
        best = max(range(len(score)), key=lambda i: (score[i], -i))
        logger.info("no label clears the cutoff; falling back to the best one")
        chosen = {best}
    return space.subset(chosen)


def _parse_prediction(reply: str, space: LabelSpace) -> float | tuple[float, ...]:
    if space.is_binary:
        return parse_probability(reply, space)
    assignment = parse_label(reply, space)
    return tuple(
        1.0 if i in assignment.indices else 0.0 for i in range(len(space.labels))
    )


class _CallSink:
    """Runs completions, journaling them and keeping the prompt/reply log."""

    def __init__(
        self, journal: CallJournal | None, calls: list[CallRecord] | None
    ) -> None:
        self.journal = journal
        self.calls = calls if calls is not None else []

    def __call__(self, backend: Backend, conversation: Conversation, role: str) -> str:
        text = complete(backend, conversation, journal=self.journal, role_tag=role)
        self.calls.append(CallRecord(role, conversation.last_user_text(), text))
        return text


_BACKEND_ERRORS = (TransportError, BackendRefusal, ScriptMiss)


def initial_prediction(
    case: CaseRecord,
    judge: Backend,
    config: RunConfig,
    *,
    journal: CallJournal | None = None,
    calls: list[CallRecord] | None = None,
) -> tuple[PredictionState, Conversation]:
    """Query the judge on the bare case. The conversation is returned so the
    later feedback steps can continue it. A parse failure here aborts."""
    sink = _CallSink(journal, calls)
    prompt = build_initial_prompt(case, config.space, config.templates.initial)
    conversation = Conversation.single_user(prompt)
    reply = sink(judge, conversation, "judge.initial")
    initial = _parse_prediction(reply, config.space)
    return (
        PredictionState(initial, [initial]),
        conversation.add(ROLE_ASSISTANT, reply),
    )


def debate_round(
    case: CaseRecord,
    config: RunConfig,
    *,
    round_index: int = 1,
    prior_exchanges: Sequence[tuple[str, str]] | None = None,
    journal: CallJournal | None = None,
    calls: list[CallRecord] | None = None,
    _sink: _CallSink | None = None,
) -> tuple[list[str | None], list[str | None]]:
    """One debate round: openings from the bare case, then exchanges where
    each debater sees exactly the other debaters' openings, verbatim.

    A backend failure marks that debater's turn as failed (None slots); the
    round itself fails unless at least two debaters complete it.
    """
    sink = _sink if _sink is not None else _CallSink(journal, calls)
    space = config.space
    debaters = config.debaters

    opening_prompts: list[str] = []
    openings: list[str | None] = []
    for debater in debaters:
        template = debater.opening_template or config.templates.opening
        prompt = build_opening_prompt(
            case, space, debater, template, prior_exchanges=prior_exchanges
        )
        opening_prompts.append(prompt)
        backend = debater.backend or config.judge
        try:
            openings.append(
                sink(backend, Conversation.single_user(prompt), f"debater.{debater.id}.opening")
            )
        except _BACKEND_ERRORS as err:
            logger.warning("debater %s opening failed: %s", debater.id, err)
            openings.append(None)

    exchanges: list[str | None] = []
    for index, debater in enumerate(debaters):
        if openings[index] is None:
            exchanges.append(None)
            continue
        peers = [
            (debaters[j].id, openings[j])
            for j in range(len(debaters))
            if j != index and openings[j] is not None
        ]
        if not peers:
            logger.warning("debater %s has no peers to exchange with", debater.id)
            exchanges.append(None)
            continue
        template = debater.exchange_template or config.templates.exchange
        prompt = build_exchange_prompt(case, space, debater, template, peers)
        conversation = (
            Conversation.single_user(opening_prompts[index])
            .add(ROLE_ASSISTANT, openings[index])
            .add(ROLE_USER, prompt)
        )
        backend = debater.backend or config.judge
        try:
            exchanges.append(
                sink(backend, conversation, f"debater.{debater.id}.exchange")
            )
        except _BACKEND_ERRORS as err:
            logger.warning("debater %s exchange failed: %s", debater.id, err)
            exchanges.append(None)

    completed = sum(1 for exchange in exchanges if exchange is not None)
    if completed < 2:
        raise RoundFailed(
            round_index, f"only {completed} debater(s) completed the round"
        )
    return openings, exchanges


def verify_round(
    openings: Sequence[str | None],
    exchanges: Sequence[str | None],
    scores: Sequence[float | None] | None,
    judge_backend: Backend,
    case: CaseRecord | None = None,
    *,
    debater_ids: Sequence[str],
    journal: CallJournal | None = None,
    calls: list[CallRecord] | None = None,
    _sink: _CallSink | None = None,
) -> str:
    """Ask the judge backend for a debate summary. The prompt carries the
    debate content plus any reliability scores, formatted to 2 decimals.
    The summary is built from the debate alone; `case` is accepted for
    signature symmetry but the case text is already in the judge's context.
    """
    del case
    sink = _sink if _sink is not None else _CallSink(journal, calls)
    prompt = build_summary_prompt(debater_ids, openings, exchanges, scores)
    return sink(judge_backend, Conversation.single_user(prompt), "judge.summary")


def _validate_run_inputs(config: RunConfig) -> None:
    if config.rounds < 1:
        raise ConfigError("rounds", "must be >= 1")
    if len(config.debaters) < 2:
        raise ConfigError("debaters", "a debate needs at least 2 debaters")
    ids = [debater.id for debater in config.debaters]
    if len(set(ids)) != len(ids):
        raise ConfigError("debaters", "debater ids must be unique")
    if not 0.0 <= config.smoothing_T <= 1.0:
        raise ConfigError("smoothing_T", "must lie in [0, 1]")


def run_case(
    case: CaseRecord,
    config: RunConfig,
    model: reliability.ReliabilityModel | None = None,
    *,
    scorer: Callable[[str, str, str], float] | None = None,
    summarizer_backend: Backend | None = None,
    journal: CallJournal | None = None,
) -> DebateTranscript:
    """Run the full pipeline on one case and return its transcript.

    With neither `model` nor `scorer` the run is in single mode: no
    reliability scores are recorded and the gate is always true. `scorer`
    overrides `model`; it is called as scorer(debater_id, background,
    opinion). The summarizer defaults to the judge backend.
    """
    _validate_run_inputs(config)
    space = config.space
    judge = config.judge
    summarizer = summarizer_backend if summarizer_backend is not None else judge

    single_mode = model is None and scorer is None
    if scorer is None and model is not None:
        def scorer(debater_id: str, background: str, opinion: str) -> float:
            del debater_id
            return reliability.score(model, background, opinion)

    debater_ids = tuple(debater.id for debater in config.debaters)
    calls: list[CallRecord] = []
    rounds: list[RoundRecord] = []
    final_positions: dict[str, LabelAssignment | None] = {}
    o0: float | tuple[float, ...] | None = None

    def partial_transcript() -> DebateTranscript:
        return DebateTranscript(
            case_id=case.id,
            config=config.snapshot(),
            debater_ids=debater_ids,
            o0=o0,
            rounds=rounds,
            final=None,
            final_positions=final_positions,
            calls=calls,
        )

    sink = _CallSink(journal, calls)
    try:
        state, conversation = initial_prediction(
            case, judge, config, journal=journal, calls=calls
        )
        o0 = state.current

        last_statements: dict[str, str] = {}
        prior_exchanges: list[tuple[str, str]] | None = None
        initial_prompt = build_initial_prompt(case, space, config.templates.initial)

        for round_index in range(1, config.rounds + 1):
            openings, exchanges = debate_round(
                case,
                config,
                round_index=round_index,
                prior_exchanges=prior_exchanges,
                _sink=sink,
            )
            for debater_id, exchange in zip(debater_ids, exchanges):
                if exchange is not None:
                    last_statements[debater_id] = exchange

            reliabilities: list[float | None] | None = None
            if not single_mode:
                reliabilities = []
                for index, debater_id in enumerate(debater_ids):
                    if exchanges[index] is None:
                        reliabilities.append(None)
                        continue
                    opinion = exchanges[index]
                    if config.reliability_scope == "turn-history" and openings[index]:
                        opinion = openings[index] + "\n" + exchanges[index]
                    reliabilities.append(scorer(debater_id, case.background, opinion))

            try:
                summary = verify_round(
                    openings,
                    exchanges,
                    reliabilities,
                    summarizer,
                    case,
                    debater_ids=debater_ids,
                    _sink=sink,
                )
            except _BACKEND_ERRORS as err:
                logger.warning(
                    "summary failed in round %d; treating the gate as false: %s",
                    round_index,
                    err,
                )
                summary = None

            if summary is None:
                gate = False
            elif single_mode:
                gate = True
            else:
                usable = [v for v in reliabilities if v is not None]
                gate = reliability.threshold_gate(usable, config.gate)

            reliability_text = (
                ""
                if reliabilities is None
                else render_reliability_lines(debater_ids, reliabilities)
            )
            if gate:
                update_prompt = build_update_prompt(
                    case, space, config.templates.summary_update, summary, reliability_text
                )
                conversation = conversation.add(ROLE_USER, update_prompt)
                reply = sink(judge, conversation, "judge.update")
                conversation = conversation.add(ROLE_ASSISTANT, reply)
                latest = _parse_prediction(reply, space)
                state = apply_update(state, True, latest, config.smoothing_T)
            else:
                fresh_reply = sink(
                    judge, Conversation.single_user(initial_prompt), "judge.fresh"
                )
                fresh = _parse_prediction(fresh_reply, space)
                state = apply_update(state, False, None, config.smoothing_T, fresh)
                if config.append_debate_on_gate_false and summary is not None:
                    # The debate still reaches the judge's context, but the
                    # reply is deliberately not used for the update.
                    update_prompt = build_update_prompt(
                        case,
                        space,
                        config.templates.summary_update,
                        summary,
                        reliability_text,
                    )
                    conversation = conversation.add(ROLE_USER, update_prompt)
                    reply = sink(judge, conversation, "judge.update")
                    conversation = conversation.add(ROLE_ASSISTANT, reply)

            rounds.append(
                RoundRecord(
                    index=round_index,
                    openings=openings,
                    exchanges=exchanges,
                    reliabilities=reliabilities,
                    summary=summary,
                    gate=gate,
                    score=state.current,
                )
            )
            if config.cumulative_mode:
                prior_exchanges = [
                    (debater_id, exchange)
                    for debater_id, exchange in zip(debater_ids, exchanges)
                    if exchange is not None
                ]

        for debater_id in debater_ids:
            statement = last_statements.get(debater_id)
            if statement is None:
                final_positions[debater_id] = None
                continue
            try:
                final_positions[debater_id] = parse_label(statement, space)
            except UnparseableReply:
                logger.warning("debater %s stated no parseable position", debater_id)
                final_positions[debater_id] = None

        final = decision(state.current, space, config.multi_label_cutoff)
        transcript = partial_transcript()
        transcript.final = final
        return transcript
    except LexDebateError as err:
        raise CaseRunFailed(case.id, partial_transcript()) from err
