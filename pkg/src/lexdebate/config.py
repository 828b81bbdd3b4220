"""Run configuration: one JSON document, validated eagerly.

Recognized keys (all optional unless noted):

    task                "trial" (binary) | "article" (multi-label)
    labels              ordered label strings; required for "article"
    rounds              debate rounds, >= 1
    smoothing_T         feedback weight in [0, 1]
    gate                {"mode": "any"|"all"|"mean", "cutoff": float}
    debaters            [{"id", "perspective_tag", "backend"?,
                          "opening_template"?, "exchange_template"?}, ...]
    judge               backend spec (required)
    templates           {"initial", "opening", "exchange", "summary_update"}
    multi_label_cutoff  decision cutoff for multi-label tasks
    cumulative_mode     carry prior-round exchanges into the next round
    reliability_scope   "latest" | "turn-history" text fed to the scorer
    append_debate_on_gate_false
                        still show the judge the debate on gate-false rounds
    seed                integer seed recorded in snapshots and used by training
    dataset_path, dataset_format, label_filter, max_case_chars
    assistant_model_path
    output_dir, parallel, strict, max_failure_rate

Backend specs: {"kind": "scripted", "script" | "script_path", "strict"?,
"default"?} or {"kind": "http-chat", "endpoint_url", "model", "api_key_env"?,
"temperature"?, "max_tokens"?, "timeout_ms"?, "max_retries"?}. Relative
script paths resolve against the config file's directory. Credentials are
named by environment variable, never stored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from .backends import Backend, HttpChatBackend, ScriptedBackend
from .cases import (
    CAIL18_JSONL,
    CASELAW_JSONL,
    DATASET_FORMATS,
    LabelSpace,
    PromptTemplate,
    TASK_ARTICLE,
    TASK_TRIAL,
    TASKS,
    space_for_task,
)
from .engine import (
    DEFAULT_EXCHANGE_TEMPLATE,
    DEFAULT_INITIAL_TEMPLATE,
    DEFAULT_OPENING_TEMPLATE,
    DEFAULT_UPDATE_TEMPLATE,
    EXCHANGE_PLACEHOLDERS,
    INITIAL_PLACEHOLDERS,
    OPENING_PLACEHOLDERS,
    UPDATE_PLACEHOLDERS,
    DebaterSpec,
)
from .errors import ConfigError
from .reliability import GatePolicy

DEFAULT_TRIAL_LABELS = ("Plaintiff wins", "Defendant wins")

_TOP_LEVEL_KEYS = {
    "task",
    "labels",
    "rounds",
    "smoothing_T",
    "gate",
    "debaters",
    "judge",
    "templates",
    "multi_label_cutoff",
    "cumulative_mode",
    "reliability_scope",
    "append_debate_on_gate_false",
    "seed",
    "dataset_path",
    "dataset_format",
    "label_filter",
    "max_case_chars",
    "assistant_model_path",
    "output_dir",
    "parallel",
    "strict",
    "max_failure_rate",
}

_TEMPLATE_KEYS = {"initial", "opening", "exchange", "summary_update"}
_DEBATER_KEYS = {"id", "perspective_tag", "backend", "opening_template", "exchange_template"}
_SCRIPTED_KEYS = {"kind", "script", "script_path", "strict", "default"}
_HTTP_KEYS = {
    "kind",
    "endpoint_url",
    "model",
    "api_key_env",
    "temperature",
    "max_tokens",
    "timeout_ms",
    "max_retries",
}


@dataclass(frozen=True)
class StepTemplates:
    initial: PromptTemplate
    opening: PromptTemplate
    exchange: PromptTemplate
    summary_update: PromptTemplate


@dataclass(frozen=True)
class RunConfig:
    """A fully resolved run configuration with live backend objects."""

    task: str
    space: LabelSpace
    rounds: int
    smoothing_T: float
    gate: GatePolicy
    debaters: tuple[DebaterSpec, ...]
    judge: Backend
    templates: StepTemplates
    multi_label_cutoff: float = 0.5
    cumulative_mode: bool = False
    reliability_scope: str = "latest"
    append_debate_on_gate_false: bool = False
    seed: int = 0
    dataset_path: str | None = None
    dataset_format: str = CASELAW_JSONL
    label_filter: tuple[str, ...] = ()
    max_case_chars: int | None = None
    assistant_model_path: str | None = None
    output_dir: str = "out"
    parallel: int = 1
    strict: bool = False
    max_failure_rate: float = 0.2

    def snapshot(self) -> dict:
        """The semantic knobs of this run, as a deterministic JSON-ready dict.

        Backends are infrastructure and deliberately stay out, so a replay
        against a journal-derived backend produces an identical snapshot.
        """
        return {
            "task": self.task,
            "labels": list(self.space.labels),
            "rounds": self.rounds,
            "smoothing_T": self.smoothing_T,
            "gate": {"mode": self.gate.mode, "cutoff": self.gate.cutoff},
            "debaters": [
                {"id": debater.id, "perspective_tag": debater.perspective_tag}
                for debater in self.debaters
            ],
            "templates": {
                "initial": self.templates.initial.text,
                "opening": self.templates.opening.text,
                "exchange": self.templates.exchange.text,
                "summary_update": self.templates.summary_update.text,
            },
            "multi_label_cutoff": self.multi_label_cutoff,
            "cumulative_mode": self.cumulative_mode,
            "reliability_scope": self.reliability_scope,
            "append_debate_on_gate_false": self.append_debate_on_gate_false,
            "seed": self.seed,
        }

    def with_all_backends(self, backend: Backend) -> RunConfig:
        """Every role served by one backend; used for journal replays."""
        return replace(
            self,
            judge=backend,
            debaters=tuple(replace(d, backend=None) for d in self.debaters),
        )


def default_templates() -> StepTemplates:
    return StepTemplates(
        initial=PromptTemplate(DEFAULT_INITIAL_TEMPLATE, INITIAL_PLACEHOLDERS),
        opening=PromptTemplate(DEFAULT_OPENING_TEMPLATE, OPENING_PLACEHOLDERS),
        exchange=PromptTemplate(DEFAULT_EXCHANGE_TEMPLATE, EXCHANGE_PLACEHOLDERS),
        summary_update=PromptTemplate(DEFAULT_UPDATE_TEMPLATE, UPDATE_PLACEHOLDERS),
    )


def default_debaters(count: int = 3) -> tuple[DebaterSpec, ...]:
    return tuple(
        DebaterSpec(id=f"expert-{i}", perspective_tag=f"independent expert {i}")
        for i in range(1, count + 1)
    )


def _fail(path: str, message: str) -> None:
    raise ConfigError(path, message)


def _expect_type(value: Any, types: type | tuple[type, ...], path: str, what: str) -> Any:
    if isinstance(value, bool) and bool not in (
        types if isinstance(types, tuple) else (types,)
    ):
        _fail(path, f"must be {what}")
    if not isinstance(value, types):
        _fail(path, f"must be {what}")
    return value


def _check_keys(data: Mapping[str, Any], allowed: set[str], path: str) -> None:
    unknown = set(data) - allowed
    if unknown:
        key = sorted(unknown)[0]
        _fail(f"{path}.{key}" if path else key, "unknown key")


def build_backend(spec: Any, base_dir: Path, path: str) -> Backend:
    if isinstance(spec, (ScriptedBackend, HttpChatBackend)):
        return spec
    if not isinstance(spec, dict):
        _fail(path, "must be a backend object")
    kind = spec.get("kind")
    if kind == "scripted":
        _check_keys(spec, _SCRIPTED_KEYS, path)
        default = spec.get("default")
        if default is not None and not isinstance(default, str):
            _fail(f"{path}.default", "must be a string")
        strict = spec.get("strict", default is None)
        if not isinstance(strict, bool):
            _fail(f"{path}.strict", "must be a boolean")
        if strict and default is not None:
            _fail(f"{path}.default", "a strict scripted backend takes no default reply")
        if not strict and default is None:
            _fail(f"{path}.default", "a lenient scripted backend needs a default reply")
        if ("script" in spec) == ("script_path" in spec):
            _fail(path, "provide exactly one of script or script_path")
        if "script" in spec:
            script = spec["script"]
            if not isinstance(script, dict):
                _fail(f"{path}.script", "must be an object of prompt -> reply")
            try:
                return ScriptedBackend(script, default=default)
            except ValueError as err:
                _fail(f"{path}.script", str(err))
        script_path = spec["script_path"]
        if not isinstance(script_path, str):
            _fail(f"{path}.script_path", "must be a string")
        resolved = (base_dir / script_path).resolve()
        if not resolved.is_file():
            _fail(f"{path}.script_path", f"no such file: {resolved}")
        try:
            return ScriptedBackend.from_file(resolved, default=default)
        except (ValueError, json.JSONDecodeError) as err:
            _fail(f"{path}.script_path", f"unreadable script: {err}")
    if kind == "http-chat":
        _check_keys(spec, _HTTP_KEYS, path)
        endpoint = spec.get("endpoint_url")
        if not isinstance(endpoint, str) or not endpoint:
            _fail(f"{path}.endpoint_url", "required non-empty string")
        model = spec.get("model")
        if not isinstance(model, str) or not model:
            _fail(f"{path}.model", "required non-empty string")
        api_key_env = spec.get("api_key_env")
        if api_key_env is not None and not isinstance(api_key_env, str):
            _fail(f"{path}.api_key_env", "must be a string")
        temperature = spec.get("temperature", 0.0)
        if not isinstance(temperature, (int, float)) or isinstance(temperature, bool):
            _fail(f"{path}.temperature", "must be a number")
        max_tokens = _expect_type(spec.get("max_tokens", 1024), int, f"{path}.max_tokens", "an integer")
        timeout_ms = _expect_type(spec.get("timeout_ms", 30_000), int, f"{path}.timeout_ms", "an integer")
        if timeout_ms <= 0:
            _fail(f"{path}.timeout_ms", "must be positive")
        max_retries = _expect_type(spec.get("max_retries", 2), int, f"{path}.max_retries", "an integer")
        if max_retries < 0:
            _fail(f"{path}.max_retries", "must be >= 0")
        return HttpChatBackend(
            endpoint,
            model,
            api_key_env=api_key_env,
            temperature=float(temperature),
            max_tokens=max_tokens,
            timeout_ms=timeout_ms,
            max_retries=max_retries,
        )
    _fail(f"{path}.kind", "must be 'scripted' or 'http-chat'")
    raise AssertionError("unreachable")


def _build_template(
    text: Any, allowed: frozenset[str], path: str, required: tuple[str, ...] = ()
) -> PromptTemplate:
    if not isinstance(text, str) or not text.strip():
        _fail(path, "must be a non-empty string")
    try:
        template = PromptTemplate(text, allowed)
    except ValueError as err:
        _fail(path, str(err))
    for name in required:
        if name not in template.placeholders:
            _fail(path, f"must reference {{{name}}}")
    return template


def _unit_interval(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, "must be a number")
    if not 0.0 <= value <= 1.0:
        _fail(path, "must lie in [0, 1]")
    return float(value)


def resolve_config(data: Mapping[str, Any], base_dir: str | Path = ".") -> RunConfig:
    """Validate a raw config mapping and build the live RunConfig.

    Every diagnostic names the offending field path, e.g. "debaters[1].id".
    """
    base = Path(base_dir)
    if not isinstance(data, Mapping):
        _fail("<root>", "config must be a JSON object")
    _check_keys(data, _TOP_LEVEL_KEYS, "")

    task = data.get("task", TASK_TRIAL)
    if task not in TASKS:
        _fail("task", f"must be one of {sorted(TASKS)}")

    labels = data.get("labels")
    if labels is None:
        if task == TASK_ARTICLE:
            _fail("labels", "required for the article task")
        labels = list(DEFAULT_TRIAL_LABELS)
    if not isinstance(labels, list) or not all(isinstance(l, str) for l in labels):
        _fail("labels", "must be a list of strings")
    try:
        space = space_for_task(task, labels)
    except ValueError as err:
        _fail("labels", str(err))

    rounds = data.get("rounds", 2)
    if not isinstance(rounds, int) or isinstance(rounds, bool) or rounds < 1:
        _fail("rounds", "must be an integer >= 1")

    smoothing = _unit_interval(data.get("smoothing_T", 0.5), "smoothing_T")

    gate_data = data.get("gate", {})
    if not isinstance(gate_data, Mapping):
        _fail("gate", "must be an object")
    _check_keys(gate_data, {"mode", "cutoff"}, "gate")
    gate_mode = gate_data.get("mode", "mean")
    gate_cutoff = _unit_interval(gate_data.get("cutoff", 0.5), "gate.cutoff")
    try:
        gate = GatePolicy(gate_mode, gate_cutoff)
    except ValueError as err:
        _fail("gate.mode", str(err))

    if "judge" not in data:
        _fail("judge", "required")
    judge = build_backend(data["judge"], base, "judge")

    templates_data = data.get("templates", {})
    if not isinstance(templates_data, Mapping):
        _fail("templates", "must be an object")
    _check_keys(templates_data, _TEMPLATE_KEYS, "templates")
    defaults = default_templates()
    templates = StepTemplates(
        initial=_build_template(
            templates_data.get("initial", defaults.initial.text),
            INITIAL_PLACEHOLDERS,
            "templates.initial",
        ),
        opening=_build_template(
            templates_data.get("opening", defaults.opening.text),
            OPENING_PLACEHOLDERS,
            "templates.opening",
        ),
        exchange=_build_template(
            templates_data.get("exchange", defaults.exchange.text),
            EXCHANGE_PLACEHOLDERS,
            "templates.exchange",
            required=("peer_openings",),
        ),
        summary_update=_build_template(
            templates_data.get("summary_update", defaults.summary_update.text),
            UPDATE_PLACEHOLDERS,
            "templates.summary_update",
            required=("summary", "reliabilities"),
        ),
    )

    debaters_data = data.get("debaters")
    if debaters_data is None:
        debaters = default_debaters()
    else:
        if not isinstance(debaters_data, list):
            _fail("debaters", "must be a list")
        if len(debaters_data) < 2:
            _fail("debaters", "a debate needs at least 2 debaters")
        debaters_list = []
        seen_ids: set[str] = set()
        for i, entry in enumerate(debaters_data):
            prefix = f"debaters[{i}]"
            if not isinstance(entry, Mapping):
                _fail(prefix, "must be an object")
            _check_keys(entry, _DEBATER_KEYS, prefix)
            debater_id = entry.get("id")
            if not isinstance(debater_id, str) or not debater_id:
                _fail(f"{prefix}.id", "required non-empty string")
            if debater_id in seen_ids:
                _fail(f"{prefix}.id", f"duplicate debater id {debater_id!r}")
            seen_ids.add(debater_id)
            perspective = entry.get("perspective_tag")
            if not isinstance(perspective, str) or not perspective:
                _fail(f"{prefix}.perspective_tag", "required non-empty string")
            backend = None
            if "backend" in entry:
                backend = build_backend(entry["backend"], base, f"{prefix}.backend")
            opening_template = None
            if "opening_template" in entry:
                opening_template = _build_template(
                    entry["opening_template"],
                    OPENING_PLACEHOLDERS,
                    f"{prefix}.opening_template",
                )
            exchange_template = None
            if "exchange_template" in entry:
                exchange_template = _build_template(
                    entry["exchange_template"],
                    EXCHANGE_PLACEHOLDERS,
                    f"{prefix}.exchange_template",
                    required=("peer_openings",),
                )
            debaters_list.append(
                DebaterSpec(
                    id=debater_id,
                    perspective_tag=perspective,
                    backend=backend,
                    opening_template=opening_template,
                    exchange_template=exchange_template,
                )
            )
        debaters = tuple(debaters_list)

    multi_label_cutoff = _unit_interval(
        data.get("multi_label_cutoff", 0.5), "multi_label_cutoff"
    )

    cumulative = data.get("cumulative_mode", False)
    if not isinstance(cumulative, bool):
        _fail("cumulative_mode", "must be a boolean")
    append_on_false = data.get("append_debate_on_gate_false", False)
    if not isinstance(append_on_false, bool):
        _fail("append_debate_on_gate_false", "must be a boolean")

    scope = data.get("reliability_scope", "latest")
    if scope not in ("latest", "turn-history"):
        _fail("reliability_scope", "must be 'latest' or 'turn-history'")

    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        _fail("seed", "must be an integer")

    dataset_path = data.get("dataset_path")
    if dataset_path is not None:
        if not isinstance(dataset_path, str):
            _fail("dataset_path", "must be a string")
        dataset_path = str((base / dataset_path).resolve())

    dataset_format = data.get(
        "dataset_format", CAIL18_JSONL if task == TASK_ARTICLE else CASELAW_JSONL
    )
    if dataset_format not in DATASET_FORMATS:
        _fail("dataset_format", f"must be one of {sorted(DATASET_FORMATS)}")

    label_filter = data.get("label_filter", [])
    if not isinstance(label_filter, list) or not all(
        isinstance(l, str) for l in label_filter
    ):
        _fail("label_filter", "must be a list of label strings")
    for name in label_filter:
        if name not in space.labels:
            _fail("label_filter", f"label {name!r} is not in the label space")

    max_chars = data.get("max_case_chars")
    if max_chars is not None and (
        not isinstance(max_chars, int) or isinstance(max_chars, bool) or max_chars < 1
    ):
        _fail("max_case_chars", "must be a positive integer")

    model_path = data.get("assistant_model_path")
    if model_path is not None:
        if not isinstance(model_path, str):
            _fail("assistant_model_path", "must be a string")
        model_path = str((base / model_path).resolve())

    output_dir = data.get("output_dir", "out")
    if not isinstance(output_dir, str) or not output_dir:
        _fail("output_dir", "must be a non-empty string")

    parallel = data.get("parallel", 1)
    if not isinstance(parallel, int) or isinstance(parallel, bool) or parallel < 1:
        _fail("parallel", "must be an integer >= 1")

    strict = data.get("strict", False)
    if not isinstance(strict, bool):
        _fail("strict", "must be a boolean")

    max_failure_rate = _unit_interval(
        data.get("max_failure_rate", 0.2), "max_failure_rate"
    )

    return RunConfig(
        task=task,
        space=space,
        rounds=rounds,
        smoothing_T=smoothing,
        gate=gate,
        debaters=debaters,
        judge=judge,
        templates=templates,
        multi_label_cutoff=multi_label_cutoff,
        cumulative_mode=cumulative,
        reliability_scope=scope,
        append_debate_on_gate_false=append_on_false,
        seed=seed,
        dataset_path=dataset_path,
        dataset_format=dataset_format,
        label_filter=tuple(label_filter),
        max_case_chars=max_chars,
        assistant_model_path=model_path,
        output_dir=output_dir,
        parallel=parallel,
        strict=strict,
        max_failure_rate=max_failure_rate,
    )


def load_config(
    path: str | Path,
    *,
    out: str | None = None,
    seed: int | None = None,
    strict: bool | None = None,
    parallel: int | None = None,
) -> RunConfig:
    """Read and resolve a config file, applying command-line overrides."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config", f"no such file: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ConfigError("config", f"invalid JSON: {err}") from err
    config = resolve_config(data, path.parent)
    overrides: dict[str, Any] = {}
    if out is not None:
        overrides["output_dir"] = out
    if seed is not None:
        overrides["seed"] = seed
    if strict:
        overrides["strict"] = True
    if parallel is not None:
        if parallel < 1:
            raise ConfigError("parallel", "must be an integer >= 1")
        overrides["parallel"] = parallel
    return replace(config, **overrides) if overrides else config
