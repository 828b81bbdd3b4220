"""Chat backends and reply parsing.

Two backend kinds exist: `http-chat` speaks the common chat-completions wire
shape over HTTP, and `scripted` answers from a fixed prompt->reply table so
runs are reproducible and test-able without any network. Both are driven
through :func:`complete`, which journals every call when given a journal.
"""

from __future__ import annotations

import json
import logging
import os
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Mapping, Protocol

import httpx

from .cases import LabelAssignment, LabelSpace
from .errors import BackendRefusal, ScriptMiss, TransportError, UnparseableReply

if TYPE_CHECKING:
    from .journal import CallJournal

logger = logging.getLogger(__name__)

ROLE_SYSTEM = "system"
ROLE_USER = "user"
ROLE_ASSISTANT = "assistant"
_ROLES = (ROLE_SYSTEM, ROLE_USER, ROLE_ASSISTANT)


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in _ROLES:
            raise ValueError(f"unknown chat role {self.role!r}")
        if self.role != ROLE_SYSTEM and not self.content:
            raise ValueError(f"{self.role} message content must be non-empty")


@dataclass(frozen=True)
class Conversation:
    """An immutable message sequence; `add` returns a grown copy."""

    messages: tuple[ChatMessage, ...] = ()

    @classmethod
    def single_user(cls, text: str) -> Conversation:
        return cls((ChatMessage(ROLE_USER, text),))

    def add(self, role: str, content: str) -> Conversation:
        return Conversation(self.messages + (ChatMessage(role, content),))

    @property
    def last(self) -> ChatMessage | None:
        return self.messages[-1] if self.messages else None

    def last_user_text(self) -> str:
        last = self.last
        if last is None or last.role != ROLE_USER:
            raise ValueError("conversation must end with a user message")
        return last.content


# --------------------------------------------------------------------------
# Prompt keys

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(text: str) -> str:
    """64-bit FNV-1a over the UTF-8 bytes, as 16 lowercase hex digits."""
    value = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        value ^= byte
        value = (value * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return f"{value:016x}"


def prompt_key(text: str) -> str:
    return "h:" + fnv1a64(text)


# --------------------------------------------------------------------------
# Backends

@dataclass(frozen=True)
class Completion:
    text: str
    attempts: int = 1


class Backend(Protocol):
    def complete_conversation(self, conversation: Conversation) -> Completion:
        ...


class ScriptedBackend:
    """Answers from a prompt->reply map keyed on the last user message.

    Keys are either the exact message text or "h:" plus its 64-bit FNV-1a
    hash in hex. Without a default reply the backend is strict and raises
    ScriptMiss on unknown prompts; with one it is lenient.
    """

    def __init__(self, script: Mapping[str, str], *, default: str | None = None) -> None:
        for key, reply in script.items():
            if not isinstance(key, str) or not isinstance(reply, str):
                raise ValueError("script entries must map str -> str")
        self._script = dict(script)
        self._default = default

    @property
    def strict(self) -> bool:
        return self._default is None

    @classmethod
    def from_file(cls, path: str | Path, *, default: str | None = None) -> ScriptedBackend:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise ValueError("a script file must hold a JSON object")
        return cls(raw, default=default)

    def complete_conversation(self, conversation: Conversation) -> Completion:
        prompt = conversation.last_user_text()
        reply = self._script.get(prompt)
        if reply is None:
            reply = self._script.get(prompt_key(prompt))
        if reply is None:
            reply = self._default
        if reply is None:
            preview = prompt if len(prompt) <= 80 else prompt[:77] + "..."
            raise ScriptMiss(preview)
        return Completion(reply, attempts=1)


_RETRYABLE_STATUSES = frozenset({408, 409, 429}) | frozenset(range(500, 600))


class HttpChatBackend:
    """Minimal chat-completions client with bounded retries.

    Credentials are read from the environment variable named by
    `api_key_env` at call time; nothing is read implicitly.
    """

    def __init__(
        self,
        endpoint_url: str,
        model: str,
        *,
        api_key_env: str | None = None,
        temperature: float = 0.0,
        max_tokens: int = 1024,
        timeout_ms: int = 30_000,
        max_retries: int = 2,
        retry_backoff_s: float = 0.05,
    ) -> None:
        if not endpoint_url:
            raise ValueError("endpoint_url must be non-empty")
        if max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        self.endpoint_url = endpoint_url
        self.model = model
        self.api_key_env = api_key_env
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.timeout_ms = timeout_ms
        self.max_retries = max_retries
        self.retry_backoff_s = retry_backoff_s

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env)
            if not key:
                raise BackendRefusal(
                    f"credential environment variable {self.api_key_env!r} is not set"
                )
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _payload(self, conversation: Conversation) -> dict:
        return {
            "model": self.model,
            "messages": [
                {"role": m.role, "content": m.content} for m in conversation.messages
            ],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }

    def complete_conversation(self, conversation: Conversation) -> Completion:
        payload = self._payload(conversation)
        headers = self._headers()
        timeout = self.timeout_ms / 1000.0
        attempts = 0
        last_error = "unknown transport failure"
        while attempts <= self.max_retries:
            attempts += 1
            try:
                response = httpx.post(
                    self.endpoint_url, json=payload, headers=headers, timeout=timeout
                )
            except httpx.HTTPError as err:
                last_error = f"transport failure: {err}"
                logger.warning("backend attempt %d failed: %s", attempts, err)
            else:
                if response.status_code == 200:
                    return Completion(self._extract_text(response), attempts=attempts)
                if response.status_code in _RETRYABLE_STATUSES:
                    last_error = f"retryable HTTP {response.status_code}"
                    logger.warning("backend attempt %d got HTTP %d", attempts, response.status_code)
                else:
                    raise BackendRefusal(
                        f"HTTP {response.status_code}: {response.text[:200]}",
                        status=response.status_code,
                    )
            if attempts <= self.max_retries:
                time.sleep(self.retry_backoff_s * attempts)
        raise TransportError(last_error, attempts=attempts)

    @staticmethod
    def _extract_text(response: httpx.Response) -> str:
        try:
            data = response.json()
            text = data["choices"][0]["message"]["content"]
        except (ValueError, LookupError, TypeError) as err:
            raise BackendRefusal(f"malformed completion response: {err}") from err
        if not isinstance(text, str):
            raise BackendRefusal("completion content is not a string")
        return text


def complete(
    backend: Backend,
    conversation: Conversation,
    *,
    journal: CallJournal | None = None,
    role_tag: str = "",
) -> str:
    """Run one completion. Never mutates `conversation`; journals the call."""
    if not conversation.messages:
        raise ValueError("conversation must be non-empty")
    prompt = conversation.last_user_text()  # also enforces the user-last rule
    key_hash = fnv1a64(prompt)
    started = time.perf_counter()
    try:
        result = backend.complete_conversation(conversation)
    except (TransportError, BackendRefusal, ScriptMiss) as err:
        if journal is not None:
            latency_ms = (time.perf_counter() - started) * 1000.0
            attempts = getattr(err, "attempts", 1)
            journal.record_failure(role_tag, key_hash, attempts, latency_ms, str(err))
        raise
    latency_ms = (time.perf_counter() - started) * 1000.0
    if journal is not None:
        journal.record(role_tag, key_hash, result.text, result.attempts, latency_ms)
    return result.text


# --------------------------------------------------------------------------
# Reply parsing

def _label_occurrences(reply: str, space: LabelSpace) -> list[tuple[int, int]]:
    """(position, label_index) pairs for labels found in the reply."""
    lowered = reply.casefold()
    found = []
    for index, label in enumerate(space.labels):
        position = lowered.find(label.casefold())
        if position >= 0:
            found.append((position, index))
    return found


def parse_label(
    reply: str, space: LabelSpace, *, require_nonempty: bool = True
) -> LabelAssignment:
    """Extract a label assignment from a model reply.

    Binary spaces take the unique label string occurring in the reply; when
    both occur, the earliest first occurrence wins (logged, since ties point
    at a malformed reply). Multi-label spaces take every label found.
    Matching is a case-insensitive substring check on the full label string.
    """
    found = _label_occurrences(reply, space)
    if space.is_binary:
        if not found:
            raise UnparseableReply(reply, "a label")
        if len(found) > 1:
            logger.warning(
                "reply mentions %d labels; keeping the earliest occurrence", len(found)
            )
        found.sort()
        return space.single(found[0][1])
    if not found and require_nonempty:
        raise UnparseableReply(reply, "at least one label")
    return LabelAssignment(frozenset(index for _, index in found))


_NUMBER_RE = re.compile(r"(?<![\d.\-])(\d+(?:\.\d+)?|\.\d+)")


def parse_probability(reply: str, space: LabelSpace | None = None) -> float:
    """Extract the first decimal number in [0, 1] from a reply.

    A reply carrying a bare label instead of a number falls back to the
    binary convention: the score is the probability of label index 0, so
    label 0 maps to 1.0 and label 1 to 0.0.
    """
    for match in _NUMBER_RE.finditer(reply):
        value = float(match.group(1))
        if 0.0 <= value <= 1.0:
            return value
    if space is not None and space.is_binary:
        found = _label_occurrences(reply, space)
        if found:
            found.sort()
            return 1.0 if found[0][1] == 0 else 0.0
    raise UnparseableReply(reply, "a probability in [0, 1]")
