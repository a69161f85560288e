"""The three pipeline agents over an abstract chat backend.

``decide_visual`` picks a visualization token (grammar-gated), ``rewrite_query``
reformulates the visitor's question for retrieval, and ``respond`` produces the
Ocean's answer from the retrieved paragraphs, the active visual description,
and the conversation history. All prompt text lives in config assets, not code.
"""

from __future__ import annotations

import hashlib
import json
import re
import time
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Protocol, Sequence

import httpx
import yaml

from .grammar import extract_token, grammar_from_tokens

NONE_TOKEN = "NONE"
REWRITE_MARKER = "REWRITE:"
ROLES = ("system", "user", "assistant")


class BackendError(Exception):
    """Chat backend failed after exhausting its retry budget."""


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.role in ("user", "assistant") and not self.content:
            raise ValueError(f"{self.role} message must be non-empty")


@dataclass(frozen=True)
class CompletionParams:
    max_tokens: int = 256
    temperature: float = 0.0
    stop_sequences: tuple[str, ...] = ()
    timeout_s: float = 30.0

    def __post_init__(self):
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class VisualSelection:
    token: str
    rationale_text: str = ""

    def to_dict(self) -> dict:
        return {"token": self.token, "rationale_text": self.rationale_text}


@dataclass
class AgentTrace:
    stage: str
    prompt_hash: str
    raw_output: str
    duration_s: float
    retries: int = 0


class ChatBackend(Protocol):
    def complete(self, messages: Sequence[ChatMessage], params: CompletionParams) -> str: ...


def prompt_hash(messages: Sequence[ChatMessage]) -> str:
    canonical = json.dumps([[m.role, m.content] for m in messages], ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


# -- backends -----------------------------------------------------------


@dataclass
class ScriptRule:
    response: str
    match: str | None = None
    regex: str | None = None
    system_match: str | None = None  # additionally require this in the system prompt

    def fires(self, user_text: str, system_text: str = "") -> bool:
        if self.system_match is not None and self.system_match.lower() not in system_text.lower():
            return False
        if self.match is not None:
            return self.match.lower() in user_text.lower()
        if self.regex is not None:
            return re.search(self.regex, user_text) is not None
        return False


class ScriptedChatBackend:
    """Deterministic offline backend driven by an ordered match/response script.

    The first rule whose substring or regex matcher fires on the last user
    message wins; otherwise the fixed fallback is returned. Every call is
    recorded for prompt-capture assertions, and an optional latency models a
    real model's response time.
    """

    def __init__(self, rules: list[ScriptRule] | None = None, fallback: str = "The tide turns without an answer.", latency_s: float = 0.0):
        self.rules = rules or []
        self.fallback = fallback
        self.latency_s = latency_s
        self.calls: list[tuple[tuple[ChatMessage, ...], CompletionParams]] = []

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedChatBackend":
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        rules = []
        for i, raw in enumerate(data.get("rules", [])):
            if "response" not in raw:
                raise ValueError(f"mock script rule {i}: missing 'response'")
            if ("match" in raw) == ("regex" in raw):
                raise ValueError(f"mock script rule {i}: exactly one of 'match'/'regex' required")
            rules.append(
                ScriptRule(
                    response=raw["response"],
                    match=raw.get("match"),
                    regex=raw.get("regex"),
                    system_match=raw.get("system_match"),
                )
            )
        return cls(
            rules=rules,
            fallback=data.get("fallback", "The tide turns without an answer."),
            latency_s=float(data.get("latency_s", 0.0)),
        )

    def complete(self, messages: Sequence[ChatMessage], params: CompletionParams) -> str:
        if not messages or messages[0].role != "system":
            raise ValueError("messages must start with a system message")
        self.calls.append((tuple(messages), params))
        if self.latency_s > 0:
            time.sleep(self.latency_s)
        last_user = next((m.content for m in reversed(messages) if m.role == "user"), "")
        for rule in self.rules:
            if rule.fires(last_user, messages[0].content):
                return rule.response
        return self.fallback


class HttpChatBackend:
    """Client for a chat-completions endpoint at ``{base_url}/chat/completions``."""

    def __init__(
        self,
        base_url: str,
        model: str,
        client: httpx.Client | None = None,
        max_retries: int = 2,
        backoff_s: float = 0.2,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self._client = client or httpx.Client()

    def complete(self, messages: Sequence[ChatMessage], params: CompletionParams) -> str:
        if not messages or messages[0].role != "system":
            raise ValueError("messages must start with a system message")
        payload = {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
            "max_tokens": params.max_tokens,
            "temperature": params.temperature,
        }
        if params.stop_sequences:
            payload["stop"] = list(params.stop_sequences)
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                response = self._client.post(
                    f"{self.base_url}/chat/completions",
                    json=payload,
                    timeout=params.timeout_s,
                )
                if response.status_code >= 500:
                    raise httpx.TransportError(f"server error {response.status_code}")
                response.raise_for_status()
                body = response.json()
                try:
                    content = body["choices"][0]["message"]["content"]
                except (KeyError, IndexError, TypeError) as exc:
                    raise BackendError(f"malformed completion response: {exc}") from exc
                return content or ""
            except (httpx.TransportError, httpx.TimeoutException) as exc:
                last_error = exc
                if attempt < self.max_retries:
                    time.sleep(self.backoff_s * (2**attempt))
        raise BackendError(
            f"chat backend unreachable after {self.max_retries + 1} attempts: {last_error}"
        )


# -- prompt assets ------------------------------------------------------


@dataclass
class PromptAssets:
    persona_charter: str
    responder_context_instructions: str
    decider_system: str
    decider_retry: str
    decider_fewshot: list[dict]
    rewriter_system: str
    visual_block_label: str
    paragraph_block_label: str
    question_block_label: str
    apology_line: str

    @classmethod
    def from_mapping(cls, data: dict) -> "PromptAssets":
        required = [
            "persona_charter",
            "responder_context_instructions",
            "decider_system",
            "decider_retry",
            "decider_fewshot",
            "rewriter_system",
            "visual_block_label",
            "paragraph_block_label",
            "question_block_label",
            "apology_line",
        ]
        missing = [key for key in required if key not in data]
        if missing:
            raise ValueError(f"prompt assets missing keys: {missing}")
        return cls(**{key: data[key] for key in required})

    @classmethod
    def load(cls, path: str | Path | None = None) -> "PromptAssets":
        if path is None:
            text = resources.files("oceanarium.assets").joinpath("prompts.yaml").read_text("utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
        return cls.from_mapping(yaml.safe_load(text))

    def responder_system(self) -> str:
        return f"{self.persona_charter.strip()}\n\n{self.responder_context_instructions.strip()}"


# -- conversation history -----------------------------------------------


class ConversationHistory:
    """Bounded list of (visitor, ocean) turns; oldest evicted first."""

    def __init__(self, cap: int = 6):
        if cap < 1:
            raise ValueError("cap must be >= 1")
        self.cap = cap
        self._turns: deque[tuple[str, str]] = deque(maxlen=cap)

    def append(self, user_text: str, ocean_text: str) -> None:
        self._turns.append((user_text, ocean_text))

    def turns(self) -> list[tuple[str, str]]:
        return list(self._turns)

    def __len__(self) -> int:
        return len(self._turns)


# -- agents -------------------------------------------------------------


def _record(traces: list[AgentTrace] | None, trace: AgentTrace) -> None:
    if traces is not None:
        traces.append(trace)


def render_catalog_options(catalog: Sequence) -> str:
    lines = [f"{entry.token}: {entry.description}" for entry in catalog]
    lines.append(f"{NONE_TOKEN}: no prepared visual fits the question")
    return "\n".join(lines)


def _render_fewshot(examples: list[dict]) -> str:
    blocks = []
    for example in examples:
        blocks.append(
            f"Question: {example['query']}\n"
            f"Reasoning: {example['reasoning']}\n"
            f"Answer: {example['token']}"
        )
    return "\n\n".join(blocks)


def decide_visual(
    backend: ChatBackend,
    query: str,
    catalog: Sequence,
    prompts: PromptAssets,
    params: CompletionParams | None = None,
    traces: list[AgentTrace] | None = None,
) -> VisualSelection:
    """Pick a catalog token for the query, or NONE.

    Stateless: the prompt carries only the catalog, a few worked examples, and
    the raw query. The backend's output is gated through a token grammar; one
    stricter re-prompt is attempted before falling back to NONE.
    """
    if not catalog:
        raise ValueError("catalog must be non-empty")
    params = params or CompletionParams(max_tokens=160)
    tokens = [entry.token for entry in catalog] + [NONE_TOKEN]
    gate = grammar_from_tokens(tokens)
    system = prompts.decider_system.format(
        options=render_catalog_options(catalog),
        examples=_render_fewshot(prompts.decider_fewshot),
    )
    messages: list[ChatMessage] = [ChatMessage("system", system), ChatMessage("user", query)]
    started = time.monotonic()
    raw = ""
    for attempt in range(2):
        try:
            raw = backend.complete(messages, params)
        except BackendError:
            _record(
                traces,
                AgentTrace("decider", prompt_hash(messages), raw, time.monotonic() - started, attempt),
            )
            return VisualSelection(NONE_TOKEN, rationale_text="")
        token = extract_token(gate, raw)
        if token is not None:
            _record(
                traces,
                AgentTrace("decider", prompt_hash(messages), raw, time.monotonic() - started, attempt),
            )
            cut = raw.rfind(token)
            return VisualSelection(token, rationale_text=raw[:cut].strip())
        if attempt == 0:
            retry = prompts.decider_retry.format(options=", ".join(tokens))
            messages = messages + [
                ChatMessage("assistant", raw or "(empty)"),
                ChatMessage("user", retry),
            ]
    _record(traces, AgentTrace("decider", prompt_hash(messages), raw, time.monotonic() - started, 1))
    return VisualSelection(NONE_TOKEN, rationale_text=raw.strip())


def rewrite_query(
    backend: ChatBackend,
    query: str,
    prompts: PromptAssets,
    params: CompletionParams | None = None,
    traces: list[AgentTrace] | None = None,
) -> str:
    """Reformulate the query for retrieval; fails open to the original text.

    The backend reasons freely, then ends with ``REWRITE: <text>``; the text
    after the last marker wins. Missing marker, empty rewrite, or backend
    failure all return the query unchanged.
    """
    if not query:
        raise ValueError("query must be non-empty")
    params = params or CompletionParams(max_tokens=200)
    messages = [ChatMessage("system", prompts.rewriter_system), ChatMessage("user", query)]
    started = time.monotonic()
    try:
        raw = backend.complete(messages, params)
    except BackendError as exc:
        _record(traces, AgentTrace("rewriter", prompt_hash(messages), str(exc), time.monotonic() - started, 0))
        return query
    _record(traces, AgentTrace("rewriter", prompt_hash(messages), raw, time.monotonic() - started, 0))
    marker = raw.rfind(REWRITE_MARKER)
    if marker < 0:
        return query
    rewritten = raw[marker + len(REWRITE_MARKER) :].strip()
    return rewritten or query


def respond(
    backend: ChatBackend,
    query: str,
    paragraphs: Sequence[str],
    visual_description: str | None,
    history: ConversationHistory,
    prompts: PromptAssets,
    params: CompletionParams | None = None,
    traces: list[AgentTrace] | None = None,
) -> str:
    """Generate the Ocean's reply and append the turn to history.

    The final user message embeds the visual description block (omitted when
    there is none), each retrieved paragraph under its own labeled delimiter,
    and the visitor's raw question. Backend failure or a persistently empty
    completion degrades to the configured apology line; the exhibit always
    answers.
    """
    if not query:
        raise ValueError("query must be non-empty")
    if len(paragraphs) > 2:
        raise ValueError("at most two retrieved paragraphs may be supplied")
    params = params or CompletionParams(max_tokens=512, temperature=0.7)

    blocks: list[str] = []
    if visual_description:
        blocks.append(f"[{prompts.visual_block_label}]\n{visual_description}")
    for i, paragraph in enumerate(paragraphs, start=1):
        blocks.append(f"[{prompts.paragraph_block_label} {i}]\n{paragraph}")
    blocks.append(f"[{prompts.question_block_label}]\n{query}")

    messages: list[ChatMessage] = [ChatMessage("system", prompts.responder_system())]
    for user_text, ocean_text in history.turns():
        messages.append(ChatMessage("user", user_text))
        messages.append(ChatMessage("assistant", ocean_text))
    messages.append(ChatMessage("user", "\n\n".join(blocks)))

    started = time.monotonic()
    response = ""
    retries = 0
    for attempt in range(2):
        retries = attempt
        try:
            response = backend.complete(messages, params).strip()
        except BackendError:
            response = ""
            break
        if response:
            break
    if not response:
        response = prompts.apology_line
    _record(traces, AgentTrace("responder", prompt_hash(messages), response, time.monotonic() - started, retries))
    history.append(query, response)
    return response
