"""Keyword-to-event triggers and the visual catalog registry.

Responder output is scanned by an Aho-Corasick automaton over every rule
phrase, with word-boundary checks at the match edges. Overlaps resolve
longest-phrase-first, then higher priority, then earliest offset; one event
per rule per scan; rules refire only after their per-session cooldown.
"""

from __future__ import annotations

import logging
import re
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import yaml

log = logging.getLogger(__name__)

TOKEN_PATTERN = re.compile(r"^[A-Z0-9_]+$")
NONE_TOKEN = "NONE"
DEFAULT_COOLDOWN_S = 30.0


class ConfigError(Exception):
    """A trigger-rule or catalog file failed validation."""


class VisualKind(str, Enum):
    GLOBE_LAYER = "globe-layer"
    VIDEO_OVERLAY = "video-overlay"


class EventKind(str, Enum):
    LAYER_ON = "layer_on"
    LAYER_OFF = "layer_off"
    CAMERA_MOVE = "camera_move"
    VIDEO_PLAY = "video_play"
    SUBTITLE = "subtitle"


@dataclass(frozen=True)
class VisualCatalogEntry:
    token: str
    title: str
    description: str
    kind: VisualKind
    asset_ref: str = ""

    def __post_init__(self):
        if not TOKEN_PATTERN.match(self.token):
            raise ValueError(f"catalog token {self.token!r} must match [A-Z0-9_]+")
        if not self.description:
            raise ValueError(f"catalog entry {self.token!r} needs a description")

    def to_dict(self) -> dict:
        return {
            "token": self.token,
            "title": self.title,
            "description": self.description,
            "kind": self.kind.value,
            "asset_ref": self.asset_ref,
        }


@dataclass
class TriggerRule:
    rule_id: str
    phrases: list[str]
    kind: EventKind
    payload: dict = field(default_factory=dict)
    priority: int = 0
    cooldown_s: float = DEFAULT_COOLDOWN_S

    def __post_init__(self):
        if not self.rule_id:
            raise ValueError("rule_id must be non-empty")
        if not self.phrases or any(not p.strip() for p in self.phrases):
            raise ValueError(f"rule {self.rule_id!r}: phrases must be non-empty")
        self.kind = EventKind(self.kind)
        self.phrases = [_fold(p).strip() for p in self.phrases]


@dataclass(frozen=True)
class TriggerEvent:
    kind: EventKind
    rule_id: str
    payload: dict
    source_span: tuple[int, int]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "rule_id": self.rule_id,
            "payload": self.payload,
            "source_span": list(self.source_span),
        }


def _fold(text: str) -> str:
    """Length-preserving lowercasing so match spans stay valid in the original text."""
    return "".join(c.lower() if len(c.lower()) == 1 else c for c in text)


def _is_word_char(c: str) -> bool:
    return c.isalnum() or c == "_"


class CooldownState:
    """Per-session record of when each rule last fired."""

    def __init__(self):
        self.last_fired: dict[str, float] = {}

    def ready(self, rule: TriggerRule, now: float) -> bool:
        last = self.last_fired.get(rule.rule_id)
        return last is None or (now - last) >= rule.cooldown_s

    def mark(self, rule_id: str, now: float) -> None:
        self.last_fired[rule_id] = now


class KeywordMatcher:
    """Compiled multi-phrase automaton; immutable and shareable across scans."""

    def __init__(self, rules: Sequence[TriggerRule]):
        seen: set[str] = set()
        for rule in rules:
            if rule.rule_id in seen:
                raise ValueError(f"duplicate rule id {rule.rule_id!r}")
            seen.add(rule.rule_id)
        self.rules = list(rules)
        # trie nodes: transitions, fail link, and (rule_index, phrase_length) outputs
        self._goto: list[dict[str, int]] = [{}]
        self._fail: list[int] = [0]
        self._out: list[list[tuple[int, int]]] = [[]]
        for rule_index, rule in enumerate(self.rules):
            for phrase in rule.phrases:
                self._add_phrase(phrase, rule_index)
        self._build_fail_links()

    def _add_phrase(self, phrase: str, rule_index: int) -> None:
        node = 0
        for ch in phrase:
            nxt = self._goto[node].get(ch)
            if nxt is None:
                nxt = len(self._goto)
                self._goto[node][ch] = nxt
                self._goto.append({})
                self._fail.append(0)
                self._out.append([])
            node = nxt
        self._out[node].append((rule_index, len(phrase)))

    def _build_fail_links(self) -> None:
        queue: deque[int] = deque()
        for child in self._goto[0].values():
            self._fail[child] = 0
            queue.append(child)
        while queue:
            node = queue.popleft()
            for ch, child in self._goto[node].items():
                queue.append(child)
                fallback = self._fail[node]
                while fallback and ch not in self._goto[fallback]:
                    fallback = self._fail[fallback]
                self._fail[child] = self._goto[fallback].get(ch, 0)
                if self._fail[child] == child:
                    self._fail[child] = 0
                self._out[child] = self._out[child] + self._out[self._fail[child]]

    def raw_matches(self, text: str) -> list[tuple[int, int, int]]:
        """All word-bounded phrase occurrences as (rule_index, start, end)."""
        folded = _fold(text)
        n = len(folded)
        found: list[tuple[int, int, int]] = []
        node = 0
        for i, ch in enumerate(folded):
            while node and ch not in self._goto[node]:
                node = self._fail[node]
            node = self._goto[node].get(ch, 0)
            for rule_index, length in self._out[node]:
                start, end = i - length + 1, i + 1
                if start > 0 and _is_word_char(folded[start - 1]) and _is_word_char(folded[start]):
                    continue
                if end < n and _is_word_char(folded[end]) and _is_word_char(folded[end - 1]):
                    continue
                found.append((rule_index, start, end))
        return found

    def scan(
        self,
        response_text: str,
        *,
        now: float = 0.0,
        cooldowns: CooldownState | None = None,
    ) -> list[TriggerEvent]:
        """Resolve matches into at most one event per rule, ordered by offset."""
        candidates = self.raw_matches(response_text)
        candidates.sort(
            key=lambda m: (
                -(m[2] - m[1]),
                -self.rules[m[0]].priority,
                m[1],
                self.rules[m[0]].rule_id,
            )
        )
        chosen: list[tuple[int, int, int]] = []
        claimed_rules: set[int] = set()
        for rule_index, start, end in candidates:
            if rule_index in claimed_rules:
                continue
            rule = self.rules[rule_index]
            if cooldowns is not None and not cooldowns.ready(rule, now):
                continue
            if any(start < e and s < end for _, s, e in chosen):
                continue
            chosen.append((rule_index, start, end))
            claimed_rules.add(rule_index)
        chosen.sort(key=lambda m: m[1])
        events = []
        for rule_index, start, end in chosen:
            rule = self.rules[rule_index]
            if cooldowns is not None:
                cooldowns.mark(rule.rule_id, now)
            events.append(
                TriggerEvent(
                    kind=rule.kind,
                    rule_id=rule.rule_id,
                    payload=dict(rule.payload),
                    source_span=(start, end),
                )
            )
        return events


def compile_rules(rules: Sequence[TriggerRule]) -> KeywordMatcher:
    return KeywordMatcher(rules)


def resolve_visual(token: str, catalog: Sequence[VisualCatalogEntry]) -> VisualCatalogEntry | None:
    """Exact catalog lookup; NONE and unknown tokens map to no visual."""
    if not token:
        raise ValueError("token must be non-empty")
    if token == NONE_TOKEN:
        return None
    for entry in catalog:
        if entry.token == token:
            return entry
    log.warning("visual token %r is not in the catalog; treating as no visual", token)
    return None


# -- config files ---------------------------------------------------------


def load_catalog(path: str | Path) -> list[VisualCatalogEntry]:
    data = _load_yaml_list(path, "visual catalog")
    entries: list[VisualCatalogEntry] = []
    tokens: set[str] = set()
    for i, raw in enumerate(data):
        try:
            entry = VisualCatalogEntry(
                token=raw["token"],
                title=raw.get("title", raw["token"]),
                description=raw["description"],
                kind=VisualKind(raw["kind"]),
                asset_ref=raw.get("asset_ref", ""),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"{path}: catalog entry {i}: {exc}") from exc
        if entry.token in tokens:
            raise ConfigError(f"{path}: catalog entry {i}: duplicate token {entry.token!r}")
        tokens.add(entry.token)
        entries.append(entry)
    if not entries:
        raise ConfigError(f"{path}: catalog is empty")
    return entries


def load_trigger_rules(path: str | Path) -> list[TriggerRule]:
    data = _load_yaml_list(path, "trigger rules")
    rules: list[TriggerRule] = []
    ids: set[str] = set()
    for i, raw in enumerate(data):
        try:
            rule = TriggerRule(
                rule_id=raw["id"],
                phrases=list(raw["phrases"]),
                kind=EventKind(raw["event"]),
                payload=dict(raw.get("payload", {})),
                priority=int(raw.get("priority", 0)),
                cooldown_s=float(raw.get("cooldown_s", DEFAULT_COOLDOWN_S)),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"{path}: rule {i} ({raw.get('id', '?')!r}): {exc}") from exc
        if rule.rule_id in ids:
            raise ConfigError(f"{path}: rule {i}: duplicate id {rule.rule_id!r}")
        ids.add(rule.rule_id)
        rules.append(rule)
    return rules


def _load_yaml_list(path: str | Path, what: str) -> list:
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML in {what}: {exc}") from exc
    if data is None:
        return []
    if not isinstance(data, list):
        raise ConfigError(f"{path}: {what} must be a YAML list")
    return data
