"""End-to-end query orchestration.

One pipeline run takes a visitor query through, in order: visual selection
(upstream, on the raw query), query rewriting, paragraph retrieval, persona
response, keyword trigger scanning, and speech synthesis with subtitle pacing.
Stage timings are recorded around every module boundary and each run is
appended to the session's transcript log.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass
from typing import Callable, Sequence

from .agents import (
    AgentTrace,
    ChatBackend,
    CompletionParams,
    ConversationHistory,
    PromptAssets,
    VisualSelection,
    decide_visual,
    respond,
    rewrite_query,
)
from .embedding import EmbeddingProvider
from .session import AdapterError, SessionState, SynthesisResult, TextToSpeech
from .transcripts import TranscriptStore, canonical_bytes
from .triggers import (
    CooldownState,
    KeywordMatcher,
    TriggerEvent,
    TriggerRule,
    VisualCatalogEntry,
    compile_rules,
    resolve_visual,
)
from .vindex import CorpusIndex, RetrievalConfig, RetrievalHit

log = logging.getLogger(__name__)

STAGES = ("decider", "rewriter", "retrieval", "responder", "triggers", "tts")
SUBTITLE_GROUP_WORDS = 6

EventSink = Callable[[str, str, dict], None]


@dataclass(frozen=True)
class SubtitleCue:
    text: str
    start_s: float
    duration_s: float

    def to_dict(self) -> dict:
        return {"text": self.text, "start_s": self.start_s, "duration_s": self.duration_s}


def pace_subtitles(text: str, total_duration_s: float) -> list[SubtitleCue]:
    """Word-grouped cues whose lengths split the clip duration proportionally."""
    words = text.split()
    if not words:
        return []
    groups = [words[i : i + SUBTITLE_GROUP_WORDS] for i in range(0, len(words), SUBTITLE_GROUP_WORDS)]
    cues = []
    elapsed = 0.0
    for group in groups:
        share = round(total_duration_s * len(group) / len(words), 6)
        cues.append(SubtitleCue(text=" ".join(group), start_s=round(elapsed, 6), duration_s=share))
        elapsed += share
    return cues


@dataclass
class PipelineResult:
    session_id: str
    query: str
    rewritten: str
    hits: list[RetrievalHit]
    visual: VisualSelection
    response_text: str
    events: list[TriggerEvent]
    subtitles: list[SubtitleCue]
    synthesis: SynthesisResult
    timings: dict[str, float]
    issued_at: float

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "query": self.query,
            "rewritten": self.rewritten,
            "hits": [h.to_dict() for h in self.hits],
            "visual": self.visual.to_dict(),
            "response_text": self.response_text,
            "events": [e.to_dict() for e in self.events],
            "subtitles": [c.to_dict() for c in self.subtitles],
            "synthesis": self.synthesis.to_dict(),
            "timings": self.timings,
            "issued_at": self.issued_at,
        }

    def canonical(self) -> bytes:
        return canonical_bytes(self.to_dict())


@dataclass
class RuleSnapshot:
    version: int
    rules: list[TriggerRule]
    matcher: KeywordMatcher


class SessionRuntime:
    """Per-session mutable state; pipeline runs for one session are serialized."""

    def __init__(self, session_id: str, history_cap: int):
        self.session_id = session_id
        self.history = ConversationHistory(cap=history_cap)
        self.cooldowns = CooldownState()
        self.lock = threading.Lock()
        self.ui_state = SessionState.IDLE.value
        self.central_visual: str | None = None
        self.active_layers: list[str] = []
        self.last_seq = 0
        self.traces: list[AgentTrace] = []

    def apply_visual(self, token: str | None) -> None:
        self.central_visual = token

    def apply_event(self, event: TriggerEvent) -> None:
        token = event.payload.get("token")
        if event.kind.value == "layer_on" and token and token not in self.active_layers:
            self.active_layers.append(token)
        elif event.kind.value == "layer_off" and token in self.active_layers:
            self.active_layers.remove(token)

    def snapshot(self) -> dict:
        return {
            "session_id": self.session_id,
            "state": self.ui_state,
            "central_visual": self.central_visual,
            "active_layers": list(self.active_layers),
            "history_turns": len(self.history),
            "seq": self.last_seq,
        }


class ExhibitService:
    """Owns the shared snapshots (index, catalog, rules, prompts) and all sessions."""

    def __init__(
        self,
        index: CorpusIndex,
        provider: EmbeddingProvider,
        catalog: Sequence[VisualCatalogEntry],
        rules: Sequence[TriggerRule],
        backend: ChatBackend,
        prompts: PromptAssets,
        tts: TextToSpeech,
        store: TranscriptStore,
        retrieval: RetrievalConfig | None = None,
        history_cap: int = 6,
        decider_params: CompletionParams | None = None,
        rewriter_params: CompletionParams | None = None,
        responder_params: CompletionParams | None = None,
        rules_path=None,
        event_sink: EventSink | None = None,
    ):
        self.index = index
        self.provider = provider
        self.catalog = list(catalog)
        self.backend = backend
        self.prompts = prompts
        self.tts = tts
        self.store = store
        self.retrieval = retrieval or RetrievalConfig(dimension=index.dimension)
        self.history_cap = history_cap
        self.decider_params = decider_params
        self.rewriter_params = rewriter_params
        self.responder_params = responder_params
        self.rules_path = rules_path
        self.event_sink: EventSink = event_sink or (lambda *_: None)

        self._rules_lock = threading.Lock()
        self._rules = RuleSnapshot(version=1, rules=list(rules), matcher=compile_rules(rules))
        self._sessions: dict[str, SessionRuntime] = {}
        self._sessions_lock = threading.Lock()
        self._inflight = 0
        self._inflight_lock = threading.Condition()

    # -- sessions ---------------------------------------------------------

    def session(self, session_id: str) -> SessionRuntime:
        with self._sessions_lock:
            runtime = self._sessions.get(session_id)
            if runtime is None:
                runtime = SessionRuntime(session_id, self.history_cap)
                self._sessions[session_id] = runtime
            return runtime

    def session_ids(self) -> list[str]:
        with self._sessions_lock:
            return sorted(self._sessions)

    def snapshot(self, session_id: str) -> dict:
        return self.session(session_id).snapshot()

    # -- rules ------------------------------------------------------------

    @property
    def rules_snapshot(self) -> RuleSnapshot:
        with self._rules_lock:
            return self._rules

    def reload_rules(self, rules: Sequence[TriggerRule] | None = None) -> int:
        """Swap in a new rule snapshot atomically; in-flight scans keep the old one."""
        if rules is None:
            from .triggers import load_trigger_rules

            if self.rules_path is None:
                raise ValueError("service has no rules file to reload from")
            rules = load_trigger_rules(self.rules_path)
        matcher = compile_rules(rules)
        with self._rules_lock:
            self._rules = RuleSnapshot(
                version=self._rules.version + 1, rules=list(rules), matcher=matcher
            )
            return self._rules.version

    # -- operator ---------------------------------------------------------

    def force_visual(self, session_id: str, token: str) -> dict:
        """Operator override of the central visual; token must be catalog-known or NONE."""
        entry = None
        if token != "NONE":
            entry = next((e for e in self.catalog if e.token == token), None)
            if entry is None:
                raise KeyError(f"token {token!r} is not in the catalog")
        runtime = self.session(session_id)
        runtime.apply_visual(None if token == "NONE" else token)
        self._emit(runtime, "visual_selected", {"token": token, "forced": True})
        return {"session_id": session_id, "token": token}

    # -- pipeline ---------------------------------------------------------

    def _emit(self, runtime: SessionRuntime, event_type: str, payload: dict) -> None:
        self.event_sink(event_type, runtime.session_id, payload)

    def run_pipeline(self, session_id: str, query: str, issued_at: float | None = None) -> PipelineResult:
        """Run the full query flow for one session; see module docstring for order."""
        if not query or not query.strip():
            raise ValueError("query must be non-empty")
        issued_at = time.time() if issued_at is None else issued_at
        runtime = self.session(session_id)
        rules = self.rules_snapshot
        with self._inflight_lock:
            self._inflight += 1
        try:
            with runtime.lock:
                return self._run_locked(runtime, rules, query, issued_at)
        finally:
            with self._inflight_lock:
                self._inflight -= 1
                self._inflight_lock.notify_all()

    def _run_locked(
        self,
        runtime: SessionRuntime,
        rules: RuleSnapshot,
        query: str,
        issued_at: float,
    ) -> PipelineResult:
        timings: dict[str, float] = {}
        total_started = time.monotonic()
        traces = runtime.traces
        runtime.ui_state = SessionState.PROCESSING.value
        self._emit(runtime, "state_change", {"state": runtime.ui_state})

        started = time.monotonic()
        visual = decide_visual(
            self.backend, query, self.catalog, self.prompts, self.decider_params, traces
        )
        timings["decider"] = time.monotonic() - started
        entry = resolve_visual(visual.token, self.catalog)
        self._emit(runtime, "visual_selected", {"token": visual.token})
        runtime.apply_visual(entry.token if entry else None)
        self._emit(runtime, "stage_timing", {"stage": "decider", "seconds": timings["decider"]})

        started = time.monotonic()
        rewritten = rewrite_query(self.backend, query, self.prompts, self.rewriter_params, traces)
        timings["rewriter"] = time.monotonic() - started
        self._emit(runtime, "stage_timing", {"stage": "rewriter", "seconds": timings["rewriter"]})

        started = time.monotonic()
        hits = self.index.retrieve(rewritten, self.provider, self.retrieval)
        timings["retrieval"] = time.monotonic() - started
        self._emit(runtime, "stage_timing", {"stage": "retrieval", "seconds": timings["retrieval"]})

        started = time.monotonic()
        response_text = respond(
            self.backend,
            query,
            [h.paragraph_text for h in hits],
            entry.description if entry else None,
            runtime.history,
            self.prompts,
            self.responder_params,
            traces,
        )
        timings["responder"] = time.monotonic() - started
        self._emit(runtime, "stage_timing", {"stage": "responder", "seconds": timings["responder"]})

        started = time.monotonic()
        events = rules.matcher.scan(response_text, now=issued_at, cooldowns=runtime.cooldowns)
        timings["triggers"] = time.monotonic() - started
        for event in events:
            runtime.apply_event(event)
            self._emit(runtime, "trigger_event", event.to_dict())
        self._emit(runtime, "stage_timing", {"stage": "triggers", "seconds": timings["triggers"]})

        started = time.monotonic()
        try:
            synthesis = self.tts.synthesize(response_text)
        except AdapterError as exc:
            log.warning("tts failed; continuing with zero-duration clip: %s", exc)
            synthesis = SynthesisResult(audio_handle="", duration_s=0.0)
        timings["tts"] = time.monotonic() - started
        subtitles = pace_subtitles(response_text, synthesis.duration_s)
        runtime.ui_state = SessionState.RESPONDING.value
        self._emit(runtime, "state_change", {"state": runtime.ui_state})
        for cue in subtitles:
            self._emit(runtime, "subtitle", cue.to_dict())
        self._emit(runtime, "stage_timing", {"stage": "tts", "seconds": timings["tts"]})

        timings["total"] = time.monotonic() - total_started
        result = PipelineResult(
            session_id=runtime.session_id,
            query=query,
            rewritten=rewritten,
            hits=hits,
            visual=visual,
            response_text=response_text,
            events=events,
            subtitles=subtitles,
            synthesis=synthesis,
            timings=timings,
            issued_at=issued_at,
        )
        # only a storage failure aborts the request; agents/adapters fail open
        self.store.append(runtime.session_id, result.to_dict())
        runtime.ui_state = SessionState.IDLE.value
        self._emit(runtime, "state_change", {"state": runtime.ui_state})
        return result

    def drain(self, timeout_s: float = 10.0) -> bool:
        """Wait for in-flight pipelines to finish; True when drained."""
        deadline = time.monotonic() + timeout_s
        with self._inflight_lock:
            while self._inflight > 0:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return False
                self._inflight_lock.wait(remaining)
        return True


def replay_transcript(service: ExhibitService, records: list[dict]) -> list[tuple[dict, PipelineResult, list[str]]]:
    """Re-run recorded queries and report canonical differences per record."""
    from .transcripts import diff_records

    outcomes = []
    for record in records:
        result = service.run_pipeline(
            record["session_id"], record["query"], issued_at=record.get("issued_at")
        )
        outcomes.append((record, result, diff_records(record, result.to_dict())))
    return outcomes
