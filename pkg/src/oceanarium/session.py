"""Proximity-gated interaction sessions.

The exhibit's input device streams distance readings as a newline protocol
(``D <cm>``). A hysteresis-gated state machine turns those readings into a
recording lifecycle: Idle -> Engaged -> Recording -> Processing -> Responding
-> Idle. Speech-to-text and text-to-speech run behind small adapter
interfaces with deterministic mocks.

State machine edges (engage < release, hold debounces the release):
  Idle      --distance < engage_cm-->        Engaged (transient) --> Recording
  Recording --distance > release_cm
              sustained release_hold_s-->    Processing  (StopRecording)
  Processing --TranscriptReady(text)-->      stays; emits RunPipeline(text)
  Processing --PipelineDone-->               Responding  (PlayResponse)
  Responding --ResponseDone-->               Idle (or straight back to
                                             Recording if the visitor is
                                             still inside the engage radius)
  any state  --sensor silence > watchdog-->  Idle
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Protocol, Union


class SensorProtocolError(Exception):
    """A sensor line did not match the wire protocol."""


class SessionState(Enum):
    IDLE = "idle"
    ENGAGED = "engaged"
    RECORDING = "recording"
    PROCESSING = "processing"
    RESPONDING = "responding"


@dataclass
class GateConfig:
    engage_cm: float = 50.0
    release_cm: float = 60.0
    release_hold_s: float = 0.5
    watchdog_s: float = 5.0

    def __post_init__(self):
        if not (self.release_cm > self.engage_cm > 0):
            raise ValueError("require release_cm > engage_cm > 0")
        if self.release_hold_s < 0 or self.watchdog_s <= 0:
            raise ValueError("hold and watchdog durations must be positive")


# -- inputs ---------------------------------------------------------------


@dataclass(frozen=True)
class ProximityReading:
    distance_cm: float
    timestamp: float


@dataclass(frozen=True)
class TranscriptReady:
    text: str
    timestamp: float


@dataclass(frozen=True)
class PipelineDone:
    response_text: str
    timestamp: float


@dataclass(frozen=True)
class ResponseDone:
    timestamp: float


@dataclass(frozen=True)
class Tick:
    timestamp: float


SessionInput = Union[ProximityReading, TranscriptReady, PipelineDone, ResponseDone, Tick]


# -- actions --------------------------------------------------------------


@dataclass(frozen=True)
class StateChanged:
    previous: SessionState
    current: SessionState


@dataclass(frozen=True)
class StartRecording:
    noise_cancel: bool = True


@dataclass(frozen=True)
class StopRecording:
    aborted: bool = False


@dataclass(frozen=True)
class RunPipeline:
    text: str


@dataclass(frozen=True)
class PlayResponse:
    text: str


Action = Union[StateChanged, StartRecording, StopRecording, RunPipeline, PlayResponse]


@dataclass(frozen=True)
class TranscriptSegment:
    session_id: str
    text: str
    started_at: float
    ended_at: float

    def __post_init__(self):
        if self.ended_at < self.started_at:
            raise ValueError("segment ends before it starts")


# -- wire protocol ---------------------------------------------------------


def parse_sensor_line(line: str, timestamp: float | None = None) -> ProximityReading:
    """Parse one ``D <cm>`` protocol line into a reading."""
    stripped = line.strip()
    parts = stripped.split()
    if len(parts) != 2 or parts[0] != "D":
        raise SensorProtocolError(f"malformed sensor line: {line!r}")
    try:
        distance = float(parts[1])
    except ValueError as exc:
        raise SensorProtocolError(f"malformed sensor line: {line!r}") from exc
    if distance < 0 or not math.isfinite(distance):
        raise SensorProtocolError(f"distance out of range in line: {line!r}")
    return ProximityReading(distance_cm=distance, timestamp=time.monotonic() if timestamp is None else timestamp)


def parse_replay_line(line: str) -> ProximityReading:
    """Parse a replay-file line ``@<millis> D <cm>``."""
    stripped = line.strip()
    if not stripped.startswith("@"):
        raise SensorProtocolError(f"replay line must start with '@<millis>': {line!r}")
    head, _, rest = stripped.partition(" ")
    try:
        millis = int(head[1:])
    except ValueError as exc:
        raise SensorProtocolError(f"bad replay timestamp in line: {line!r}") from exc
    if millis < 0:
        raise SensorProtocolError(f"negative replay timestamp in line: {line!r}")
    return parse_sensor_line(rest, timestamp=millis / 1000.0)


def load_replay_trace(path: str | Path) -> list[ProximityReading]:
    readings = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        if raw.strip() and not raw.lstrip().startswith("#"):
            readings.append(parse_replay_line(raw))
    return readings


# -- state machine ---------------------------------------------------------


class SessionMachine:
    """Deterministic gate machine; feed inputs in timestamp order via ``step``."""

    def __init__(self, config: GateConfig | None = None, start_time: float = 0.0):
        self.config = config or GateConfig()
        self.state = SessionState.IDLE
        self._last_sensor_at = start_time
        self._release_since: float | None = None
        self._last_distance: float | None = None

    def _transition(self, target: SessionState, actions: list[Action]) -> None:
        actions.append(StateChanged(self.state, target))
        self.state = target

    def _begin_recording(self, actions: list[Action]) -> None:
        self._transition(SessionState.ENGAGED, actions)
        self._transition(SessionState.RECORDING, actions)
        actions.append(StartRecording(noise_cancel=True))
        self._release_since = None

    def step(self, event: SessionInput) -> list[Action]:
        actions: list[Action] = []
        now = event.timestamp
        cfg = self.config

        # watchdog: the sensor feed went silent for too long; recover to Idle
        if self.state is not SessionState.IDLE and now - self._last_sensor_at > cfg.watchdog_s:
            if self.state is SessionState.RECORDING:
                actions.append(StopRecording(aborted=True))
            self._transition(SessionState.IDLE, actions)
            self._release_since = None

        if isinstance(event, ProximityReading):
            self._last_sensor_at = now
            self._last_distance = event.distance_cm
            if self.state is SessionState.IDLE and event.distance_cm < cfg.engage_cm:
                self._begin_recording(actions)
            elif self.state is SessionState.RECORDING:
                if event.distance_cm > cfg.release_cm:
                    if self._release_since is None:
                        self._release_since = now
                    elif now - self._release_since >= cfg.release_hold_s:
                        actions.append(StopRecording())
                        self._transition(SessionState.PROCESSING, actions)
                        self._release_since = None
                else:
                    self._release_since = None
        elif isinstance(event, TranscriptReady):
            if self.state is SessionState.PROCESSING:
                if event.text.strip():
                    actions.append(RunPipeline(event.text))
                else:
                    self._transition(SessionState.IDLE, actions)
        elif isinstance(event, PipelineDone):
            if self.state is SessionState.PROCESSING:
                self._transition(SessionState.RESPONDING, actions)
                actions.append(PlayResponse(event.response_text))
        elif isinstance(event, ResponseDone):
            if self.state is SessionState.RESPONDING:
                if (
                    self._last_distance is not None
                    and self._last_distance < cfg.engage_cm
                    and now - self._last_sensor_at <= cfg.watchdog_s
                ):
                    # visitor stayed close through playback; re-engage directly
                    self._transition(SessionState.IDLE, actions)
                    self._begin_recording(actions)
                else:
                    self._transition(SessionState.IDLE, actions)
        elif isinstance(event, Tick):
            if (
                self.state is SessionState.RECORDING
                and self._release_since is not None
                and self._last_distance is not None
                and self._last_distance > cfg.release_cm
                and now - self._release_since >= cfg.release_hold_s
            ):
                actions.append(StopRecording())
                self._transition(SessionState.PROCESSING, actions)
                self._release_since = None
        return actions

    def run_trace(self, events: Iterable[SessionInput]) -> list[tuple[SessionInput, list[Action]]]:
        return [(event, self.step(event)) for event in events]


# -- adapters ---------------------------------------------------------------


class AdapterError(Exception):
    """An STT/TTS adapter failed."""


class SpeechToText(Protocol):
    def transcribe(self, audio_ref) -> str: ...


class TextToSpeech(Protocol):
    def synthesize(self, text: str) -> "SynthesisResult": ...


@dataclass(frozen=True)
class SynthesisResult:
    audio_handle: str
    duration_s: float

    def to_dict(self) -> dict:
        return {"audio_handle": self.audio_handle, "duration_s": self.duration_s}


class MockSpeechToText:
    """Treats the audio reference as UTF-8 text frames and returns them verbatim."""

    def __init__(self, fail: bool = False):
        self.fail = fail

    def transcribe(self, audio_ref) -> str:
        if self.fail:
            raise AdapterError("speech-to-text adapter failure (injected)")
        if isinstance(audio_ref, bytes):
            return audio_ref.decode("utf-8")
        return str(audio_ref)


class MockTextToSpeech:
    """Silence clips whose duration is word_count x seconds_per_word (default 0.4 s)."""

    def __init__(self, seconds_per_word: float = 0.4, fail: bool = False, latency_s: float = 0.0):
        self.seconds_per_word = seconds_per_word
        self.fail = fail
        self.latency_s = latency_s

    def synthesize(self, text: str) -> SynthesisResult:
        if not text:
            raise ValueError("text must be non-empty")
        if self.fail:
            raise AdapterError("text-to-speech adapter failure (injected)")
        if self.latency_s > 0:
            time.sleep(self.latency_s)
        words = len(text.split())
        return SynthesisResult(
            audio_handle=f"mock-tts:{words}w",
            duration_s=round(words * self.seconds_per_word, 6),
        )


class HttpSpeechToText:
    """Posts audio bytes to a transcription endpoint returning {"text": ...}."""

    def __init__(self, url: str, client=None, timeout_s: float = 30.0):
        import httpx

        self.url = url
        self._client = client or httpx.Client(timeout=timeout_s)

    def transcribe(self, audio_ref) -> str:
        import httpx

        payload = audio_ref if isinstance(audio_ref, bytes) else str(audio_ref).encode("utf-8")
        try:
            response = self._client.post(self.url, content=payload)
            response.raise_for_status()
            return response.json().get("text", "")
        except httpx.HTTPError as exc:
            raise AdapterError(f"speech-to-text endpoint failed: {exc}") from exc


class HttpTextToSpeech:
    """Posts text to a synthesis endpoint returning {"audio_handle": ..., "duration_s": ...}."""

    def __init__(self, url: str, client=None, timeout_s: float = 30.0):
        import httpx

        self.url = url
        self._client = client or httpx.Client(timeout=timeout_s)

    def synthesize(self, text: str) -> SynthesisResult:
        import httpx

        try:
            response = self._client.post(self.url, json={"text": text})
            response.raise_for_status()
            body = response.json()
            return SynthesisResult(
                audio_handle=body.get("audio_handle", ""),
                duration_s=float(body.get("duration_s", 0.0)),
            )
        except httpx.HTTPError as exc:
            raise AdapterError(f"text-to-speech endpoint failed: {exc}") from exc
