"""HTTP + WebSocket gateway around the exhibit service.

Endpoints:
  GET  /api/health            liveness and component summary
  GET  /api/catalog           visual catalog entries
  GET  /api/session/{id}      session snapshot for UI resync
  GET  /api/transcript/{id}   persisted pipeline records
  POST /api/query             run the pipeline {session_id, text}
  POST /api/visual            operator override {session_id, token}
  POST /api/reload/rules      atomic trigger-rule snapshot swap
  WS   /ws/events             live JSON stream {type, session_id, payload, seq}

Pipelines execute on worker threads; events cross into the asyncio loop via
``call_soon_threadsafe``. Slow stream consumers are dropped once their queue
overflows.
"""

from __future__ import annotations

import asyncio
import logging
import threading
from contextlib import asynccontextmanager
from typing import Optional

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from pydantic import BaseModel

from . import __version__
from .agents import PromptAssets
from .config import ServerConfig, resolve_catalog_path, resolve_rules_path
from .pipeline import ExhibitService
from .session import (
    PipelineDone,
    ResponseDone,
    RunPipeline,
    SensorProtocolError,
    SessionMachine,
    StartRecording,
    StateChanged,
    StopRecording,
    TranscriptReady,
    parse_sensor_line,
)
from .transcripts import TranscriptStore
from .triggers import ConfigError, load_catalog, load_trigger_rules
from .vindex import CorpusIndex

log = logging.getLogger(__name__)

STREAM_QUEUE_SIZE = 256


class EventBroadcaster:
    """Fan-out of pipeline events to websocket subscribers.

    ``publish`` is thread-safe and assigns a monotonically increasing global
    sequence number; subscribers that fall more than a queue's worth behind
    are disconnected rather than allowed to stall the exhibit.
    """

    def __init__(self):
        self._seq = 0
        self._seq_lock = threading.Lock()
        self._subscribers: dict[int, asyncio.Queue] = {}
        self._next_id = 0
        self._loop: Optional[asyncio.AbstractEventLoop] = None

    def bind_loop(self, loop: asyncio.AbstractEventLoop) -> None:
        self._loop = loop

    def subscribe(self) -> tuple[int, asyncio.Queue]:
        queue: asyncio.Queue = asyncio.Queue(maxsize=STREAM_QUEUE_SIZE)
        self._next_id += 1
        self._subscribers[self._next_id] = queue
        return self._next_id, queue

    def unsubscribe(self, subscriber_id: int) -> None:
        self._subscribers.pop(subscriber_id, None)

    def publish(self, event_type: str, session_id: str, payload: dict) -> int:
        with self._seq_lock:
            self._seq += 1
            seq = self._seq
        message = {"type": event_type, "session_id": session_id, "payload": payload, "seq": seq}
        loop = self._loop
        if loop is not None and not loop.is_closed():
            loop.call_soon_threadsafe(self._dispatch, message)
        return seq

    def _dispatch(self, message: dict) -> None:
        for subscriber_id, queue in list(self._subscribers.items()):
            # keep one slot free so a drop can always deliver its sentinel
            if queue.qsize() >= STREAM_QUEUE_SIZE - 1:
                log.warning("dropping slow event-stream subscriber %d", subscriber_id)
                self._subscribers.pop(subscriber_id, None)
                try:
                    queue.put_nowait(None)
                except asyncio.QueueFull:
                    pass
                continue
            queue.put_nowait(message)


class QueryRequest(BaseModel):
    session_id: str
    text: str


class VisualRequest(BaseModel):
    session_id: str
    token: str


def build_service(config: ServerConfig, event_sink=None) -> ExhibitService:
    """Assemble an ExhibitService from a validated config."""
    index = CorpusIndex.load(config.index_path)
    provider = config.embedding.build()
    if provider.dimension != index.dimension:
        raise ConfigError(
            f"embedding dimension {provider.dimension} != index dimension {index.dimension}"
        )
    catalog = load_catalog(resolve_catalog_path(config))
    rules_path = resolve_rules_path(config)
    rules = load_trigger_rules(rules_path)
    prompts = PromptAssets.load(config.prompts_path)
    return ExhibitService(
        index=index,
        provider=provider,
        catalog=catalog,
        rules=rules,
        backend=config.backend.build(),
        prompts=prompts,
        tts=config.adapters.build_tts(),
        store=TranscriptStore(config.persist_dir),
        retrieval=config.retrieval,
        history_cap=config.history_cap,
        decider_params=config.stage_params.decider,
        rewriter_params=config.stage_params.rewriter,
        responder_params=config.stage_params.responder,
        rules_path=rules_path,
        event_sink=event_sink,
    )


def create_app(service: ExhibitService, broadcaster: EventBroadcaster | None = None, config: ServerConfig | None = None) -> FastAPI:
    broadcaster = broadcaster or EventBroadcaster()

    def sink(event_type: str, session_id: str, payload: dict) -> None:
        seq = broadcaster.publish(event_type, session_id, payload)
        service.session(session_id).last_seq = seq

    service.event_sink = sink

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        broadcaster.bind_loop(asyncio.get_running_loop())
        sensor_server = None
        if config is not None and config.sensor_listen:
            host, port = config.sensor_listen.rsplit(":", 1)
            sensor_server = await start_sensor_listener(service, host, int(port), config)
        yield
        if sensor_server is not None:
            sensor_server.close()
            await sensor_server.wait_closed()
        await asyncio.to_thread(service.drain, 10.0)

    app = FastAPI(title="oceanarium", version=__version__, lifespan=lifespan)
    app.state.service = service
    app.state.broadcaster = broadcaster

    @app.get("/api/health")
    def health():
        return {
            "status": "ok",
            "version": __version__,
            "sentences": len(service.index),
            "catalog_entries": len(service.catalog),
            "rules_version": service.rules_snapshot.version,
        }

    @app.get("/api/catalog")
    def catalog():
        return {"entries": [entry.to_dict() for entry in service.catalog]}

    @app.get("/api/session/{session_id}")
    def session_snapshot(session_id: str):
        return service.snapshot(session_id)

    @app.get("/api/transcript/{session_id}")
    def transcript(session_id: str):
        return {"records": service.store.read(session_id)}

    @app.post("/api/query")
    def query(request: QueryRequest):
        if not request.text.strip():
            raise HTTPException(status_code=422, detail="text must be non-empty")
        try:
            result = service.run_pipeline(request.session_id, request.text)
        except OSError as exc:
            raise HTTPException(status_code=500, detail=f"transcript storage failed: {exc}")
        return result.to_dict()

    @app.post("/api/visual")
    def force_visual(request: VisualRequest):
        try:
            return service.force_visual(request.session_id, request.token)
        except KeyError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.post("/api/reload/rules")
    def reload_rules():
        try:
            version = service.reload_rules()
        except (ConfigError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"version": version}

    @app.websocket("/ws/events")
    async def events(websocket: WebSocket):
        await websocket.accept()
        subscriber_id, queue = broadcaster.subscribe()
        try:
            while True:
                message = await queue.get()
                if message is None:
                    break
                await websocket.send_json(message)
        except WebSocketDisconnect:
            pass
        finally:
            broadcaster.unsubscribe(subscriber_id)

    return app


# -- sensor-driven station -------------------------------------------------


class SensorStation:
    """Bridges the line-protocol sensor feed to the session machine and pipeline.

    The machine's actions steer recording: voice frames injected while
    recording become the transcript, one pipeline run follows each episode,
    and ResponseDone is scheduled after the synthesized clip's duration.
    """

    def __init__(self, service: ExhibitService, session_id: str, config: ServerConfig):
        self.service = service
        self.session_id = session_id
        self.machine = SessionMachine(config.gate)
        self.stt = config.adapters.build_stt()
        self._voice_frames: list[str] = []
        self._recording = False

    def inject_voice(self, text: str) -> None:
        """Test/demo seam standing in for microphone capture."""
        if self._recording:
            self._voice_frames.append(text)

    async def feed(self, event) -> None:
        runtime = self.service.session(self.session_id)
        for action in self.machine.step(event):
            if isinstance(action, StateChanged):
                runtime.ui_state = action.current.value
                self.service.event_sink("state_change", self.session_id, {"state": action.current.value})
            elif isinstance(action, StartRecording):
                self._voice_frames = []
                self._recording = True
            elif isinstance(action, StopRecording):
                self._recording = False
                if not action.aborted:
                    try:
                        text = self.stt.transcribe(" ".join(self._voice_frames))
                    except Exception as exc:  # adapter failure -> empty transcript
                        log.warning("stt failed; aborting episode: %s", exc)
                        text = ""
                    await self.feed(TranscriptReady(text=text, timestamp=event.timestamp))
            elif isinstance(action, RunPipeline):
                result = await asyncio.to_thread(
                    self.service.run_pipeline, self.session_id, action.text
                )
                await self.feed(PipelineDone(response_text=result.response_text, timestamp=event.timestamp))
                asyncio.get_running_loop().create_task(
                    self._finish_after(result.synthesis.duration_s, event.timestamp)
                )

    async def _finish_after(self, duration_s: float, timestamp: float) -> None:
        await asyncio.sleep(duration_s)
        await self.feed(ResponseDone(timestamp=timestamp + duration_s))


async def start_sensor_listener(service: ExhibitService, host: str, port: int, config: ServerConfig):
    """Accept ``D <cm>`` lines over TCP; each connection drives one station session."""

    async def handle(reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        peer = writer.get_extra_info("peername")
        station = SensorStation(service, session_id=f"station-{peer[1]}", config=config)
        try:
            while line := await reader.readline():
                try:
                    reading = parse_sensor_line(line.decode("utf-8"))
                except SensorProtocolError as exc:
                    writer.write(f"ERR {exc}\n".encode("utf-8"))
                    await writer.drain()
                    continue
                await station.feed(reading)
        finally:
            writer.close()

    server = await asyncio.start_server(handle, host, port)
    log.info("sensor listener on %s:%d", host, port)
    return server
