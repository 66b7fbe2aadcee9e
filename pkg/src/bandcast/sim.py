"""Loopback simulation: backend + in-process sensor fleet + scripted clients.

Everything runs as tasks on one event loop against a shared Clock, so a
ten-minute protocol timeline can run in seconds without changing any
protocol constant. The harness measures what an operator would: session
latencies, per-channel throughput, signaling overhead, brokering behavior
under contention, and the settled reward statement.
"""

from __future__ import annotations

import asyncio
import json
from collections import deque
from dataclasses import dataclass, field

import httpx
from websockets.asyncio.client import connect as ws_connect
from websockets.exceptions import ConnectionClosed

from . import __version__
from .backend import Backend
from .clock import Clock
from .iqsource import FrontEnd
from .rewards import RewardStatement
from .scenario import Scenario
from .sensor import SensorConfig, SensorDaemon
from .wire import (
    FRAME_AUDIO,
    FRAME_CHANNELS,
    FRAME_CONTROL,
    FRAME_DECODED_JSON,
    FRAME_ERROR,
    FRAME_HELLO,
    FRAME_PSD,
    ControlMessage,
    PeerFrame,
    decode_frame,
    decode_psd_payload,
    encode_control,
    encode_frame,
)

FRAME_NAMES = {
    FRAME_PSD: "psd",
    FRAME_DECODED_JSON: "json",
    FRAME_AUDIO: "audio",
    FRAME_CHANNELS: "channels",
    FRAME_ERROR: "error",
}

WATERFALL_KEEP = 600


class SimError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass
class ClientMetrics:
    """What one scripted client saw."""

    user_id: str
    connect_to_psd_s: float | None = None
    decoder_to_audio_s: float | None = None
    retune_s: float | None = None
    session_s: float = 0.0
    frames: dict[str, int] = field(default_factory=dict)
    bytes: dict[str, int] = field(default_factory=dict)
    busy_rejects: int = 0
    errors: list[str] = field(default_factory=list)
    psd_history: deque = field(default_factory=lambda: deque(maxlen=WATERFALL_KEEP))
    last_channels: list = field(default_factory=list)
    decoded: list[dict] = field(default_factory=list)

    def kbps(self) -> dict[str, float]:
        if self.session_s <= 0:
            return {}
        out = {k: v * 8 / 1000 / self.session_s for k, v in self.bytes.items()}
        out["total"] = sum(v * 8 / 1000 for v in self.bytes.values()) / self.session_s
        return out


@dataclass
class SimReport:
    name: str
    scenario_hash: str
    version: str
    duration_s: float
    time_scale: float
    sensor_count: int
    clients: list[ClientMetrics]
    signaling_kbps: dict[str, float]
    busy_rejections: int
    offers_minted: int
    dropped_chunks: int
    sweep_retunes: int
    statement: RewardStatement | None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "scenario_hash": self.scenario_hash,
            "version": self.version,
            "duration_s": self.duration_s,
            "time_scale": self.time_scale,
            "sensor_count": self.sensor_count,
            "clients": [
                {
                    "user_id": c.user_id,
                    "connect_to_psd_s": c.connect_to_psd_s,
                    "decoder_to_audio_s": c.decoder_to_audio_s,
                    "retune_s": c.retune_s,
                    "session_s": c.session_s,
                    "frames": c.frames,
                    "kbps": {k: round(v, 3) for k, v in c.kbps().items()},
                    "busy_rejects": c.busy_rejects,
                    "errors": c.errors,
                    "decoded_count": len(c.decoded),
                }
                for c in self.clients
            ],
            "signaling_kbps": {k: round(v, 4) for k, v in self.signaling_kbps.items()},
            "busy_rejections": self.busy_rejections,
            "offers_minted": self.offers_minted,
            "dropped_chunks": self.dropped_chunks,
            "sweep_retunes": self.sweep_retunes,
            "statement": json.loads(self.statement.to_json()) if self.statement else None,
        }


class ScriptedClient:
    """Replays one client script against the backend and a sensor peer."""

    def __init__(self, spec: dict, base_url: str, token: str, clock: Clock):
        self.script = sorted(spec.get("script", []), key=lambda s: s["at_s"])
        self.metrics = ClientMetrics(user_id=spec["user_id"])
        self.base_url = base_url
        self.token = token
        self.clock = clock
        self._ws = None
        self._reader: asyncio.Task | None = None
        self._connect_mark: float | None = None
        self._audio_mark: float | None = None
        self._retune_mark: tuple[float, int] | None = None
        self._session_start: float | None = None

    async def run(self) -> None:
        async with httpx.AsyncClient(base_url=self.base_url) as http:
            for step in self.script:
                delay = step["at_s"] - self.clock.now()
                if delay > 0:
                    await self.clock.sleep(delay)
                await self._step(http, step)
            await self._disconnect()

    async def _step(self, http: httpx.AsyncClient, step: dict) -> None:
        action = step["action"]
        if action == "connect":
            await self._connect(http, step["sensor_id"])
            return
        if action == "disconnect":
            await self._disconnect()
            return
        if self._ws is None:
            return
        msg = ControlMessage(
            cmd=action,
            freq_hz=step.get("freq_hz"),
            gain_db=step.get("gain_db"),
            decoder_id=step.get("decoder_id"),
            level=step.get("level"),
        )
        now = self.clock.now()
        if action in ("tune", "decoder") and self.metrics.decoder_to_audio_s is None:
            self._audio_mark = now
        if action == "tune":
            self._retune_mark = (now, step["freq_hz"])
        try:
            await self._ws.send(
                encode_frame(PeerFrame(FRAME_CONTROL, encode_control(msg).encode()))
            )
        except ConnectionClosed:
            pass

    async def _connect(self, http: httpx.AsyncClient, sensor_id: str) -> None:
        self._connect_mark = self.clock.now()
        reply = await http.post(
            "/api/connect",
            headers={"Authorization": f"Bearer {self.token}"},
            json={"sensor_id": sensor_id},
        )
        if reply.status_code != 200:
            self.metrics.errors.append(reply.json().get("detail", "HTTP error"))
            return
        body = reply.json()
        if body["kind"] != "connect_offer":
            if body.get("reason") == "BUSY":
                self.metrics.busy_rejects += 1
            else:
                self.metrics.errors.append(body.get("reason", "rejected"))
            return
        ws = await ws_connect(body["endpoint"])
        await ws.send(encode_frame(PeerFrame(FRAME_HELLO, body["session_token"].encode())))
        self._ws = ws
        self._session_start = self.clock.now()
        self._reader = asyncio.create_task(self._read_loop(ws))

    async def _disconnect(self) -> None:
        ws, self._ws = self._ws, None
        if ws is None:
            return
        if self._session_start is not None:
            self.metrics.session_s += self.clock.now() - self._session_start
            self._session_start = None
        await ws.close()
        if self._reader is not None:
            try:
                await self._reader
            except asyncio.CancelledError:
                pass
            self._reader = None

    async def _read_loop(self, ws) -> None:
        m = self.metrics
        try:
            async for raw in ws:
                if isinstance(raw, str):
                    continue
                decoded = decode_frame(raw)
                if decoded is None:
                    continue
                frame = decoded[0]
                name = FRAME_NAMES.get(frame.frame_type, "other")
                m.frames[name] = m.frames.get(name, 0) + 1
                m.bytes[name] = m.bytes.get(name, 0) + len(raw)
                now = self.clock.now()
                if frame.frame_type == FRAME_PSD:
                    payload = decode_psd_payload(frame.payload)
                    m.psd_history.append(payload)
                    if m.connect_to_psd_s is None and self._connect_mark is not None:
                        m.connect_to_psd_s = now - self._connect_mark
                    if (
                        self._retune_mark is not None
                        and payload.center_freq_hz == self._retune_mark[1]
                    ):
                        m.retune_s = now - self._retune_mark[0]
                        self._retune_mark = None
                elif frame.frame_type == FRAME_AUDIO:
                    if m.decoder_to_audio_s is None and self._audio_mark is not None:
                        m.decoder_to_audio_s = now - self._audio_mark
                elif frame.frame_type == FRAME_CHANNELS:
                    m.last_channels = json.loads(frame.payload)
                elif frame.frame_type == FRAME_DECODED_JSON:
                    m.decoded.append(json.loads(frame.payload))
                elif frame.frame_type == FRAME_ERROR:
                    m.errors.append(json.loads(frame.payload).get("code", "ERROR"))
        except ConnectionClosed:
            pass


def _fleet_credentials(scenario: Scenario) -> dict:
    users = [
        {"user_id": c["user_id"], "token": f"user-token-{c['user_id']}", "balance_mtk": 1_000_000}
        for c in scenario.clients()
    ]
    sensors = [
        {
            "sensor_id": row["sensor_id"],
            "token": f"sensor-cred-{row['sensor_id']}",
            "owner_id": row["owner_id"],
        }
        for row in scenario.fleet()
    ]
    return {"users": users, "sensors": sensors}


async def _run(scenario: Scenario) -> SimReport:
    clock = Clock(scenario.time_scale)
    credentials = _fleet_credentials(scenario)
    backend = Backend(credentials, clock=clock, reward_params=scenario.reward_params())
    try:
        await backend.start()
    except OSError as exc:
        raise SimError("PORT_IN_USE", str(exc)) from exc
    backend.campaign = scenario.campaign()

    fe_conf = scenario.front_end()
    signals = scenario.signals()
    daemons: list[SensorDaemon] = []
    for i, row in enumerate(scenario.fleet()):
        fe = FrontEnd(
            signals,
            center_freq_hz=fe_conf["center_freq_hz"],
            sample_rate_hz=fe_conf["sample_rate_hz"],
            gain_db=fe_conf["gain_db"],
            seed=scenario.seed + i,
        )
        cfg = SensorConfig(
            sensor_id=row["sensor_id"],
            owner_id=row["owner_id"],
            credential=f"sensor-cred-{row['sensor_id']}",
            backend_host=backend.host,
            backend_port=backend.control_port,
            location=tuple(row["location"]),
            deploy_day=row["deploy_day"],
            center_freq_hz=fe_conf["center_freq_hz"],
        )
        daemon = SensorDaemon(cfg, fe, clock=clock)
        await daemon.start()
        daemons.append(daemon)

    deadline = asyncio.get_running_loop().time() + 30.0
    while any(s.sensor_id not in backend.sensors for s in map(lambda d: d.cfg, daemons)):
        if asyncio.get_running_loop().time() > deadline:
            raise SimError("RUNTIME", "fleet failed to register")
        await asyncio.sleep(0.02)

    base_url = f"http://{backend.host}:{backend.http_port}"
    clients = [
        ScriptedClient(spec, base_url, f"user-token-{spec['user_id']}", clock)
        for spec in scenario.clients()
    ]
    client_tasks = [asyncio.create_task(c.run()) for c in clients]

    remaining = scenario.duration_s - clock.now()
    if remaining > 0:
        await clock.sleep(remaining)
    for task in client_tasks:
        if not task.done():
            try:
                await asyncio.wait_for(task, timeout=10.0)
            except asyncio.TimeoutError:
                task.cancel()

    signaling = backend.signaling_rates_kbps()
    for daemon in daemons:
        await daemon.stop()
    await asyncio.sleep(0.05)

    declared = scenario.settlement_weeks()
    if declared is not None:
        statement = backend.settle_declared_week(declared[0], declared[1])
    elif backend.sensors:
        statement = backend.settle_metered_week(1)
    else:
        statement = None

    report = SimReport(
        name=scenario.name,
        scenario_hash=scenario.hash(),
        version=__version__,
        duration_s=scenario.duration_s,
        time_scale=scenario.time_scale,
        sensor_count=len(daemons),
        clients=[c.metrics for c in clients],
        signaling_kbps=signaling,
        busy_rejections=backend.busy_rejections,
        offers_minted=backend.offers_minted,
        dropped_chunks=sum(d.dropped_chunks for d in daemons),
        sweep_retunes=sum(d.sweep_retunes for d in daemons),
        statement=statement,
    )
    await backend.stop()
    return report


def run_simulation(scenario: Scenario) -> SimReport:
    """Run one scenario to completion and return its metrics report."""
    return asyncio.run(_run(scenario))
