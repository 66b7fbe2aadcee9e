"""Sensor daemon: one radio, two pipelines, one client at a time.

Runs the PSD pipeline continuously off the virtual front end and, while a
decoder is active, the demodulation pipeline off the same chunk stream.
Between client sessions it sweeps an assigned campaign, keeping the sweep
spectra in a local ring. A WebSocket endpoint serves the single brokered
client; a TCP control connection keeps the backend informed.
"""

from __future__ import annotations

import asyncio
import json
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np
from websockets.asyncio.server import serve
from websockets.exceptions import ConnectionClosed

from .chanid import BandProfile, detect_channels, spans_to_json
from .clock import Clock
from .decoders import DecodeError, descriptor_for, make_decoder, registry_lookup
from .decoders.adsb import CprPairer
from .dsp import AudioBlock, DspError, IqChunk
from .dsp.adpcm import AdpcmEncoder
from .dsp.resampler import Resampler
from .dsp.welch import PsdConfig, PsdStream, welch_psd
from .iqsource import CHUNK_SECONDS, FrontEnd, SourceError
from .wire import (
    FRAME_AUDIO,
    FRAME_CHANNELS,
    FRAME_CONTROL,
    FRAME_DECODED_JSON,
    FRAME_ERROR,
    FRAME_HELLO,
    FRAME_PSD,
    ControlError,
    ControlMessage,
    FrameError,
    PeerFrame,
    SignalingError,
    SignalingMessage,
    decode_frame,
    encode_frame,
    encode_psd_payload,
    parse_control,
    parse_signaling,
)

SWEEP_RING_FRAMES = 1024
CHUNK_QUEUE_DEPTH = 8
HEARTBEAT_INTERVAL_S = 30.0
USAGE_REPORT_INTERVAL_S = 10.0
AUDIO_BLOCK_SAMPLES = 1024
HELLO_TIMEOUT_S = 5.0


class SensorError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass(frozen=True)
class SensorConfig:
    sensor_id: str
    owner_id: str
    credential: str
    backend_host: str = "127.0.0.1"
    backend_port: int = 0
    peer_host: str = "127.0.0.1"
    peer_port: int = 0
    location: tuple[float, float] = (47.0, 8.0)
    deploy_day: int = 1
    center_freq_hz: int = 100_000_000
    psd: PsdConfig = field(default_factory=PsdConfig)
    chan_profile: BandProfile = field(default_factory=BandProfile)
    registry_ids: tuple[str, ...] = ("am", "fm", "adsb")

    def __post_init__(self) -> None:
        if not self.sensor_id:
            raise SensorError("BAD_CONFIG", "sensor_id must be non-empty")


@dataclass
class SensorMode:
    """Mode machine state; DECODING requires both a decoder and a session."""

    mode: str = "IDLE_SWEEP"
    active_decoder: str | None = None
    session: dict | None = None

    def check(self) -> None:
        if self.mode not in ("IDLE_SWEEP", "PSD_ONLY", "DECODING"):
            raise SensorError("BAD_MODE", f"unknown mode {self.mode!r}")
        if (self.session is None) != (self.mode == "IDLE_SWEEP"):
            raise SensorError("BAD_MODE", f"{self.mode} vs session={self.session}")
        if (self.active_decoder is not None) != (self.mode == "DECODING"):
            raise SensorError("BAD_MODE", f"{self.mode} vs decoder={self.active_decoder}")


class SensorDaemon:
    """Everything one sensor does, as cooperating tasks on one event loop."""

    def __init__(self, cfg: SensorConfig, front_end: FrontEnd, clock: Clock | None = None):
        self.cfg = cfg
        self.fe = front_end
        self.clock = clock or Clock()
        self.state = SensorMode()
        self.psd_stream = PsdStream(cfg.psd)
        self.sweep_ring: deque = deque(maxlen=SWEEP_RING_FRAMES)
        self.campaign: dict = {"freqs_hz": [cfg.center_freq_hz], "dwell_ms": 500.0}
        self.dropped_chunks = 0
        self.sweep_retunes = 0
        self.frames_sent: dict[int, int] = {}
        self.bytes_sent: dict[int, int] = {}
        self.peer_port = 0
        self.endpoint = ""
        self.failed = False

        self._queue: asyncio.Queue = asyncio.Queue(maxsize=CHUNK_QUEUE_DEPTH)
        self._chan_history: deque = deque(maxlen=int(cfg.chan_profile.window_s * cfg.psd.frame_rate_hz))
        self._chan_next_s = 0.0
        self._resampler: Resampler | None = None
        self._decoder = None
        self._decoder_kind = ""
        self._pairer: CprPairer | None = None
        self._adpcm = AdpcmEncoder()
        self._pcm_pending: list[np.ndarray] = []
        self._pcm_pending_len = 0
        self._volume = 1.0
        self._pending_tokens: dict[str, int] = {}
        self._token_users: dict[str, str] = {}
        self._used_tokens: set[str] = set()
        self._fe_rate0 = front_end.sample_rate_hz
        self._session_event = asyncio.Event()
        self._ws = None
        self._session_started_s = 0.0
        self._dec_accum_s = 0.0
        self._dec_entered_s: float | None = None
        self._last_report_s = 0.0
        self._sweep_pos = 0
        self._next_deadline: float | None = None
        self._backend_writer: asyncio.StreamWriter | None = None
        self._server = None
        self._tasks: list[asyncio.Task] = []
        self._running = False

    # ---- lifecycle ------------------------------------------------------

    async def start(self) -> None:
        self._running = True
        self._server = await serve(self._handle_peer, self.cfg.peer_host, self.cfg.peer_port)
        self.peer_port = next(iter(self._server.sockets)).getsockname()[1]
        self.endpoint = f"ws://{self.cfg.peer_host}:{self.peer_port}/peer"
        for coro in (self._backend_task(), self._producer_task(),
                     self._pipeline_task(), self._housekeeping_task()):
            self._tasks.append(asyncio.create_task(coro))

    async def stop(self) -> None:
        self._running = False
        if self.state.session is not None:
            await self._end_session("sensor_stop")
        for task in self._tasks:
            task.cancel()
        for task in self._tasks:
            try:
                await task
            except (asyncio.CancelledError, Exception):
                pass
        if self._server is not None:
            self._server.close(close_connections=True)
            await self._server.wait_closed()
        if self._backend_writer is not None:
            self._backend_writer.close()

    # ---- backend control channel ----------------------------------------

    async def _backend_task(self) -> None:
        while self._running:
            try:
                reader, writer = await asyncio.open_connection(
                    self.cfg.backend_host, self.cfg.backend_port
                )
            except OSError:
                await self.clock.sleep(1.0)
                continue
            self._backend_writer = writer
            await self._send_signaling(
                SignalingMessage(
                    kind="register",
                    sensor_id=self.cfg.sensor_id,
                    meta={
                        "credential": self.cfg.credential,
                        "owner_id": self.cfg.owner_id,
                        "location": list(self.cfg.location),
                        "endpoint": self.endpoint,
                        "deploy_day": self.cfg.deploy_day,
                        "registry": list(self.cfg.registry_ids),
                    },
                )
            )
            hb = asyncio.create_task(self._heartbeat_task())
            try:
                while self._running:
                    line = await reader.readline()
                    if not line:
                        break
                    try:
                        msg = parse_signaling(line.decode())
                    except (SignalingError, UnicodeDecodeError):
                        continue
                    if msg.kind == "campaign_assign":
                        self.campaign = dict(msg.meta)
                    elif msg.kind == "connect_request" and msg.session_token:
                        self._pending_tokens[msg.session_token] = int(
                            msg.meta.get("expires_ms", self.clock.now_ms() + 30_000)
                        )
                        self._token_users[msg.session_token] = msg.user_id or ""
                    elif msg.kind == "connect_reject":
                        # registration refused; nothing to do but retire
                        self._running = False
            finally:
                hb.cancel()
                self._backend_writer = None
                writer.close()
            if self._running:
                await self.clock.sleep(1.0)

    async def _heartbeat_task(self) -> None:
        while self._running and not self.failed:
            await self._send_signaling(
                SignalingMessage(kind="heartbeat", sensor_id=self.cfg.sensor_id)
            )
            await self.clock.sleep(HEARTBEAT_INTERVAL_S)

    async def _send_signaling(self, msg: SignalingMessage) -> None:
        writer = self._backend_writer
        if writer is None:
            return
        try:
            writer.write(msg.to_line())
            await writer.drain()
        except (ConnectionError, OSError):
            pass

    # ---- producer: sweep or paced session chunks --------------------------

    async def _producer_task(self) -> None:
        try:
            while self._running:
                if self.state.session is None:
                    await self._sweep_step()
                else:
                    await self._produce_step()
        except (SourceError, DspError):
            # front end died: stop heartbeating so the backend sees OFFLINE
            self.failed = True
            if self.state.session is not None:
                await self._end_session("sensor_fault")

    async def _sweep_step(self) -> None:
        freqs = self.campaign.get("freqs_hz") or [self.cfg.center_freq_hz]
        dwell_s = float(self.campaign.get("dwell_ms", 500.0)) / 1000.0
        self.fe.tune(int(freqs[self._sweep_pos % len(freqs)]))
        self._sweep_pos += 1
        self.sweep_retunes += 1
        # a short render is enough for one local estimate; sweep spectra
        # stay on the sensor, so there is no need to fill the whole dwell
        chunk = self.fe.render(2 * self.cfg.psd.fft_size)
        self.sweep_ring.append(welch_psd(chunk, self.cfg.psd))
        try:
            await asyncio.wait_for(
                self._session_event.wait(), timeout=dwell_s / self.clock.time_scale
            )
        except (TimeoutError, asyncio.TimeoutError):
            pass

    async def _produce_step(self) -> None:
        if self._next_deadline is None:
            self._next_deadline = self.clock.now()
        chunk = self.fe.render(self.fe.chunk_samples)
        if self._queue.full():
            self._queue.get_nowait()
            self.dropped_chunks += 1
        self._queue.put_nowait(chunk)
        self._next_deadline += CHUNK_SECONDS
        delay = self._next_deadline - self.clock.now()
        if delay > 0:
            await self.clock.sleep(delay)
        elif delay < -1.0:
            self._next_deadline = self.clock.now()
        else:
            await asyncio.sleep(0)

    # ---- pipeline ----------------------------------------------------------

    async def _pipeline_task(self) -> None:
        while self._running:
            chunk = await self._queue.get()
            if self.state.session is None:
                continue
            try:
                await self._process_chunk(chunk)
            except ConnectionClosed:
                pass

    async def _process_chunk(self, chunk: IqChunk) -> None:
        for payload in self.psd_stream.feed(chunk):
            await self._send_frame(FRAME_PSD, encode_psd_payload(payload))
            self._chan_history.append(payload)
        now = self.clock.now()
        if self._chan_history and now >= self._chan_next_s:
            self._chan_next_s = now + 1.0
            spans = detect_channels(list(self._chan_history), self.cfg.chan_profile)
            await self._send_frame(FRAME_CHANNELS, spans_to_json(spans))
        if self.state.mode != "DECODING":
            return
        fed = self._resampler.process_chunk(chunk) if self._resampler else chunk
        if fed is None:
            return
        if self._decoder_kind == "json":
            for msg in self._decoder.feed(fed):
                body = msg.body(self._pairer.feed(msg) if self._pairer else None)
                envelope = {
                    "decoder_id": self.state.active_decoder,
                    "timestamp_ms": msg.timestamp_ms,
                    "body": body,
                }
                await self._send_frame(
                    FRAME_DECODED_JSON, json.dumps(envelope, separators=(",", ":")).encode()
                )
        else:
            block = self._decoder.feed(fed)
            if block is not None:
                await self._push_audio(block)

    async def _push_audio(self, block: AudioBlock) -> None:
        pcm = block.pcm
        if self._volume != 1.0:
            pcm = np.clip(pcm.astype(np.float64) * self._volume, -32768, 32767)
            pcm = pcm.astype(np.int16)
        self._pcm_pending.append(pcm)
        self._pcm_pending_len += len(pcm)
        while self._pcm_pending_len >= AUDIO_BLOCK_SAMPLES:
            buf = np.concatenate(self._pcm_pending)
            head, rest = buf[:AUDIO_BLOCK_SAMPLES], buf[AUDIO_BLOCK_SAMPLES:]
            self._pcm_pending = [rest] if len(rest) else []
            self._pcm_pending_len = len(rest)
            await self._send_frame(FRAME_AUDIO, self._adpcm.encode(head))

    async def _send_frame(self, frame_type: int, payload: bytes) -> None:
        ws = self._ws
        if ws is None:
            return
        data = encode_frame(PeerFrame(frame_type, payload))
        self.frames_sent[frame_type] = self.frames_sent.get(frame_type, 0) + 1
        self.bytes_sent[frame_type] = self.bytes_sent.get(frame_type, 0) + len(data)
        await ws.send(data)

    # ---- peer endpoint -----------------------------------------------------

    async def _handle_peer(self, ws) -> None:
        try:
            raw = await asyncio.wait_for(ws.recv(), timeout=HELLO_TIMEOUT_S)
        except (TimeoutError, asyncio.TimeoutError, ConnectionClosed):
            return
        try:
            decoded = decode_frame(raw if isinstance(raw, bytes) else raw.encode())
        except FrameError:
            decoded = None
        if decoded is None or decoded[0].frame_type != FRAME_HELLO:
            await self._reject(ws, "BAD_TOKEN", "first frame must be HELLO")
            return
        token = decoded[0].payload.decode("utf-8", errors="replace")
        try:
            self.accept_peer(token)
        except SensorError as exc:
            await self._reject(ws, exc.code, str(exc))
            return
        self._ws = ws
        self.state.session = {
            "user_id": self._token_users.pop(token, ""),
            "session_token": token,
            "started_ms": self.clock.now_ms(),
        }
        self.state.mode = "PSD_ONLY"
        self._session_event.set()
        self._session_started_s = self.clock.now()
        self._dec_accum_s = 0.0
        self._dec_entered_s = None
        self._last_report_s = self.clock.now()
        self._next_deadline = None
        self.psd_stream.reset()
        self._chan_history.clear()
        self._chan_next_s = 0.0
        self.fe.tune(self.cfg.center_freq_hz)
        self._switch_decoder(registry_lookup(self.cfg.center_freq_hz))
        try:
            async for raw in ws:
                try:
                    decoded = decode_frame(raw if isinstance(raw, bytes) else raw.encode())
                except FrameError:
                    continue
                if decoded is None or decoded[0].frame_type != FRAME_CONTROL:
                    continue
                try:
                    self.apply_control(parse_control(decoded[0].payload.decode()))
                except (ControlError, SensorError, SourceError, DecodeError) as exc:
                    code = getattr(exc, "code", "ERROR")
                    payload = json.dumps({"code": code, "message": str(exc)}).encode()
                    await self._send_frame(FRAME_ERROR, payload)
        except ConnectionClosed:
            pass
        finally:
            if self._ws is ws:
                await self._end_session("client_disconnect")

    def accept_peer(self, token: str) -> None:
        """Admission check for a HELLO token; raises instead of mutating."""
        if self.state.session is not None:
            raise SensorError("BUSY", "a session is already active")
        if token in self._used_tokens or token not in self._pending_tokens:
            raise SensorError("BAD_TOKEN", "token unknown or already used")
        if self.clock.now_ms() > self._pending_tokens[token]:
            raise SensorError("EXPIRED", "token outlived its offer")
        self._pending_tokens.pop(token)
        self._used_tokens.add(token)

    async def _reject(self, ws, code: str, message: str) -> None:
        payload = json.dumps({"code": code, "message": message}).encode()
        try:
            await ws.send(encode_frame(PeerFrame(FRAME_ERROR, payload)))
            await ws.close()
        except ConnectionClosed:
            pass

    async def _end_session(self, cause: str) -> None:
        if self.state.session is None:
            return
        token = self.state.session["session_token"]
        session_s, dec_s = self._usage_now()
        self.state = SensorMode()
        self._session_event.clear()
        self._switch_decoder(None)
        self._ws = None
        self.psd_stream.reset()
        self._chan_history.clear()
        self._next_deadline = None
        await self._send_signaling(
            SignalingMessage(
                kind="usage_report",
                sensor_id=self.cfg.sensor_id,
                session_token=token,
                meta={
                    "event": "ended",
                    "cause": cause,
                    "session_seconds": session_s,
                    "dec_seconds": dec_s,
                },
            )
        )

    def _usage_now(self) -> tuple[float, float]:
        session_s = self.clock.now() - self._session_started_s
        dec_s = self._dec_accum_s
        if self._dec_entered_s is not None:
            dec_s += self.clock.now() - self._dec_entered_s
        return session_s, dec_s

    # ---- control ------------------------------------------------------------

    def apply_control(self, msg: ControlMessage) -> SensorMode:
        if self.state.session is None:
            raise SensorError("UNAUTHORIZED", "no active session owns this channel")
        if msg.cmd == "tune":
            self.fe.tune(msg.freq_hz)
            self.psd_stream.reset()
            self._chan_history.clear()
            self._switch_decoder(registry_lookup(msg.freq_hz))
        elif msg.cmd == "gain":
            self.fe.set_gain(msg.gain_db)
        elif msg.cmd == "volume":
            self._volume = float(msg.level)
        elif msg.cmd == "decoder":
            desc = descriptor_for(msg.decoder_id)
            if not desc.enabled:
                raise SensorError("UNSUPPORTED", f"decoder {msg.decoder_id!r} is a stub")
            if not desc.covers(self.fe.center_freq_hz):
                raise SensorError(
                    "OUT_OF_RANGE",
                    f"{msg.decoder_id} does not cover {self.fe.center_freq_hz} Hz",
                )
            self._switch_decoder(desc)
        self.state.check()
        return replace(self.state)

    def _switch_decoder(self, desc) -> None:
        if self._dec_entered_s is not None:
            self._dec_accum_s += self.clock.now() - self._dec_entered_s
            self._dec_entered_s = None
        self._decoder = None
        self._resampler = None
        self._pairer = None
        self._pcm_pending = []
        self._pcm_pending_len = 0
        self.state.active_decoder = None
        if self.state.session is not None:
            self.state.mode = "PSD_ONLY"
        if desc is None or self.state.session is None:
            if self.fe.sample_rate_hz != self._fe_rate0:
                self.fe.set_sample_rate(self._fe_rate0)
                self.psd_stream.reset()
                self._chan_history.clear()
            return
        if self._fe_rate0 % desc.input_rate_hz == 0:
            self.fe.set_sample_rate(self._fe_rate0)
            self._resampler = (
                Resampler(1, self._fe_rate0 // desc.input_rate_hz)
                if self._fe_rate0 != desc.input_rate_hz
                else None
            )
        else:
            # fractional resampling smears sub-microsecond chips; run the
            # front end at the decoder rate instead
            self.fe.set_sample_rate(desc.input_rate_hz)
            self._resampler = None
        self._decoder = make_decoder(desc.decoder_id)
        self._decoder_kind = desc.output_kind
        self._pairer = CprPairer() if desc.decoder_id == "adsb" else None
        self._adpcm = AdpcmEncoder()
        self.state.active_decoder = desc.decoder_id
        self.state.mode = "DECODING"
        self._dec_entered_s = self.clock.now()
        self.state.check()

    # ---- housekeeping ---------------------------------------------------------

    async def _housekeeping_task(self) -> None:
        while self._running:
            await self.clock.sleep(1.0)
            now_ms = self.clock.now_ms()
            for token, expires_ms in list(self._pending_tokens.items()):
                if now_ms > expires_ms:
                    self._pending_tokens.pop(token)
                    self._used_tokens.add(token)
                    await self._send_signaling(
                        SignalingMessage(
                            kind="usage_report",
                            sensor_id=self.cfg.sensor_id,
                            session_token=token,
                            meta={"event": "token_expired"},
                        )
                    )
            if self.state.session is not None:
                now = self.clock.now()
                if now - self._last_report_s >= USAGE_REPORT_INTERVAL_S:
                    self._last_report_s = now
                    session_s, dec_s = self._usage_now()
                    await self._send_signaling(
                        SignalingMessage(
                            kind="usage_report",
                            sensor_id=self.cfg.sensor_id,
                            session_token=self.state.session["session_token"],
                            meta={
                                "event": "progress",
                                "session_seconds": session_s,
                                "dec_seconds": dec_s,
                            },
                        )
                    )
