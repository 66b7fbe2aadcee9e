"""Controller and signaling server.

Keeps the sensor registry with liveness, brokers client sessions onto
sensors with single-use tokens, meters usage reported by sensors, and
serves the HTTP API the UI talks to. Spectrum data never transits this
process: clients stream straight from the sensor they were brokered to.
"""

from __future__ import annotations

import asyncio
import json
import math
import secrets
import socket
import sqlite3
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import uvicorn
from fastapi import Depends, FastAPI, Header, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware

from .clock import Clock
from .rewards import (
    RewardParams,
    RewardStatement,
    SensorWeek,
    settle_week,
    usage_charge_mtk,
)
from .wire import REJECT_REASONS, SignalingMessage, SignalingError, parse_signaling

SCHEMA_VERSION = 1
HEARTBEAT_INTERVAL_S = 30.0
LIVENESS_TIMEOUT_S = 90.0
TOKEN_TTL_S = 30.0


class BackendError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


def region_cell(lat: float, lon: float) -> str:
    """1 degree by 1 degree grid cell holding a location."""
    return f"{math.floor(lat)},{math.floor(lon)}"


@dataclass
class SensorEntry:
    sensor_id: str
    owner_id: str
    region_cell: str
    deployed_day: int
    endpoint: str
    last_heartbeat_ms: int
    registry: list = field(default_factory=list)
    online_seconds: float = 0.0
    writer: asyncio.StreamWriter | None = None
    bytes_in: int = 0
    bytes_out: int = 0
    connected_ms: int = 0

    def state(self, now_ms: int, busy: bool) -> str:
        if now_ms - self.last_heartbeat_ms > LIVENESS_TIMEOUT_S * 1000:
            return "OFFLINE"
        return "ONLINE_BUSY" if busy else "ONLINE_IDLE"


@dataclass
class SessionRecord:
    session_id: str
    sensor_id: str
    user_id: str
    session_token: str
    started_ms: int
    expires_ms: int
    ended_ms: int | None = None
    pipeline: str = "psd"
    session_seconds: float = 0.0
    dec_seconds: float = 0.0
    tokens_charged_mtk: int = 0
    cause: str = ""

    @property
    def open(self) -> bool:
        return self.ended_ms is None


class Store:
    """Embedded persistence for registry, sessions, users, statements."""

    def __init__(self, path: str | Path = ":memory:"):
        self.db = sqlite3.connect(str(path))
        self.db.execute("PRAGMA journal_mode=MEMORY")
        self._migrate()

    def _migrate(self) -> None:
        cur = self.db.cursor()
        cur.execute(
            "CREATE TABLE IF NOT EXISTS meta (key TEXT PRIMARY KEY, value TEXT)"
        )
        row = cur.execute("SELECT value FROM meta WHERE key='schema_version'").fetchone()
        if row is None:
            cur.execute(
                "INSERT INTO meta VALUES ('schema_version', ?)", (str(SCHEMA_VERSION),)
            )
        elif int(row[0]) != SCHEMA_VERSION:
            raise BackendError("SCHEMA_VERSION", f"store has schema {row[0]}")
        cur.executescript(
            """
            CREATE TABLE IF NOT EXISTS sensors (
                sensor_id TEXT PRIMARY KEY, owner_id TEXT, region_cell TEXT,
                deployed_day INTEGER, endpoint TEXT, last_heartbeat_ms INTEGER,
                registry_json TEXT, online_seconds REAL);
            CREATE TABLE IF NOT EXISTS users (
                user_id TEXT PRIMARY KEY, balance_mtk INTEGER);
            CREATE TABLE IF NOT EXISTS sessions (
                session_id TEXT PRIMARY KEY, sensor_id TEXT, user_id TEXT,
                pipeline TEXT, started_ms INTEGER, ended_ms INTEGER,
                session_seconds REAL, dec_seconds REAL,
                tokens_charged_mtk INTEGER, cause TEXT);
            CREATE TABLE IF NOT EXISTS statements (
                week_id INTEGER PRIMARY KEY, body TEXT);
            """
        )
        self.db.commit()

    def save_sensor(self, e: SensorEntry) -> None:
        self.db.execute(
            "INSERT OR REPLACE INTO sensors VALUES (?,?,?,?,?,?,?,?)",
            (
                e.sensor_id,
                e.owner_id,
                e.region_cell,
                e.deployed_day,
                e.endpoint,
                e.last_heartbeat_ms,
                json.dumps(e.registry),
                e.online_seconds,
            ),
        )
        self.db.commit()

    def save_user(self, user_id: str, balance_mtk: int) -> None:
        self.db.execute(
            "INSERT OR REPLACE INTO users VALUES (?,?)", (user_id, balance_mtk)
        )
        self.db.commit()

    def load_user(self, user_id: str) -> int | None:
        row = self.db.execute(
            "SELECT balance_mtk FROM users WHERE user_id=?", (user_id,)
        ).fetchone()
        return None if row is None else int(row[0])

    def save_session(self, s: SessionRecord) -> None:
        self.db.execute(
            "INSERT OR REPLACE INTO sessions VALUES (?,?,?,?,?,?,?,?,?,?)",
            (
                s.session_id,
                s.sensor_id,
                s.user_id,
                s.pipeline,
                s.started_ms,
                s.ended_ms,
                s.session_seconds,
                s.dec_seconds,
                s.tokens_charged_mtk,
                s.cause,
            ),
        )
        self.db.commit()

    def save_statement(self, statement: RewardStatement) -> None:
        self.db.execute(
            "INSERT OR REPLACE INTO statements VALUES (?,?)",
            (statement.week_id, statement.to_json()),
        )
        self.db.commit()

    def statements(self) -> list[RewardStatement]:
        rows = self.db.execute(
            "SELECT body FROM statements ORDER BY week_id"
        ).fetchall()
        return [RewardStatement.from_json(r[0]) for r in rows]

    def close(self) -> None:
        self.db.close()


def load_credentials(path: str | Path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise BackendError("IO", str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise BackendError("BAD_CREDENTIALS", str(exc)) from exc
    if "users" not in doc or "sensors" not in doc:
        raise BackendError("BAD_CREDENTIALS", "need users and sensors lists")
    return doc


class Backend:
    """The whole controller: registry, brokering, metering, HTTP."""

    def __init__(
        self,
        credentials: dict,
        store_path: str | Path = ":memory:",
        host: str = "127.0.0.1",
        control_port: int = 0,
        http_port: int = 0,
        clock: Clock | None = None,
        reward_params: RewardParams | None = None,
    ):
        self.clock = clock or Clock()
        self.params = reward_params or RewardParams()
        self.host = host
        self._control_port = control_port
        self._http_port = http_port
        self.store = Store(store_path)
        self.user_tokens: dict[str, str] = {}  # bearer token -> user_id
        self.balances: dict[str, int] = {}
        self.sensor_credentials: dict[str, str] = {}  # sensor_id -> token
        self.sensor_owners: dict[str, str] = {}
        for user in credentials.get("users", []):
            self.user_tokens[user["token"]] = user["user_id"]
            stored = self.store.load_user(user["user_id"])
            self.balances[user["user_id"]] = (
                stored if stored is not None else user.get("balance_mtk", 0)
            )
        for sensor in credentials.get("sensors", []):
            self.sensor_credentials[sensor["sensor_id"]] = sensor["token"]
            self.sensor_owners[sensor["sensor_id"]] = sensor.get("owner_id", "")
        self.sensors: dict[str, SensorEntry] = {}
        self.sessions: dict[str, SessionRecord] = {}  # session_id -> record
        self._by_token: dict[str, SessionRecord] = {}
        self.campaign: dict = {
            "freqs_hz": [88_800_000 + i * 2_400_000 for i in range(9)],
            "dwell_ms": 500.0,
        }
        self.busy_rejections = 0
        self.offers_minted = 0
        self._server: asyncio.Server | None = None
        self._http: uvicorn.Server | None = None
        self._tasks: list[asyncio.Task] = []
        self.control_port = 0
        self.http_port = 0

    # ---- lifecycle ------------------------------------------------------

    async def start(self) -> None:
        self._server = await asyncio.start_server(
            self._handle_sensor, self.host, self._control_port
        )
        self.control_port = self._server.sockets[0].getsockname()[1]
        app = create_app(self)
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind((self.host, self._http_port))
        self.http_port = sock.getsockname()[1]
        config = uvicorn.Config(app, log_level="critical", access_log=False)
        self._http = uvicorn.Server(config)
        self._tasks.append(asyncio.create_task(self._http.serve(sockets=[sock])))
        self._tasks.append(asyncio.create_task(self._liveness_sweeper()))
        while not self._http.started:
            await asyncio.sleep(0.01)

    async def stop(self) -> None:
        if self._http is not None:
            self._http.should_exit = True
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
        for task in self._tasks:
            if not task.done():
                try:
                    await asyncio.wait_for(task, timeout=3)
                except (asyncio.TimeoutError, asyncio.CancelledError):
                    task.cancel()
        self.store.close()

    # ---- sensor control channel -----------------------------------------

    async def _handle_sensor(
        self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter
    ) -> None:
        entry: SensorEntry | None = None
        try:
            while True:
                line = await reader.readline()
                if not line:
                    break
                if entry is not None:
                    entry.bytes_in += len(line)
                try:
                    msg = parse_signaling(line.decode())
                except (SignalingError, UnicodeDecodeError):
                    continue
                if msg.kind == "register":
                    entry = self._register(msg, writer, len(line))
                    if entry is None:
                        await self._send_line(
                            writer,
                            SignalingMessage(
                                kind="connect_reject",
                                sensor_id=msg.sensor_id,
                                reason="UNAUTHORIZED",
                            ),
                            None,
                        )
                        break
                    await self._send_line(
                        writer,
                        SignalingMessage(
                            kind="campaign_assign",
                            sensor_id=entry.sensor_id,
                            meta=dict(self.campaign),
                        ),
                        entry,
                    )
                elif entry is None:
                    continue
                elif msg.kind == "heartbeat":
                    self._heartbeat(entry)
                elif msg.kind == "usage_report":
                    self._usage_report(entry, msg)
        finally:
            if entry is not None and entry.writer is writer:
                entry.writer = None
                self._close_open_sessions(entry.sensor_id, "sensor_lost")
            writer.close()

    def _register(
        self, msg: SignalingMessage, writer: asyncio.StreamWriter, line_len: int
    ) -> SensorEntry | None:
        meta = msg.meta
        credential = meta.get("credential", "")
        expected = self.sensor_credentials.get(msg.sensor_id)
        if expected is None or credential != expected:
            return None
        now = self.clock.now_ms()
        entry = self.sensors.get(msg.sensor_id)
        lat, lon = meta.get("location", [0.0, 0.0])
        if entry is None:
            entry = SensorEntry(
                sensor_id=msg.sensor_id,
                owner_id=self.sensor_owners.get(msg.sensor_id, ""),
                region_cell=region_cell(lat, lon),
                deployed_day=int(meta.get("deploy_day", self._network_day())),
                endpoint=meta.get("endpoint", ""),
                last_heartbeat_ms=now,
                registry=meta.get("registry", []),
            )
            self.sensors[msg.sensor_id] = entry
        else:
            entry.endpoint = meta.get("endpoint", entry.endpoint)
            entry.registry = meta.get("registry", entry.registry)
            entry.region_cell = region_cell(lat, lon)
            entry.last_heartbeat_ms = now
        entry.writer = writer
        entry.connected_ms = now
        entry.bytes_in += line_len
        self.store.save_sensor(entry)
        return entry

    def _heartbeat(self, entry: SensorEntry) -> None:
        now = self.clock.now_ms()
        gap_s = (now - entry.last_heartbeat_ms) / 1000
        if gap_s <= LIVENESS_TIMEOUT_S:
            entry.online_seconds += gap_s
        entry.last_heartbeat_ms = now
        self.store.save_sensor(entry)

    def _usage_report(self, entry: SensorEntry, msg: SignalingMessage) -> None:
        record = self._by_token.get(msg.session_token or "")
        if record is None or record.sensor_id != entry.sensor_id:
            return
        meta = msg.meta
        event = meta.get("event", "progress")
        record.session_seconds = float(meta.get("session_seconds", record.session_seconds))
        record.dec_seconds = float(meta.get("dec_seconds", record.dec_seconds))
        if event == "token_expired":
            self._close_session(record, "expired")
        elif event == "ended":
            self._close_session(record, meta.get("cause", "client_disconnect"))
        else:
            self.store.save_session(record)

    async def _send_line(
        self,
        writer: asyncio.StreamWriter,
        msg: SignalingMessage,
        entry: SensorEntry | None,
    ) -> None:
        data = msg.to_line()
        if entry is not None:
            entry.bytes_out += len(data)
        writer.write(data)
        try:
            await writer.drain()
        except ConnectionError:
            pass

    # ---- brokering -------------------------------------------------------

    def _network_day(self) -> int:
        return max(1, int(self.clock.wall() // 86_400) % 100_000)

    def _open_session_for(self, sensor_id: str) -> SessionRecord | None:
        for record in self.sessions.values():
            if record.sensor_id == sensor_id and record.open:
                return record
        return None

    def broker_session(self, user_id: str, sensor_id: str) -> SignalingMessage:
        """Mint a single-use token for an idle sensor, atomically."""
        if self.balances.get(user_id, 0) <= 0:
            raise BackendError("INSUFFICIENT_TOKENS", "balance is empty")
        entry = self.sensors.get(sensor_id)
        if entry is None:
            return self._reject(sensor_id, "UNKNOWN_SENSOR")
        now = self.clock.now_ms()
        busy = self._open_session_for(sensor_id) is not None
        state = entry.state(now, busy)
        if state == "OFFLINE":
            return self._reject(sensor_id, "OFFLINE")
        if state == "ONLINE_BUSY":
            self.busy_rejections += 1
            return self._reject(sensor_id, "BUSY")
        token = secrets.token_urlsafe(16)
        record = SessionRecord(
            session_id=uuid.uuid4().hex,
            sensor_id=sensor_id,
            user_id=user_id,
            session_token=token,
            started_ms=now,
            expires_ms=now + int(TOKEN_TTL_S * 1000),
        )
        self.sessions[record.session_id] = record
        self._by_token[token] = record
        self.offers_minted += 1
        self.store.save_session(record)
        if entry.writer is not None:
            request = SignalingMessage(
                kind="connect_request",
                sensor_id=sensor_id,
                user_id=user_id,
                session_token=token,
                meta={"expires_ms": record.expires_ms},
            )
            asyncio.ensure_future(self._send_line(entry.writer, request, entry))
        return SignalingMessage(
            kind="connect_offer",
            sensor_id=sensor_id,
            user_id=user_id,
            session_token=token,
            endpoint=entry.endpoint,
        )

    def _reject(self, sensor_id: str, reason: str) -> SignalingMessage:
        assert reason in REJECT_REASONS
        return SignalingMessage(
            kind="connect_reject", sensor_id=sensor_id, reason=reason
        )

    def _close_session(self, record: SessionRecord, cause: str) -> None:
        if not record.open:
            return
        record.ended_ms = self.clock.now_ms()
        record.cause = cause
        if record.session_seconds > 0 and (
            record.dec_seconds > 0.5 * record.session_seconds
        ):
            record.pipeline = "dec"
            record.tokens_charged_mtk = usage_charge_mtk(
                record.dec_seconds, self.params
            )
        else:
            record.pipeline = "psd"
            record.tokens_charged_mtk = 0
        if record.tokens_charged_mtk:
            balance = self.balances.get(record.user_id, 0)
            self.balances[record.user_id] = balance - record.tokens_charged_mtk
            self.store.save_user(record.user_id, self.balances[record.user_id])
        self._by_token.pop(record.session_token, None)
        self.store.save_session(record)

    def _close_open_sessions(self, sensor_id: str, cause: str) -> None:
        for record in list(self.sessions.values()):
            if record.sensor_id == sensor_id and record.open:
                self._close_session(record, cause)

    async def _liveness_sweeper(self) -> None:
        while self._http is None or not self._http.should_exit:
            await self.clock.sleep(5.0)
            now = self.clock.now_ms()
            for entry in self.sensors.values():
                busy = self._open_session_for(entry.sensor_id) is not None
                if entry.state(now, busy) == "OFFLINE" and busy:
                    self._close_open_sessions(entry.sensor_id, "sensor_lost")
            for record in list(self.sessions.values()):
                if (
                    record.open
                    and record.session_seconds == 0
                    and now > record.expires_ms + 5_000
                ):
                    # Sensor never saw a client and its expiry notice got
                    # lost; reclaim the slot from the backend side.
                    self._close_session(record, "expired")

    # ---- queries for the HTTP layer ---------------------------------------

    def sensor_rows(self, state_filter: str | None = None) -> list[dict]:
        now = self.clock.now_ms()
        rows = []
        for entry in sorted(self.sensors.values(), key=lambda e: e.sensor_id):
            busy = self._open_session_for(entry.sensor_id) is not None
            state = entry.state(now, busy)
            if state_filter == "online" and state == "OFFLINE":
                continue
            if state_filter in ("ONLINE_IDLE", "ONLINE_BUSY", "OFFLINE"):
                if state != state_filter:
                    continue
            rows.append(
                {
                    "sensor_id": entry.sensor_id,
                    "owner_id": entry.owner_id,
                    "state": state,
                    "region_cell": entry.region_cell,
                    "endpoint": entry.endpoint,
                    "registry": entry.registry,
                }
            )
        return rows

    def signaling_rates_kbps(self) -> dict[str, float]:
        """Per-sensor control-channel traffic since it connected."""
        now = self.clock.now_ms()
        out = {}
        for entry in self.sensors.values():
            dt = (now - entry.connected_ms) / 1000
            if dt <= 0:
                continue
            out[entry.sensor_id] = (entry.bytes_in + entry.bytes_out) * 8 / 1000 / dt
        return out

    def settle_metered_week(self, week_id: int) -> RewardStatement:
        """Settle a statement from metered online time and sessions."""
        weeks = []
        cells: dict[str, int] = {}
        for entry in self.sensors.values():
            cells[entry.region_cell] = cells.get(entry.region_cell, 0) + 1
        for entry in self.sensors.values():
            dec_s = sum(
                r.dec_seconds
                for r in self.sessions.values()
                if r.sensor_id == entry.sensor_id and r.pipeline == "dec"
            )
            weeks.append(
                SensorWeek(
                    sensor_id=entry.sensor_id,
                    owner_id=entry.owner_id,
                    density=cells[entry.region_cell],
                    deploy_day=entry.deployed_day,
                    days_psd=min(entry.online_seconds / 86_400, 7.0),
                    days_dec=min(dec_s / 86_400, 7.0),
                )
            )
        statement = settle_week(weeks, self.params, week_id)
        self.store.save_statement(statement)
        return statement

    def settle_declared_week(
        self, week_id: int, weeks: list[SensorWeek]
    ) -> RewardStatement:
        statement = settle_week(weeks, self.params, week_id)
        self.store.save_statement(statement)
        return statement


def create_app(backend: Backend) -> FastAPI:
    app = FastAPI(title="spectrum backend", docs_url=None, redoc_url=None)
    # the browser client is served from its own origin; auth stays bearer-token
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["GET", "POST"],
        allow_headers=["Authorization", "Content-Type"],
    )

    async def current_user(authorization: str | None = Header(default=None)) -> str:
        if not authorization or not authorization.startswith("Bearer "):
            raise HTTPException(status_code=401, detail="UNAUTHORIZED")
        user = backend.user_tokens.get(authorization.removeprefix("Bearer "))
        if user is None:
            raise HTTPException(status_code=401, detail="UNAUTHORIZED")
        return user

    @app.get("/api/sensors")
    async def list_sensors(
        state: str | None = None, user: str = Depends(current_user)
    ) -> list[dict]:
        return backend.sensor_rows(state)

    @app.get("/api/me")
    async def me(user: str = Depends(current_user)) -> dict:
        return {"user_id": user, "balance_mtk": backend.balances.get(user, 0)}

    @app.post("/api/connect")
    async def connect(request: Request, user: str = Depends(current_user)) -> dict:
        try:
            body = await request.json()
        except json.JSONDecodeError:
            raise HTTPException(status_code=400, detail="MALFORMED") from None
        sensor_id = body.get("sensor_id")
        if not isinstance(sensor_id, str):
            raise HTTPException(status_code=400, detail="SCHEMA")
        try:
            reply = backend.broker_session(user, sensor_id)
        except BackendError as exc:
            raise HTTPException(status_code=402, detail=exc.code) from exc
        return json.loads(reply.to_json())

    @app.get("/api/statements")
    async def statements(user: str = Depends(current_user)) -> list[dict]:
        return [json.loads(s.to_json()) for s in backend.store.statements()]

    return app
