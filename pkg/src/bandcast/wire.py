"""Message formats shared by every component.

Three layers live here:

* the binary peer-channel frame codec (client <-> sensor),
* the JSON control commands carried inside CONTROL frames,
* the newline-delimited JSON signaling messages (backend <-> sensor,
  and the same schemas served over HTTP by the backend).

All multi-byte integers and floats are little-endian. Everything in this
module is a pure function over byte buffers or strings; no shared state.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

# Peer frame type bytes.
FRAME_PSD = 0x01
FRAME_DECODED_JSON = 0x02
FRAME_AUDIO = 0x03
FRAME_CONTROL = 0x04
FRAME_CHANNELS = 0x05
FRAME_ERROR = 0x06
FRAME_HELLO = 0x07

FRAME_TYPES = frozenset(
    {
        FRAME_PSD,
        FRAME_DECODED_JSON,
        FRAME_AUDIO,
        FRAME_CONTROL,
        FRAME_CHANNELS,
        FRAME_ERROR,
        FRAME_HELLO,
    }
)

# Largest legitimate payload (an fft-8192 PSD) is ~32 KiB; the 1 MiB cap
# exists to catch corrupted length fields, not to size buffers.
MAX_PAYLOAD = 1 << 20

FRAME_HEADER = struct.Struct("<BI")

PSD_HEADER = struct.Struct("<QQIH")  # timestamp_ms, center_hz, rate_hz, fft_size
PSD_HEADER_SIZE = PSD_HEADER.size  # 22

CONTROL_COMMANDS = {
    "tune": ("freq_hz",),
    "gain": ("gain_db",),
    "decoder": ("decoder_id",),
    "volume": ("level",),
}

SIGNALING_KINDS = frozenset(
    {
        "connect_request",
        "connect_offer",
        "connect_reject",
        "heartbeat",
        "register",
        "campaign_assign",
        "usage_report",
    }
)

REJECT_REASONS = frozenset({"BUSY", "OFFLINE", "UNAUTHORIZED", "UNKNOWN_SENSOR"})


class FrameError(ValueError):
    """Peer-frame codec failure. ``code`` is OVERSIZE or BAD_TYPE."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class ControlError(ValueError):
    """Control-message parse failure. ``code`` is MALFORMED, SCHEMA or RANGE."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class SignalingError(ValueError):
    """Signaling-message parse failure. ``code`` is MALFORMED or SCHEMA."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class PeerFrame:
    frame_type: int
    payload: bytes = b""


def encode_frame(frame: PeerFrame) -> bytes:
    """Encode a PeerFrame as [type u8][payload length u32 LE][payload]."""
    if frame.frame_type not in FRAME_TYPES:
        raise FrameError("BAD_TYPE", f"unknown frame type 0x{frame.frame_type:02x}")
    if len(frame.payload) > MAX_PAYLOAD:
        raise FrameError("OVERSIZE", f"payload of {len(frame.payload)} bytes exceeds {MAX_PAYLOAD}")
    return FRAME_HEADER.pack(frame.frame_type, len(frame.payload)) + bytes(frame.payload)


def decode_frame(buf: bytes | bytearray | memoryview) -> tuple[PeerFrame, int] | None:
    """Decode one frame from the head of ``buf``.

    Returns (frame, bytes consumed), or None when the buffer holds an
    incomplete frame (caller should read more). Never raises on truncation;
    raises FrameError for an unknown type byte or an oversize declared
    length, both of which indicate a corrupted stream.
    """
    if len(buf) < FRAME_HEADER.size:
        return None
    frame_type, length = FRAME_HEADER.unpack_from(buf)
    if frame_type not in FRAME_TYPES:
        raise FrameError("BAD_TYPE", f"unknown frame type 0x{frame_type:02x}")
    if length > MAX_PAYLOAD:
        raise FrameError("OVERSIZE", f"declared payload of {length} bytes exceeds {MAX_PAYLOAD}")
    total = FRAME_HEADER.size + length
    if len(buf) < total:
        return None
    payload = bytes(buf[FRAME_HEADER.size : total])
    return PeerFrame(frame_type, payload), total


class FrameAssembler:
    """Incremental frame parser for an ordered byte stream."""

    def __init__(self) -> None:
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[PeerFrame]:
        """Append bytes and return every complete frame now available."""
        self._buf.extend(data)
        frames: list[PeerFrame] = []
        while True:
            result = decode_frame(self._buf)
            if result is None:
                return frames
            frame, consumed = result
            frames.append(frame)
            del self._buf[:consumed]


@dataclass(frozen=True)
class PsdPayload:
    """One averaged PSD snapshot, bins ordered center-fs/2 .. center+fs/2."""

    timestamp_ms: int
    center_freq_hz: int
    sample_rate_hz: int
    power_db: np.ndarray  # float32, length = fft_size

    @property
    def fft_size(self) -> int:
        return len(self.power_db)

    def bin_width_hz(self) -> float:
        return self.sample_rate_hz / self.fft_size

    def bin_freq_hz(self, k: int | np.ndarray) -> float | np.ndarray:
        """Absolute frequency of bin k (index fft_size/2 is the center)."""
        return self.center_freq_hz + (np.asarray(k) - self.fft_size // 2) * self.bin_width_hz()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PsdPayload):
            return NotImplemented
        return (
            self.timestamp_ms == other.timestamp_ms
            and self.center_freq_hz == other.center_freq_hz
            and self.sample_rate_hz == other.sample_rate_hz
            and np.array_equal(self.power_db, other.power_db)
        )


def _check_fft_size(n: int) -> None:
    if not (64 <= n <= 8192) or n & (n - 1):
        raise FrameError("BAD_TYPE", f"fft_size {n} must be a power of two in [64, 8192]")


def encode_psd_payload(psd: PsdPayload) -> bytes:
    n = psd.fft_size
    _check_fft_size(n)
    power = np.ascontiguousarray(psd.power_db, dtype="<f4")
    out = PSD_HEADER.pack(psd.timestamp_ms, psd.center_freq_hz, psd.sample_rate_hz, n) + power.tobytes()
    assert len(out) == PSD_HEADER_SIZE + 4 * n
    return out


def decode_psd_payload(payload: bytes) -> PsdPayload:
    if len(payload) < PSD_HEADER_SIZE:
        raise FrameError("BAD_TYPE", f"PSD payload of {len(payload)} bytes is shorter than the header")
    timestamp_ms, center, rate, n = PSD_HEADER.unpack_from(payload)
    _check_fft_size(n)
    if len(payload) != PSD_HEADER_SIZE + 4 * n:
        raise FrameError(
            "BAD_TYPE",
            f"PSD payload of {len(payload)} bytes does not match fft_size {n}",
        )
    power = np.frombuffer(payload, dtype="<f4", count=n, offset=PSD_HEADER_SIZE)
    return PsdPayload(timestamp_ms, center, rate, power.copy())


@dataclass(frozen=True)
class ControlMessage:
    """A validated client command: exactly the fields its cmd requires."""

    cmd: str
    freq_hz: int | None = None
    gain_db: float | None = None
    decoder_id: str | None = None
    level: float | None = None


def parse_control(text: str | bytes) -> ControlMessage:
    """Parse and validate one control command from JSON text."""
    try:
        obj = json.loads(text)
    except (ValueError, UnicodeDecodeError) as exc:
        raise ControlError("MALFORMED", f"not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ControlError("SCHEMA", "control message must be a JSON object")
    cmd = obj.get("cmd")
    if cmd not in CONTROL_COMMANDS:
        raise ControlError("SCHEMA", f"unknown cmd {cmd!r}")
    required = CONTROL_COMMANDS[cmd]
    expected = {"cmd", *required}
    if set(obj) != expected:
        raise ControlError("SCHEMA", f"cmd {cmd!r} requires exactly fields {sorted(expected)}, got {sorted(obj)}")

    if cmd == "tune":
        freq = obj["freq_hz"]
        if not isinstance(freq, int) or isinstance(freq, bool):
            raise ControlError("SCHEMA", "freq_hz must be an integer")
        if freq < 0:
            raise ControlError("RANGE", f"freq_hz {freq} is negative")
        return ControlMessage(cmd="tune", freq_hz=freq)
    if cmd == "gain":
        gain = obj["gain_db"]
        if not isinstance(gain, (int, float)) or isinstance(gain, bool):
            raise ControlError("SCHEMA", "gain_db must be a number")
        return ControlMessage(cmd="gain", gain_db=float(gain))
    if cmd == "decoder":
        decoder_id = obj["decoder_id"]
        if not isinstance(decoder_id, str) or not decoder_id:
            raise ControlError("SCHEMA", "decoder_id must be a non-empty string")
        return ControlMessage(cmd="decoder", decoder_id=decoder_id)
    # volume
    level = obj["level"]
    if not isinstance(level, (int, float)) or isinstance(level, bool):
        raise ControlError("SCHEMA", "level must be a number")
    if not 0.0 <= level <= 1.0:
        raise ControlError("RANGE", f"level {level} outside [0, 1]")
    return ControlMessage(cmd="volume", level=float(level))


def encode_control(msg: ControlMessage) -> str:
    obj: dict = {"cmd": msg.cmd}
    for name in CONTROL_COMMANDS[msg.cmd]:
        value = getattr(msg, name)
        if value is None:
            raise ControlError("SCHEMA", f"cmd {msg.cmd!r} requires field {name}")
        obj[name] = value
    return json.dumps(obj)


@dataclass
class SignalingMessage:
    """One backend/sensor/client signaling message.

    ``meta`` carries kind-specific extras (campaign freq lists, usage
    counters, sensor registration details) without widening the schema.
    """

    kind: str
    sensor_id: str | None = None
    user_id: str | None = None
    session_token: str | None = None
    endpoint: str | None = None
    reason: str | None = None
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        obj: dict = {"kind": self.kind}
        for name in ("sensor_id", "user_id", "session_token", "endpoint", "reason"):
            value = getattr(self, name)
            if value is not None:
                obj[name] = value
        if self.meta:
            obj["meta"] = self.meta
        return json.dumps(obj, separators=(",", ":"))

    def to_line(self) -> bytes:
        return self.to_json().encode() + b"\n"


def parse_signaling(text: str | bytes) -> SignalingMessage:
    try:
        obj = json.loads(text)
    except (ValueError, UnicodeDecodeError) as exc:
        raise SignalingError("MALFORMED", f"not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise SignalingError("SCHEMA", "signaling message must be a JSON object")
    kind = obj.get("kind")
    if kind not in SIGNALING_KINDS:
        raise SignalingError("SCHEMA", f"unknown kind {kind!r}")
    allowed = {"kind", "sensor_id", "user_id", "session_token", "endpoint", "reason", "meta"}
    extra = set(obj) - allowed
    if extra:
        raise SignalingError("SCHEMA", f"unexpected fields {sorted(extra)}")
    meta = obj.get("meta", {})
    if not isinstance(meta, dict):
        raise SignalingError("SCHEMA", "meta must be an object")
    msg = SignalingMessage(
        kind=kind,
        sensor_id=obj.get("sensor_id"),
        user_id=obj.get("user_id"),
        session_token=obj.get("session_token"),
        endpoint=obj.get("endpoint"),
        reason=obj.get("reason"),
        meta=meta,
    )
    if kind == "connect_offer" and (not msg.endpoint or not msg.session_token):
        raise SignalingError("SCHEMA", "connect_offer requires endpoint and session_token")
    if kind == "connect_reject":
        if msg.reason not in REJECT_REASONS:
            raise SignalingError("SCHEMA", f"connect_reject reason must be one of {sorted(REJECT_REASONS)}")
    if kind in ("register", "heartbeat", "usage_report", "campaign_assign") and not msg.sensor_id:
        raise SignalingError("SCHEMA", f"{kind} requires sensor_id")
    return msg
