"""Mode S / ADS-B decoder: preamble detection, PPM bit slicing, CRC-24,
and DF17 field extraction (identity, altitude, CPR position).

Input is magnitude-detected I/Q at 2 Msps, so each half-microsecond chip
is exactly one sample: a preamble pulse lands on sample offsets 0, 2, 7
and 9, and every data bit is a high/low chip pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dsp import IqChunk
from . import DecodeError
from .cpr import CprFix, cpr_global_decode

CRC_GENERATOR = 0x1FFF409  # x^24 + ... per the Mode S parity polynomial
FRAME_BITS = 112
FRAME_BYTES = 14
SAMPLES_PER_US = 2
PREAMBLE_US = 8
FRAME_SAMPLES = (PREAMBLE_US + FRAME_BITS) * SAMPLES_PER_US  # 240
PULSE_OFFSETS = (0, 2, 7, 9)
GAP_OFFSETS = (1, 3, 4, 5, 6, 8, 10, 11, 12, 13, 14, 15)
NOISE_WINDOW = 32

CALLSIGN_ALPHABET = (
    "#ABCDEFGHIJKLMNOPQRSTUVWXYZ##### ###############0123456789######"
)


def crc24(data: bytes) -> int:
    """Remainder of the message polynomial modulo the Mode S generator."""
    value = int.from_bytes(data, "big")
    for bit in range(len(data) * 8 - 1, 23, -1):
        if value >> bit & 1:
            value ^= CRC_GENERATOR << (bit - 24)
    return value & 0xFFFFFF


def crc_ok(frame: bytes) -> bool:
    return len(frame) == FRAME_BYTES and crc24(frame) == 0


def append_parity(first_88_bits: bytes) -> bytes:
    """Complete an 11-byte message body into a CRC-valid 14-byte frame."""
    if len(first_88_bits) != 11:
        raise DecodeError("BAD_FRAME", "message body must be 11 bytes")
    parity = crc24(first_88_bits + b"\x00\x00\x00")
    return first_88_bits + parity.to_bytes(3, "big")


def _bits(data: bytes, start: int, width: int) -> int:
    """Big-endian bit field [start, start+width) of a byte string."""
    value = int.from_bytes(data, "big")
    total = len(data) * 8
    return (value >> (total - start - width)) & ((1 << width) - 1)


def build_df17(
    icao: int,
    type_code: int,
    *,
    callsign: str | None = None,
    altitude_ft: int | None = None,
    cpr: CprFix | None = None,
    category: int = 0,
) -> bytes:
    """Assemble a CRC-valid DF17 frame for fixtures and round-trip tests."""
    if not 0 <= icao < (1 << 24):
        raise DecodeError("BAD_FRAME", "icao must be 24-bit")
    me = 0
    if 1 <= type_code <= 4:
        if callsign is None:
            raise DecodeError("BAD_FRAME", "identification frames need a callsign")
        text = f"{callsign:<8.8s}"
        me = (type_code << 3) | (category & 7)
        for ch in text:
            code = CALLSIGN_ALPHABET.index(ch)
            me = (me << 6) | code
    elif 9 <= type_code <= 18:
        if altitude_ft is None or cpr is None:
            raise DecodeError("BAD_FRAME", "position frames need altitude and cpr")
        n_alt = (altitude_ft + 1000) // 25
        if not 0 <= n_alt < (1 << 11):
            raise DecodeError("BAD_FRAME", "altitude outside Q-bit range")
        alt_field = ((n_alt >> 4) << 5) | (1 << 4) | (n_alt & 0xF)  # Q bit set
        me = (type_code << 3) | 0  # surveillance status + NIC supplement zero
        me = (me << 12) | alt_field
        me = (me << 1) | 0  # time flag
        me = (me << 1) | (1 if cpr.odd else 0)
        me = (me << 17) | cpr.lat17
        me = (me << 17) | cpr.lon17
    else:
        raise DecodeError("BAD_FRAME", f"unsupported type code {type_code}")
    header = (17 << 3) | 5  # DF17, capability 5
    body = bytes([header]) + icao.to_bytes(3, "big") + me.to_bytes(7, "big")
    return append_parity(body)


@dataclass
class ModeSFrame:
    raw: bytes
    df: int
    icao: int
    crc_ok: bool
    type_code: int | None = None
    callsign: str | None = None
    altitude_ft: int | None = None
    cpr: CprFix | None = None
    timestamp_ms: int = 0

    def body(self, position: tuple[float, float] | None = None) -> dict:
        out: dict = {"icao": f"{self.icao:06X}", "df": self.df, "crc": "ok"}
        if self.type_code is not None:
            out["tc"] = self.type_code
        if self.callsign is not None:
            out["callsign"] = self.callsign
        if self.altitude_ft is not None:
            out["alt_ft"] = self.altitude_ft
        if position is not None:
            out["lat"] = round(position[0], 5)
            out["lon"] = round(position[1], 5)
        return out


def parse_frame(raw: bytes, timestamp_ms: int = 0) -> ModeSFrame:
    """Field extraction for a CRC-checked 112-bit frame."""
    ok = crc_ok(raw)
    df = raw[0] >> 3
    frame = ModeSFrame(
        raw=raw,
        df=df,
        icao=_bits(raw, 8, 24),
        crc_ok=ok,
        timestamp_ms=timestamp_ms,
    )
    if not ok or df != 17:
        return frame
    me = raw[4:11]
    tc = me[0] >> 3
    frame.type_code = tc
    if 1 <= tc <= 4:
        chars = [_bits(me, 8 + 6 * i, 6) for i in range(8)]
        frame.callsign = "".join(CALLSIGN_ALPHABET[c] for c in chars)
    elif 9 <= tc <= 18:
        alt_field = _bits(me, 8, 12)
        if alt_field >> 4 & 1:  # Q bit: 25 ft increments
            n_alt = ((alt_field >> 5) << 4) | (alt_field & 0xF)
            frame.altitude_ft = n_alt * 25 - 1000
        frame.cpr = CprFix(
            lat17=_bits(me, 22, 17),
            lon17=_bits(me, 39, 17),
            odd=bool(_bits(me, 21, 1)),
        )
    return frame


@dataclass
class AdsbDecoder:
    """Streaming burst detector and decoder over 2 Msps I/Q chunks."""

    crc_failures: int = 0
    frames_decoded: int = 0
    _tail: np.ndarray = field(default_factory=lambda: np.zeros(0))
    _scan_from: int = 0

    def feed(self, chunk: IqChunk) -> list[ModeSFrame]:
        if chunk.sample_rate_hz != 2_000_000:
            raise DecodeError("BAD_RATE", "ADS-B decoding expects 2 Msps input")
        tail_len = len(self._tail)
        buf = np.concatenate([self._tail, np.abs(chunk.samples).astype(np.float64)])
        frames: list[ModeSFrame] = []
        limit = len(buf) - FRAME_SAMPLES  # last index with a full frame after it
        skip_until = -1
        for i in self._candidates(buf, self._scan_from, limit):
            i = int(i)  # numpy ints must not leak into frame timestamps
            if i < skip_until:
                continue
            raw = self._slice_bits(buf, i + PREAMBLE_US * SAMPLES_PER_US)
            if crc_ok(raw):
                offset_ms = max(i - tail_len, 0) // (SAMPLES_PER_US * 1000)
                frames.append(parse_frame(raw, chunk.timestamp_ms + offset_ms))
                self.frames_decoded += 1
                skip_until = i + FRAME_SAMPLES
            else:
                self.crc_failures += 1
        scanned_to = max(limit + 1, self._scan_from)  # first unscanned index
        cut = max(scanned_to - NOISE_WINDOW, 0)
        self._tail = buf[cut:]
        self._scan_from = scanned_to - cut
        return frames

    @staticmethod
    def _candidates(buf: np.ndarray, start: int, limit: int) -> np.ndarray:
        """Indices whose next 16 samples look like a preamble."""
        if limit < start:
            return np.zeros(0, dtype=int)
        idx = np.arange(start, limit + 1)
        pulses = np.stack([buf[idx + k] for k in PULSE_OFFSETS])
        gaps = np.stack([buf[idx + k] for k in GAP_OFFSETS])
        pulse_mean = pulses.mean(axis=0)
        gap_mean = gaps.mean(axis=0)
        prefix = np.concatenate([[0.0], np.cumsum(buf)])
        lo = np.maximum(idx - NOISE_WINDOW, 0)
        noise_mean = (prefix[idx] - prefix[lo]) / np.maximum(idx - lo, 1)
        ok = (
            (pulse_mean > 2.0 * gap_mean)
            & (pulses.min(axis=0) > 3.0 * noise_mean)
            & (pulse_mean > 0)
        )
        return idx[ok]

    @staticmethod
    def _slice_bits(mag: np.ndarray, base: int) -> bytes:
        chips = mag[base : base + FRAME_BITS * 2]
        bits = chips[0::2] > chips[1::2]
        return np.packbits(bits).tobytes()


class CprPairer:
    """Matches even/odd position frames per aircraft within a time window."""

    def __init__(self, window_ms: int = 10_000):
        self.window_ms = window_ms
        self._last: dict[tuple[int, bool], tuple[CprFix, int]] = {}

    def feed(self, frame: ModeSFrame) -> tuple[float, float] | None:
        if frame.cpr is None:
            return None
        self._last[(frame.icao, frame.cpr.odd)] = (frame.cpr, frame.timestamp_ms)
        other = self._last.get((frame.icao, not frame.cpr.odd))
        if other is None:
            return None
        fix, ts = other
        if abs(frame.timestamp_ms - ts) > self.window_ms:
            return None
        even, odd = (frame.cpr, fix) if not frame.cpr.odd else (fix, frame.cpr)
        try:
            return cpr_global_decode(even, odd)
        except DecodeError:
            return None
