"""Virtual RF front end: a tunable synthesizer standing in for an SDR dongle.

Renders the baseband view of a scenario (a list of signal specs placed on
carrier frequencies) at the current tuner setting, and plays back recorded
cu8 captures. Every deterministic component is a function of the global
sample index, so chunk boundaries never introduce phase discontinuities.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .dsp import DspError, IqChunk

SIGNAL_KINDS = frozenset(
    {"fm_broadcast", "am_broadcast", "adsb_burst", "tone", "noise_floor"}
)

TUNE_RANGE_HZ = (0, 6_000_000_000)
DEFAULT_SAMPLE_RATE = 2_400_000
ALLOWED_SAMPLE_RATES = (240_000, 2_000_000, 2_400_000)
CHUNK_SECONDS = 0.064

MODES_PREAMBLE_US = (0.0, 1.0, 3.5, 4.5)  # rising pulse edges, 0.5 us wide
MODES_BITS = 112
MODES_RATE = 2_000_000


class SourceError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass(frozen=True)
class SignalSpec:
    """One emitter in a scenario."""

    kind: str
    carrier_hz: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SIGNAL_KINDS:
            raise SourceError("BAD_KIND", f"unknown signal kind {self.kind!r}")
        if self.carrier_hz < 0:
            raise SourceError("BAD_CARRIER", "carrier_hz must be non-negative")
        p = self.params
        if self.kind == "fm_broadcast":
            dev = p.get("deviation_hz", 75_000.0)
            if not 0 < dev <= 100_000:
                raise SourceError("BAD_PARAM", "fm deviation must be in (0, 100 kHz]")
            if p.get("audio_hz", 1000.0) <= 0:
                raise SourceError("BAD_PARAM", "fm audio tone must be positive")
        elif self.kind == "am_broadcast":
            m = p.get("mod_index", 0.5)
            if not 0 < m <= 1:
                raise SourceError("BAD_PARAM", "am mod_index must be in (0, 1]")
        elif self.kind == "adsb_burst":
            payload = p.get("payload", b"")
            if isinstance(payload, str):
                payload = bytes.fromhex(payload)
            if len(payload) != 14:
                raise SourceError("BAD_PARAM", "adsb payload must be 14 bytes")
            if p.get("repeat_ms", 500) <= 0:
                raise SourceError("BAD_PARAM", "adsb repeat_ms must be positive")

    def payload_bytes(self) -> bytes:
        payload = self.params.get("payload", b"")
        return bytes.fromhex(payload) if isinstance(payload, str) else bytes(payload)


def default_fm_scenario(floor_dbfs: float = -60.0) -> list[SignalSpec]:
    """Five labeled FM stations across the broadcast band."""
    stations = [
        (98_100_000, 440.0),
        (100_300_000, 660.0),
        (102_700_000, 880.0),
        (105_000_000, 1320.0),
        (107_900_000, 1760.0),
    ]
    specs = [
        SignalSpec(
            "fm_broadcast",
            carrier,
            {"audio_hz": tone, "deviation_hz": 75_000.0, "amplitude": 0.18},
        )
        for carrier, tone in stations
    ]
    specs.append(SignalSpec("noise_floor", 0, {"power_dbfs": floor_dbfs}))
    return specs


def _modes_envelope(payload: bytes, t_us: np.ndarray) -> np.ndarray:
    """On-off keying envelope of one Mode S burst, sampled at times t_us."""
    env = np.zeros(len(t_us))
    for edge in MODES_PREAMBLE_US:
        env += ((t_us >= edge) & (t_us < edge + 0.5)).astype(float)
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8))
    for i, bit in enumerate(bits):
        start = 8.0 + i + (0.0 if bit else 0.5)  # PPM: 1 = high-then-low
        env += ((t_us >= start) & (t_us < start + 0.5)).astype(float)
    return np.clip(env, 0.0, 1.0)


def encode_modes_burst(payload: bytes, sample_rate_hz: int = MODES_RATE) -> IqChunk:
    """One Mode S downlink burst as unit-amplitude OOK at 2 Msps."""
    if sample_rate_hz != MODES_RATE:
        raise SourceError("BAD_RATE", "Mode S bursts are generated at 2 Msps")
    if len(payload) != 14:
        raise SourceError("BAD_PARAM", "payload must be 14 bytes (112 bits)")
    n = int((8 + MODES_BITS) * sample_rate_hz // 1_000_000)
    t_us = np.arange(n) * (1_000_000 / sample_rate_hz)
    env = _modes_envelope(payload, t_us)
    return IqChunk(
        samples=env.astype(np.complex64),
        sample_rate_hz=sample_rate_hz,
        center_freq_hz=1_090_000_000,
        timestamp_ms=0,
    )


class FrontEnd:
    """Tunable synthetic receiver over a scenario."""

    def __init__(
        self,
        scenario: list[SignalSpec],
        center_freq_hz: int = 100_000_000,
        sample_rate_hz: int = DEFAULT_SAMPLE_RATE,
        gain_db: float = 0.0,
        seed: int = 0,
    ):
        if not scenario:
            raise SourceError("EMPTY_SCENARIO", "scenario must list at least one signal")
        self.scenario = list(scenario)
        self.sample_rate_hz = int(sample_rate_hz)
        self.gain_db = float(gain_db)
        self.center_freq_hz = 0
        self.tune(center_freq_hz)
        self._rng = np.random.default_rng(seed)
        self._sample_index = 0
        self.chunk_samples = int(round(CHUNK_SECONDS * self.sample_rate_hz))

    def tune(self, freq_hz: int) -> None:
        lo, hi = TUNE_RANGE_HZ
        if not lo <= freq_hz <= hi:
            raise SourceError("OUT_OF_RANGE", f"{freq_hz} Hz outside [{lo}, {hi}]")
        self.center_freq_hz = int(freq_hz)

    def set_gain(self, gain_db: float) -> None:
        self.gain_db = float(gain_db)

    def set_sample_rate(self, rate_hz: int) -> None:
        if rate_hz not in ALLOWED_SAMPLE_RATES:
            raise SourceError("BAD_RATE", f"{rate_hz} Hz not in {ALLOWED_SAMPLE_RATES}")
        if rate_hz == self.sample_rate_hz:
            return
        # keep signal time continuous across the rate change
        self._sample_index = int(round(self._sample_index * rate_hz / self.sample_rate_hz))
        self.sample_rate_hz = int(rate_hz)
        self.chunk_samples = int(round(CHUNK_SECONDS * self.sample_rate_hz))

    def _in_band(self, spec: SignalSpec) -> bool:
        half = self.sample_rate_hz / 2
        return abs(spec.carrier_hz - self.center_freq_hz) <= half

    def render(self, n_samples: int) -> IqChunk:
        """Next n_samples of baseband at the current tuner setting."""
        fs = self.sample_rate_hz
        n0 = self._sample_index
        t = (n0 + np.arange(n_samples)) / fs
        out = np.zeros(n_samples, dtype=np.complex128)
        noise_power = 0.0
        for spec in self.scenario:
            if spec.kind == "noise_floor":
                noise_power += 10.0 ** (spec.params.get("power_dbfs", -60.0) / 10.0)
                continue
            if not self._in_band(spec):
                continue
            f_off = spec.carrier_hz - self.center_freq_hz
            amp = spec.params.get("amplitude", 1.0)
            if spec.kind == "tone":
                out += amp * np.exp(2j * np.pi * f_off * t)
            elif spec.kind == "fm_broadcast":
                f_m = spec.params.get("audio_hz", 1000.0)
                dev = spec.params.get("deviation_hz", 75_000.0)
                beta = dev / f_m
                phase = 2 * np.pi * f_off * t + beta * np.sin(2 * np.pi * f_m * t)
                out += amp * np.exp(1j * phase)
            elif spec.kind == "am_broadcast":
                f_m = spec.params.get("audio_hz", 1000.0)
                m = spec.params.get("mod_index", 0.5)
                env = 1.0 + m * np.cos(2 * np.pi * f_m * t)
                out += amp * env * np.exp(2j * np.pi * f_off * t)
            elif spec.kind == "adsb_burst":
                out += amp * self._adsb_component(spec, t, f_off)
        if noise_power > 0:
            sigma = math.sqrt(noise_power / 2.0)
            out += self._rng.normal(scale=sigma, size=n_samples)
            out += 1j * self._rng.normal(scale=sigma, size=n_samples)
        out *= 10.0 ** (self.gain_db / 20.0)
        self._sample_index += n_samples
        return IqChunk(
            samples=out.astype(np.complex64),
            sample_rate_hz=fs,
            center_freq_hz=self.center_freq_hz,
            timestamp_ms=int(n0 * 1000 / fs),
        )

    def _adsb_component(
        self, spec: SignalSpec, t: np.ndarray, f_off: float
    ) -> np.ndarray:
        repeat_s = spec.params.get("repeat_ms", 500) / 1000.0
        burst_s = (8 + MODES_BITS) * 1e-6
        # integer sample arithmetic keeps every repeat bit-identical; a float
        # mod in seconds flips samples that land exactly on 0.5 us pulse edges
        fs = self.sample_rate_hz
        period = max(1, int(round(repeat_s * fs)))
        k = np.round(t * fs).astype(np.int64) % period
        active = k < int(round(burst_s * fs))
        env = np.zeros(len(t))
        if np.any(active):
            env[active] = _modes_envelope(
                spec.payload_bytes(), k[active] * (1e6 / fs)
            )
        carrier = np.exp(2j * np.pi * f_off * t) if f_off else 1.0
        return env * carrier


def write_cu8(path: str | Path, chunks: list[IqChunk]) -> None:
    """Write samples as interleaved unsigned 8-bit I/Q plus a JSON sidecar."""
    path = Path(path)
    if not chunks:
        raise SourceError("EMPTY", "nothing to write")
    samples = np.concatenate([c.samples for c in chunks])
    inter = np.empty(2 * len(samples), dtype=np.float64)
    inter[0::2] = samples.real
    inter[1::2] = samples.imag
    raw = np.clip(np.round(inter * 127.5 + 127.5), 0, 255).astype(np.uint8)
    path.write_bytes(raw.tobytes())
    sidecar = {
        "sample_rate_hz": chunks[0].sample_rate_hz,
        "center_freq_hz": chunks[0].center_freq_hz,
        "timestamp_ms": chunks[0].timestamp_ms,
        "format": "cu8",
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2))


def playback(path: str | Path, loop: bool = False) -> Iterator[IqChunk]:
    """Stream a cu8 capture back as IqChunks per its sidecar metadata."""
    path = Path(path)
    sidecar_path = path.with_suffix(path.suffix + ".json")
    try:
        raw = np.frombuffer(path.read_bytes(), dtype=np.uint8)
        sidecar = json.loads(sidecar_path.read_text())
    except OSError as exc:
        raise SourceError("IO", str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise SourceError("BAD_METADATA", f"sidecar is not JSON: {exc}") from exc
    if len(raw) % 2:
        raise SourceError("ODD_LENGTH", "cu8 files hold interleaved I/Q pairs")
    if len(raw) == 0:
        raise SourceError("IO", "capture file is empty")
    try:
        fs = int(sidecar["sample_rate_hz"])
        center = int(sidecar["center_freq_hz"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SourceError("BAD_METADATA", f"sidecar missing field: {exc}") from exc
    if fs <= 0:
        raise SourceError("BAD_METADATA", "sample_rate_hz must be positive")
    scaled = (raw.astype(np.float32) - 127.5) / 127.5
    samples = (scaled[0::2] + 1j * scaled[1::2]).astype(np.complex64)
    chunk_len = max(1, int(round(CHUNK_SECONDS * fs)))
    pos = 0
    emitted = 0
    while True:
        piece = samples[pos : pos + chunk_len]
        if len(piece) == 0:
            if not loop:
                return
            pos = 0
            continue
        yield IqChunk(
            samples=piece.copy(),
            sample_rate_hz=fs,
            center_freq_hz=center,
            timestamp_ms=int(emitted * 1000 / fs),
        )
        emitted += len(piece)
        pos += len(piece)


class PlaybackFrontEnd:
    """FrontEnd-shaped adapter over a looped cu8 capture.

    A replayed capture cannot retune or change rate: tune() records the
    request without changing the data, and set_sample_rate() accepts only
    the capture's own rate.
    """

    def __init__(self, path: str | Path, gain_db: float = 0.0):
        first = next(playback(path, loop=True))
        self._chunks = playback(path, loop=True)
        self.sample_rate_hz = first.sample_rate_hz
        self.center_freq_hz = first.center_freq_hz
        self.gain_db = float(gain_db)
        self.chunk_samples = int(round(CHUNK_SECONDS * self.sample_rate_hz))
        self._buf: list[np.ndarray] = [first.samples]
        self._buf_len = len(first.samples)
        self._sample_index = 0

    def tune(self, freq_hz: int) -> None:
        lo, hi = TUNE_RANGE_HZ
        if not lo <= freq_hz <= hi:
            raise SourceError("OUT_OF_RANGE", f"{freq_hz} Hz outside [{lo}, {hi}]")

    def set_gain(self, gain_db: float) -> None:
        self.gain_db = float(gain_db)

    def set_sample_rate(self, rate_hz: int) -> None:
        if rate_hz != self.sample_rate_hz:
            raise SourceError("BAD_RATE", "a capture plays back at its recorded rate")

    def render(self, n_samples: int) -> IqChunk:
        while self._buf_len < n_samples:
            piece = next(self._chunks)
            self._buf.append(piece.samples)
            self._buf_len += len(piece.samples)
        buf = np.concatenate(self._buf)
        out, rest = buf[:n_samples], buf[n_samples:]
        self._buf = [rest] if len(rest) else []
        self._buf_len = len(rest)
        n0 = self._sample_index
        self._sample_index += n_samples
        if self.gain_db:
            out = (out * 10.0 ** (self.gain_db / 20.0)).astype(np.complex64)
        return IqChunk(
            samples=out,
            sample_rate_hz=self.sample_rate_hz,
            center_freq_hz=self.center_freq_hz,
            timestamp_ms=int(n0 * 1000 / self.sample_rate_hz),
        )
