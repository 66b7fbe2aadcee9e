"""Power-based channel identification over averaged PSD frames.

Averages a window of PSD frames, takes the median bin as the noise
floor, marks bins a threshold above it, merges nearby runs, and keeps
runs whose width fits the band profile. Spans are what the UI draws as
click-to-tune rectangles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .wire import PsdPayload


class ChanIdError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass(frozen=True)
class BandProfile:
    min_width_hz: float = 100_000.0
    max_width_hz: float = 300_000.0
    threshold_above_floor_db: float = 6.0
    merge_gap_bins: int = 2
    window_s: float = 5.0

    def __post_init__(self):
        if not 0 < self.min_width_hz < self.max_width_hz:
            raise ChanIdError("BAD_PROFILE", "need 0 < min_width < max_width")
        if self.threshold_above_floor_db <= 0:
            raise ChanIdError("BAD_PROFILE", "threshold must be positive")


@dataclass(frozen=True)
class ChannelSpan:
    center_hz: float
    width_hz: float
    peak_db: float
    mean_db: float

    def contains(self, freq_hz: float) -> bool:
        return abs(freq_hz - self.center_hz) <= self.width_hz / 2


def detect_channels(
    history: Sequence[PsdPayload], profile: BandProfile
) -> list[ChannelSpan]:
    """Active-transmission spans in a window of PSD frames."""
    if not history:
        return []
    head = history[0]
    for frame in history:
        if (
            frame.fft_size != head.fft_size
            or frame.center_freq_hz != head.center_freq_hz
            or frame.sample_rate_hz != head.sample_rate_hz
        ):
            raise ChanIdError("INCONSISTENT_FRAMES", "history mixes tuner settings")
    avg_db = np.mean([f.power_db for f in history], axis=0, dtype=np.float64)
    floor_db = float(np.median(avg_db))
    marked = avg_db > floor_db + profile.threshold_above_floor_db
    bin_hz = head.sample_rate_hz / head.fft_size

    spans: list[ChannelSpan] = []
    runs = _merge_runs(marked, profile.merge_gap_bins)
    for lo, hi in runs:  # [lo, hi) in bin indices
        width_hz = (hi - lo) * bin_hz
        if not profile.min_width_hz <= width_hz <= profile.max_width_hz:
            continue
        bins = np.arange(lo, hi)
        freqs = head.center_freq_hz + (bins - head.fft_size // 2) * bin_hz
        weights = 10.0 ** (avg_db[lo:hi] / 10.0)
        center = float(np.average(freqs, weights=weights))
        spans.append(
            ChannelSpan(
                center_hz=center,
                width_hz=width_hz,
                peak_db=float(avg_db[lo:hi].max()),
                mean_db=float(avg_db[lo:hi].mean()),
            )
        )
    spans.sort(key=lambda s: s.center_hz)
    return spans


def _merge_runs(marked: np.ndarray, merge_gap: int) -> list[tuple[int, int]]:
    """Maximal marked runs, fusing runs separated by short gaps."""
    idx = np.flatnonzero(marked)
    if len(idx) == 0:
        return []
    runs: list[tuple[int, int]] = []
    start = prev = int(idx[0])
    for i in idx[1:]:
        i = int(i)
        if i - prev - 1 <= merge_gap:
            prev = i
            continue
        runs.append((start, prev + 1))
        start = prev = i
    runs.append((start, prev + 1))
    return runs


def spans_to_json(spans: list[ChannelSpan]) -> bytes:
    """CHANNELS frame payload."""
    return json.dumps(
        [
            {
                "center_hz": round(s.center_hz, 1),
                "width_hz": round(s.width_hz, 1),
                "peak_db": round(s.peak_db, 2),
            }
            for s in spans
        ],
        separators=(",", ":"),
    ).encode()


def spans_from_json(payload: bytes) -> list[ChannelSpan]:
    rows = json.loads(payload.decode())
    return [
        ChannelSpan(
            center_hz=float(r["center_hz"]),
            width_hz=float(r["width_hz"]),
            peak_db=float(r["peak_db"]),
            mean_db=float(r.get("mean_db", r["peak_db"])),
        )
        for r in rows
    ]
