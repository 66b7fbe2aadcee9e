"""Averaged-periodogram PSD estimation over complex baseband blocks.

Normalized so that the linear bin powers of a stationary input sum to its
mean power: sum_k P[k] ~= mean(|x|^2). Output bins are rotated so index
fft_size/2 is the center (tuned) frequency, matching the wire layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal.windows import hann

from . import DspError, IqChunk
from ..wire import PsdPayload

DB_FLOOR = 1e-20  # keeps silent bins finite in dB


@dataclass
class PsdConfig:
    fft_size: int = 512
    overlap: float = 0.5
    frame_rate_hz: float = 8.0

    def __post_init__(self) -> None:
        n = self.fft_size
        if not (64 <= n <= 8192) or n & (n - 1):
            raise DspError("BAD_FFT", f"fft_size {n} must be a power of two in [64, 8192]")
        if not 0.0 <= self.overlap < 1.0:
            raise DspError("BAD_OVERLAP", f"overlap {self.overlap} outside [0, 1)")
        if self.frame_rate_hz <= 0:
            raise DspError("BAD_RATE", "frame_rate_hz must be positive")

    @property
    def hop(self) -> int:
        return max(1, int(round(self.fft_size * (1.0 - self.overlap))))


_window_cache: dict[int, tuple[np.ndarray, float]] = {}


def _window(n: int) -> tuple[np.ndarray, float]:
    cached = _window_cache.get(n)
    if cached is None:
        w = hann(n, sym=False).astype(np.float64)
        cached = (w, float(np.sum(w * w)))
        _window_cache[n] = cached
    return cached


def welch_psd(iq: IqChunk, cfg: PsdConfig) -> PsdPayload:
    """Average every windowed, overlapped segment of ``iq`` into one PSD frame."""
    n = cfg.fft_size
    x = iq.samples
    if len(x) < n:
        raise DspError("SHORT_INPUT", f"need at least {n} samples, got {len(x)}")
    w, w_sq_sum = _window(n)

    segments = sliding_window_view(x, n)[:: cfg.hop]
    k = len(segments)
    spectra = np.fft.fft(segments * w, axis=1)
    # sum_k P[k] == mean |x|^2 for stationary input (Parseval with the
    # window's power folded in).
    power = np.einsum("ij,ij->j", spectra, spectra.conj()).real / (k * n * w_sq_sum)
    power = np.fft.fftshift(power)
    power_db = (10.0 * np.log10(power + DB_FLOOR)).astype(np.float32)
    return PsdPayload(
        timestamp_ms=iq.timestamp_ms,
        center_freq_hz=iq.center_freq_hz,
        sample_rate_hz=iq.sample_rate_hz,
        power_db=power_db,
    )


class PsdStream:
    """Accumulates chunks and emits one PSD frame per frame period."""

    def __init__(self, cfg: PsdConfig):
        self.cfg = cfg
        self._pending: list[np.ndarray] = []
        self._pending_len = 0
        self._meta: IqChunk | None = None

    def reset(self) -> None:
        self._pending.clear()
        self._pending_len = 0
        self._meta = None

    def feed(self, chunk: IqChunk) -> list[PsdPayload]:
        """Feed one chunk; returns the frames completed by it."""
        if self._meta is not None and (
            chunk.sample_rate_hz != self._meta.sample_rate_hz
            or chunk.center_freq_hz != self._meta.center_freq_hz
        ):
            # retune: discard the partial frame from the old setting
            self.reset()
        if self._meta is None:
            self._meta = chunk
        self._pending.append(chunk.samples)
        self._pending_len += len(chunk.samples)

        frame_len = max(self.cfg.fft_size, int(chunk.sample_rate_hz / self.cfg.frame_rate_hz))
        frames: list[PsdPayload] = []
        while self._pending_len >= frame_len:
            buf = np.concatenate(self._pending)
            block, rest = buf[:frame_len], buf[frame_len:]
            self._pending = [rest] if len(rest) else []
            self._pending_len = len(rest)
            frames.append(
                welch_psd(
                    IqChunk(
                        samples=block,
                        sample_rate_hz=self._meta.sample_rate_hz,
                        center_freq_hz=self._meta.center_freq_hz,
                        timestamp_ms=self._meta.timestamp_ms,
                    ),
                    self.cfg,
                )
            )
            self._meta = chunk
        return frames
