"""Streaming rational resampler (polyphase FIR, Kaiser-designed anti-alias).

Works on an ordered sample stream in arbitrary block sizes. The carried
state makes the concatenated output of many small calls bit-identical to
one big call, and conserves sample count: after consuming n samples the
stream has emitted floor-accurate n*up/down outputs (a sub-``down`` input
remainder is carried between calls).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import firwin, kaiserord, upfirdn

from . import DspError, IqChunk


def _design_kernel(up: int, down: int, stopband_db: float) -> np.ndarray:
    """Low-pass at 0.45*min(fs_in, fs_out), gain ``up``, at the upsampled rate."""
    # Frequencies normalized to the upsampled Nyquist (up * fs_in / 2).
    cutoff = 0.9 * min(1.0, up / down) / up
    transition = cutoff / 9.0  # stop edge at 0.55 * min(fs), plus design margin
    numtaps, beta = kaiserord(stopband_db + 10.0, transition)
    numtaps = int(numtaps) | 1  # odd length, linear phase
    kernel = firwin(numtaps, cutoff + transition / 2, window=("kaiser", beta))
    return (kernel * up).astype(np.float64)


class Resampler:
    """Rational rate converter: out rate = in rate * up / down."""

    def __init__(self, up: int, down: int, stopband_db: float = 60.0):
        if up <= 0 or down <= 0:
            raise DspError("BAD_RATIO", "up and down must be positive")
        g = math.gcd(up, down)
        self.up = up // g
        self.down = down // g
        self.stopband_db = stopband_db
        if self.up == 1 and self.down == 1:
            self.kernel = np.ones(1)
        else:
            self.kernel = _design_kernel(self.up, self.down, stopband_db)
        # Past input the filter still needs, rounded up to a multiple of
        # ``down`` so every block fed to upfirdn starts on phase 0.
        hist_min = -(-(len(self.kernel) - 1) // self.up)
        self._hist_len = -(-hist_min // self.down) * self.down
        self._hist = np.zeros(0, dtype=np.complex64)
        self._carry = np.zeros(0, dtype=np.complex64)
        self._in_count = 0  # samples consumed (multiple of down)
        self._out_count = 0  # outputs emitted

    def ratio(self) -> float:
        return self.up / self.down

    def process(self, samples: np.ndarray) -> np.ndarray:
        """Consume a block, return the newly available output samples."""
        x = np.asarray(samples, dtype=np.complex64)
        if self.up == 1 and self.down == 1:
            return x.copy()
        avail = np.concatenate([self._carry, x]) if len(self._carry) else x
        n_consume = (len(avail) // self.down) * self.down
        self._carry = avail[n_consume:].copy()
        if n_consume == 0:
            return np.zeros(0, dtype=np.complex64)
        block = avail[:n_consume]

        ext = np.concatenate([self._hist, block])
        # ext[0] is stream sample (in_count - hist_len); both terms are
        # multiples of down, so upfirdn's output grid lines up with the
        # stream's global output grid.
        base = self._in_count - len(self._hist)
        y_ext = upfirdn(self.kernel, ext, self.up, self.down)

        self._in_count += n_consume
        j_lo = self._out_count
        j_hi = (self._in_count * self.up - 1) // self.down  # inclusive
        out_base = base * self.up // self.down
        y = y_ext[j_lo - out_base : j_hi - out_base + 1]
        self._out_count = j_hi + 1

        tail = min(self._hist_len, len(ext))
        self._hist = ext[-tail:].copy()
        return np.asarray(y, dtype=np.complex64)

    def process_chunk(self, chunk: IqChunk) -> IqChunk | None:
        """Resample one IqChunk; None while the filter is still filling."""
        out = self.process(chunk.samples)
        if len(out) == 0:
            return None
        return IqChunk(
            samples=out,
            sample_rate_hz=int(round(chunk.sample_rate_hz * self.up / self.down)),
            center_freq_hz=chunk.center_freq_hz,
            timestamp_ms=chunk.timestamp_ms,
        )
