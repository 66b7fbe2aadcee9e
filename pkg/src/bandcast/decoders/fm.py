"""Broadcast FM demodulator: 240 kHz in, 12 kHz mono PCM out.

Channel filter to 180 kHz, quadrature discriminator normalized to the
75 kHz broadcast deviation, audio low-pass with 20x decimation, then
50 us de-emphasis.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import firwin, lfilter, lfilter_zi

from ..dsp import AudioBlock, DspError, IqChunk, Resampler

INPUT_RATE = 240_000
AUDIO_RATE = 12_000
CHANNEL_HZ = 180_000
DEVIATION_HZ = 75_000
DEEMPHASIS_S = 50e-6


class FmDemodulator:
    """Stateful streaming demodulator; feed consecutive 240 kHz chunks."""

    def __init__(self):
        self._chan_taps = firwin(101, CHANNEL_HZ / INPUT_RATE)  # +-90 kHz
        self._chan_state = lfilter_zi(self._chan_taps, 1.0).astype(np.complex128) * 0
        self._last = np.complex64(1.0)
        self._decim = Resampler(1, INPUT_RATE // AUDIO_RATE)
        self._deemph_alpha = math.exp(-1.0 / (AUDIO_RATE * DEEMPHASIS_S))
        self._deemph_state = 0.0

    def feed(self, chunk: IqChunk) -> AudioBlock | None:
        if chunk.sample_rate_hz != INPUT_RATE:
            raise DspError("BAD_RATE", f"fm expects {INPUT_RATE} Hz input")
        x, self._chan_state = lfilter(
            self._chan_taps, 1.0, chunk.samples, zi=self._chan_state
        )
        shifted = np.concatenate([[self._last], x[:-1]])
        self._last = x[-1]
        disc = np.angle(x * np.conj(shifted)) * (
            INPUT_RATE / (2 * math.pi * DEVIATION_HZ)
        )
        audio = self._decim.process(disc.astype(np.complex64)).real
        if len(audio) == 0:
            return None
        a = self._deemph_alpha
        out, zf = lfilter([1 - a], [1, -a], audio, zi=[self._deemph_state])
        self._deemph_state = zf[0]
        pcm = np.clip(out, -1.0, 1.0) * 32767.0
        return AudioBlock(pcm=pcm.astype(np.int16), sample_rate_hz=AUDIO_RATE)
