"""AM envelope demodulator: 60 kHz in, 12 kHz mono PCM out."""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import lfilter

from ..dsp import AudioBlock, DspError, IqChunk, Resampler

INPUT_RATE = 60_000
AUDIO_RATE = 12_000
DC_CUTOFF_HZ = 20.0


class AmDemodulator:
    """Stateful streaming demodulator; feed consecutive 60 kHz chunks."""

    def __init__(self):
        self._rho = math.exp(-2 * math.pi * DC_CUTOFF_HZ / INPUT_RATE)
        self._dc_state = np.zeros(1)
        self._decim = Resampler(1, INPUT_RATE // AUDIO_RATE)

    def feed(self, chunk: IqChunk) -> AudioBlock | None:
        if chunk.sample_rate_hz != INPUT_RATE:
            raise DspError("BAD_RATE", f"am expects {INPUT_RATE} Hz input")
        env = np.abs(chunk.samples).astype(np.float64)
        # y[n] = x[n] - x[n-1] + rho * y[n-1], one-pole high-pass at 20 Hz
        blocked, self._dc_state = lfilter(
            [1.0, -1.0], [1.0, -self._rho], env, zi=self._dc_state
        )
        audio = self._decim.process(blocked.astype(np.complex64)).real
        if len(audio) == 0:
            return None
        pcm = np.clip(audio, -1.0, 1.0) * 32767.0
        return AudioBlock(pcm=pcm.astype(np.int16), sample_rate_hz=AUDIO_RATE)
