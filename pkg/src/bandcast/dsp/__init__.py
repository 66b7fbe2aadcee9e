"""Numerical kernels shared by the sensor pipelines."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DspError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class IqChunk:
    """A timestamped block of complex baseband samples."""

    samples: np.ndarray  # complex64, |I|,|Q| nominally within [-1, 1]
    sample_rate_hz: int
    center_freq_hz: int
    timestamp_ms: int

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.complex64)
        if self.samples.size == 0:
            raise DspError("EMPTY", "IqChunk must hold at least one sample")

    def __len__(self) -> int:
        return len(self.samples)

    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass
class AudioBlock:
    """Mono 16-bit PCM."""

    pcm: np.ndarray  # int16
    sample_rate_hz: int = 12000

    ALLOWED_RATES = (8000, 12000, 16000)

    def __post_init__(self) -> None:
        if self.sample_rate_hz not in self.ALLOWED_RATES:
            raise DspError("BAD_RATE", f"audio rate {self.sample_rate_hz} not in {self.ALLOWED_RATES}")
        self.pcm = np.asarray(self.pcm, dtype=np.int16)

    def __len__(self) -> int:
        return len(self.pcm)


from .welch import PsdConfig, PsdStream, welch_psd  # noqa: E402
from .resampler import Resampler  # noqa: E402
from .adpcm import AdpcmDecoder, AdpcmEncoder, ADPCM_HEADER_SIZE  # noqa: E402

__all__ = [
    "ADPCM_HEADER_SIZE",
    "AdpcmDecoder",
    "AdpcmEncoder",
    "AudioBlock",
    "DspError",
    "IqChunk",
    "PsdConfig",
    "PsdStream",
    "Resampler",
    "welch_psd",
]
