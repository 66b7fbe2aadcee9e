"""IMA ADPCM codec, 4 bits per sample, self-contained blocks.

Each encoded block starts with a 3 byte header: the predictor (int16 LE)
and step index the encoder held when the block began. A decoder can
therefore decode any block in isolation, while a streaming encoder keeps
its state across blocks so the waveform stays continuous.
"""

from __future__ import annotations

import struct

import numpy as np

from . import DspError

ADPCM_HEADER_SIZE = 3

_HEADER = struct.Struct("<hB")

STEP_TABLE = (
    7, 8, 9, 10, 11, 12, 13, 14, 16, 17, 19, 21, 23, 25, 28, 31, 34, 37,
    41, 45, 50, 55, 60, 66, 73, 80, 88, 97, 107, 118, 130, 143, 157, 173,
    190, 209, 230, 253, 279, 307, 337, 371, 408, 449, 494, 544, 598, 658,
    724, 796, 876, 963, 1060, 1166, 1282, 1411, 1552, 1707, 1878, 2066,
    2272, 2499, 2749, 3024, 3327, 3660, 4026, 4428, 4871, 5358, 5894,
    6484, 7132, 7845, 8630, 9493, 10442, 11487, 12635, 13899, 15289,
    16818, 18500, 20350, 22385, 24623, 27086, 29794, 32767,
)

INDEX_TABLE = (-1, -1, -1, -1, 2, 4, 6, 8)


def _clamp16(v: int) -> int:
    return max(-32768, min(32767, v))


def _step_sample(nibble: int, predictor: int, index: int) -> tuple[int, int]:
    """Advance (predictor, index) by one 4-bit code."""
    step = STEP_TABLE[index]
    diff = step >> 3
    if nibble & 4:
        diff += step
    if nibble & 2:
        diff += step >> 1
    if nibble & 1:
        diff += step >> 2
    if nibble & 8:
        predictor = _clamp16(predictor - diff)
    else:
        predictor = _clamp16(predictor + diff)
    index = max(0, min(88, index + INDEX_TABLE[nibble & 7]))
    return predictor, index


class AdpcmEncoder:
    """Stateful encoder; feed consecutive even-length int16 blocks."""

    def __init__(self):
        self.predictor = 0
        self.index = 0

    def encode(self, pcm: np.ndarray) -> bytes:
        samples = np.asarray(pcm, dtype=np.int16)
        if samples.size == 0:
            raise DspError("EMPTY", "cannot encode an empty block")
        if samples.size % 2:
            raise DspError("ODD_LENGTH", "block length must be even")
        out = bytearray(_HEADER.pack(self.predictor, self.index))
        pred, idx = self.predictor, self.index
        low = None
        for target in samples.tolist():
            step = STEP_TABLE[idx]
            diff = target - pred
            nibble = 8 if diff < 0 else 0
            diff = abs(diff)
            if diff >= step:
                nibble |= 4
                diff -= step
            if diff >= step >> 1:
                nibble |= 2
                diff -= step >> 1
            if diff >= step >> 2:
                nibble |= 1
            pred, idx = _step_sample(nibble, pred, idx)
            if low is None:
                low = nibble
            else:
                out.append(low | (nibble << 4))
                low = None
        self.predictor, self.index = pred, idx
        return bytes(out)


class AdpcmDecoder:
    """Stateless decoder; every block carries its own starting state."""

    def decode(self, data: bytes) -> np.ndarray:
        if len(data) < ADPCM_HEADER_SIZE:
            raise DspError("TRUNCATED_BLOCK", "block shorter than its header")
        pred, idx = _HEADER.unpack_from(data)
        if idx > 88:
            raise DspError("BAD_STATE", f"step index {idx} out of range")
        body = data[ADPCM_HEADER_SIZE:]
        out = np.empty(len(body) * 2, dtype=np.int16)
        pos = 0
        for byte in body:
            for nibble in (byte & 0x0F, byte >> 4):
                pred, idx = _step_sample(nibble, pred, idx)
                out[pos] = pred
                pos = pos + 1
        return out
