"""Decoder registry and the frequency-to-decoder mapping.

Six registry rows cover the supported technologies; AM, FM and ADS-B ship
working decoders, the rest are disabled placeholders that keep the
registry shape without an implementation behind them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field


class DecodeError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass(frozen=True)
class DecoderDescriptor:
    decoder_id: str
    freq_ranges: tuple[tuple[int, int], ...]
    input_rate_hz: int
    output_kind: str  # "audio" or "json"
    enabled: bool

    def __post_init__(self):
        if self.input_rate_hz <= 0:
            raise DecodeError("BAD_DESCRIPTOR", "input_rate_hz must be positive")
        spans = sorted(self.freq_ranges)
        for (a_lo, a_hi), (b_lo, b_hi) in zip(spans, spans[1:]):
            if b_lo < a_hi:
                raise DecodeError("BAD_DESCRIPTOR", "ranges overlap")

    def covers(self, freq_hz: int) -> bool:
        return any(lo <= freq_hz <= hi for lo, hi in self.freq_ranges)


REGISTRY: tuple[DecoderDescriptor, ...] = (
    DecoderDescriptor("am", ((153_000, 30_000_000),), 60_000, "audio", True),
    DecoderDescriptor("fm", ((88_000_000, 108_000_000),), 240_000, "audio", True),
    DecoderDescriptor("acars", ((129_000_000, 136_000_000),), 2_400_000, "json", False),
    DecoderDescriptor("ais", ((161_000_000, 162_000_000),), 1_600_000, "json", False),
    DecoderDescriptor("adsb", ((1_089_000_000, 1_091_000_000),), 2_000_000, "json", True),
    DecoderDescriptor("lte", ((700_000_000, 3_500_000_000),), 1_920_000, "json", False),
)

_BY_ID = {d.decoder_id: d for d in REGISTRY}


def registry_lookup(freq_hz: int) -> DecoderDescriptor | None:
    """The unique enabled descriptor covering freq_hz, else None (PSD only)."""
    hits = [d for d in REGISTRY if d.enabled and d.covers(freq_hz)]
    return hits[0] if hits else None


def descriptor_for(decoder_id: str) -> DecoderDescriptor:
    try:
        return _BY_ID[decoder_id]
    except KeyError:
        raise DecodeError("UNKNOWN_DECODER", f"no such decoder {decoder_id!r}") from None


def make_decoder(decoder_id: str):
    """Instantiate a decoder by id; disabled rows yield UNSUPPORTED."""
    from .adsb import AdsbDecoder
    from .am import AmDemodulator
    from .fm import FmDemodulator

    desc = descriptor_for(decoder_id)
    if not desc.enabled:
        raise DecodeError("UNSUPPORTED", f"decoder {decoder_id!r} is a stub")
    if decoder_id == "fm":
        return FmDemodulator()
    if decoder_id == "am":
        return AmDemodulator()
    return AdsbDecoder()


@dataclass
class DecodedMessage:
    """One JSON-bodied decoder output."""

    decoder_id: str
    timestamp_ms: int
    body: dict = field(default_factory=dict)

    def to_json(self) -> str:
        text = json.dumps(self.body, separators=(",", ":"))
        if len(text) > 4096:
            raise DecodeError("OVERSIZE", "message body exceeds 4 KiB")
        return text
