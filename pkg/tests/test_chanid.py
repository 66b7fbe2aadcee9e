"""Channel identification tests: span extraction from crafted PSD
frames, run merging, profile gating, and detection over a synthesized
three-station band."""

import numpy as np
import pytest

from bandcast.chanid import (
    BandProfile,
    ChanIdError,
    ChannelSpan,
    detect_channels,
    spans_from_json,
    spans_to_json,
)
from bandcast.dsp.welch import PsdConfig, PsdStream
from bandcast.iqsource import FrontEnd, SignalSpec
from bandcast.wire import PsdPayload

FFT = 512
RATE = 2_400_000
CENTER = 100_000_000
BIN_HZ = RATE / FFT  # 4687.5
FLOOR_DB = -90.0

PROFILE = BandProfile()


def make_psd(power_db, center=CENTER, rate=RATE, ts=0):
    return PsdPayload(
        timestamp_ms=ts,
        center_freq_hz=center,
        sample_rate_hz=rate,
        power_db=np.asarray(power_db, dtype=np.float32),
    )


def flat_with_bumps(*bumps, level_db=-70.0):
    """Floor at FLOOR_DB with [lo, hi) bin ranges raised to level_db."""
    power = np.full(FFT, FLOOR_DB)
    for lo, hi in bumps:
        power[lo:hi] = level_db
    return make_psd(power)


class TestDetect:
    def test_single_span_geometry(self):
        spans = detect_channels([flat_with_bumps((200, 240))], PROFILE)
        assert len(spans) == 1
        span = spans[0]
        assert span.width_hz == 40 * BIN_HZ
        # flat bump: power-weighted center is the arithmetic bin mean
        expect = CENTER + (219.5 - FFT // 2) * BIN_HZ
        assert span.center_hz == pytest.approx(expect, abs=1.0)
        assert span.peak_db == pytest.approx(-70.0, abs=0.01)

    def test_two_separated_spans(self):
        spans = detect_channels([flat_with_bumps((100, 130), (300, 330))], PROFILE)
        assert len(spans) == 2
        assert spans[0].center_hz < spans[1].center_hz

    def test_short_gap_merges(self):
        # 2-bin hole is within merge_gap_bins, one channel results
        spans = detect_channels([flat_with_bumps((100, 110), (112, 130))], PROFILE)
        assert len(spans) == 1
        assert spans[0].width_hz == 30 * BIN_HZ

    def test_long_gap_splits(self):
        spans = detect_channels([flat_with_bumps((100, 125), (128, 153))], PROFILE)
        assert len(spans) == 2

    def test_width_gating(self):
        narrow = flat_with_bumps((250, 260))  # 47 kHz, under min_width
        wide = flat_with_bumps((100, 180))  # 375 kHz, over max_width
        assert detect_channels([narrow], PROFILE) == []
        assert detect_channels([wide], PROFILE) == []

    def test_threshold_is_relative_to_median_floor(self):
        below = flat_with_bumps((200, 240), level_db=FLOOR_DB + 5.0)
        above = flat_with_bumps((200, 240), level_db=FLOOR_DB + 6.5)
        assert detect_channels([below], PROFILE) == []
        assert len(detect_channels([above], PROFILE)) == 1

    def test_averaging_across_frames(self):
        # bump present at +14 dB in one frame of two averages to +7
        on = flat_with_bumps((200, 240), level_db=FLOOR_DB + 14.0)
        off = flat_with_bumps()
        assert len(detect_channels([on, off], PROFILE)) == 1
        weak_on = flat_with_bumps((200, 240), level_db=FLOOR_DB + 10.0)
        assert detect_channels([weak_on, off], PROFILE) == []

    def test_empty_history(self):
        assert detect_channels([], PROFILE) == []

    def test_inconsistent_history_rejected(self):
        a = flat_with_bumps((200, 240))
        b = make_psd(np.full(FFT, FLOOR_DB), center=CENTER + 1_000_000)
        with pytest.raises(ChanIdError) as err:
            detect_channels([a, b], PROFILE)
        assert err.value.code == "INCONSISTENT_FRAMES"

    def test_profile_validation(self):
        with pytest.raises(ChanIdError):
            BandProfile(min_width_hz=0.0)
        with pytest.raises(ChanIdError):
            BandProfile(min_width_hz=300_000.0, max_width_hz=100_000.0)
        with pytest.raises(ChanIdError):
            BandProfile(threshold_above_floor_db=0.0)


class TestSpans:
    def test_contains(self):
        span = ChannelSpan(
            center_hz=100e6, width_hz=200e3, peak_db=-40.0, mean_db=-45.0
        )
        assert span.contains(100_090_000.0)
        assert not span.contains(100_110_000.0)

    def test_json_round_trip(self):
        spans = detect_channels([flat_with_bumps((100, 130), (300, 330))], PROFILE)
        back = spans_from_json(spans_to_json(spans))
        assert len(back) == 2
        for orig, copy in zip(spans, back):
            assert copy.center_hz == pytest.approx(orig.center_hz, abs=0.1)
            assert copy.width_hz == pytest.approx(orig.width_hz, abs=0.1)
            assert copy.peak_db == pytest.approx(orig.peak_db, abs=0.01)


class TestSynthesizedBand:
    def test_three_station_band(self):
        stations = [99_700_000, 100_000_000, 100_400_000]
        scenario = [
            SignalSpec(
                "fm_broadcast",
                hz,
                {"audio_hz": 700.0, "deviation_hz": 75_000.0, "amplitude": 0.18},
            )
            for hz in stations
        ] + [SignalSpec("noise_floor", 0, {"power_dbfs": -60.0})]
        fe = FrontEnd(scenario, center_freq_hz=CENTER, sample_rate_hz=RATE, seed=3)
        stream = PsdStream(PsdConfig())
        frames = []
        while len(frames) < 16:  # two seconds of history at 8 fps
            frames.extend(stream.feed(fe.render(fe.chunk_samples)))
        spans = detect_channels(frames[:16], PROFILE)
        assert len(spans) == 3
        for span, hz in zip(spans, stations):
            assert abs(span.center_hz - hz) < 30_000.0
            assert span.contains(hz)
