"""Virtual front end: signal synthesis, tuning, capture files, playback."""

import json

import numpy as np
import pytest

from bandcast.dsp import PsdConfig, welch_psd
from bandcast.iqsource import (
    ALLOWED_SAMPLE_RATES,
    CHUNK_SECONDS,
    FrontEnd,
    PlaybackFrontEnd,
    SignalSpec,
    SourceError,
    default_fm_scenario,
    playback,
    write_cu8,
)

FM_SIGNALS = [
    SignalSpec(kind="noise_floor", carrier_hz=0, params={"power_dbfs": -45}),
    SignalSpec(
        kind="fm_broadcast",
        carrier_hz=100_300_000,
        params={"audio_hz": 1_000.0, "amplitude": 0.5},
    ),
]


def spectrum_peak_hz(chunk):
    psd = welch_psd(chunk, PsdConfig())
    k = int(np.argmax(psd.power_db))
    return psd.bin_freq_hz(k)


class TestFrontEnd:
    def test_same_seed_same_samples(self):
        a = FrontEnd(FM_SIGNALS, seed=3).render(10_000)
        b = FrontEnd(FM_SIGNALS, seed=3).render(10_000)
        assert np.array_equal(a.samples, b.samples)

    def test_different_seed_different_noise(self):
        a = FrontEnd(FM_SIGNALS, seed=3).render(10_000)
        b = FrontEnd(FM_SIGNALS, seed=4).render(10_000)
        assert not np.array_equal(a.samples, b.samples)

    def test_station_appears_at_its_carrier_offset(self):
        fe = FrontEnd(FM_SIGNALS, center_freq_hz=100_000_000, sample_rate_hz=2_400_000)
        chunk = fe.render(2_400_000 // 4)
        # wideband FM spreads across +-deviation; the peak stays inside it
        assert spectrum_peak_hz(chunk) == pytest.approx(100_300_000, abs=80_000)

    def test_out_of_band_station_is_absent(self):
        fe = FrontEnd(FM_SIGNALS, center_freq_hz=200_000_000, sample_rate_hz=2_400_000)
        chunk = fe.render(100_000)
        assert np.mean(np.abs(chunk.samples) ** 2) < 1e-3  # just the noise floor

    def test_gain_scales_output(self):
        lo = FrontEnd(FM_SIGNALS, gain_db=0.0, seed=1).render(50_000)
        hi = FrontEnd(FM_SIGNALS, gain_db=20.0, seed=1).render(50_000)
        assert np.allclose(hi.samples, lo.samples * 10.0, rtol=1e-4, atol=1e-6)

    def test_tune_moves_the_window(self):
        fe = FrontEnd(FM_SIGNALS, center_freq_hz=98_000_000, sample_rate_hz=2_400_000)
        fe.tune(100_000_000)
        chunk = fe.render(2_400_000 // 4)
        assert chunk.center_freq_hz == 100_000_000
        assert spectrum_peak_hz(chunk) == pytest.approx(100_300_000, abs=80_000)

    def test_tune_range_enforced(self):
        fe = FrontEnd(FM_SIGNALS)
        with pytest.raises(SourceError):
            fe.tune(-1)
        with pytest.raises(SourceError):
            fe.tune(10_000_000_000)

    def test_timestamps_advance_with_rendered_samples(self):
        fe = FrontEnd(FM_SIGNALS, sample_rate_hz=2_400_000)
        a = fe.render(240_000)
        b = fe.render(240_000)
        assert b.timestamp_ms - a.timestamp_ms == 100

    def test_chunk_sizing_follows_rate(self):
        fe = FrontEnd(FM_SIGNALS, sample_rate_hz=2_400_000)
        assert fe.chunk_samples == int(CHUNK_SECONDS * 2_400_000)


class TestSampleRateSwitch:
    def test_allowed_rates_only(self):
        fe = FrontEnd(FM_SIGNALS)
        with pytest.raises(SourceError) as err:
            fe.set_sample_rate(1_000_000)
        assert err.value.code == "BAD_RATE"
        for rate in ALLOWED_SAMPLE_RATES:
            fe.set_sample_rate(rate)
            assert fe.sample_rate_hz == rate

    def test_signal_time_continuous_across_switch(self):
        # a 1 kHz AM tone must not jump phase when the rate changes
        signals = [
            SignalSpec(
                kind="tone", carrier_hz=100_010_000, params={"amplitude": 1.0}
            )
        ]
        fe = FrontEnd(signals, center_freq_hz=100_000_000, sample_rate_hz=2_400_000)
        fe.render(240_000)  # 0.1 s at the old rate
        fe.set_sample_rate(2_000_000)
        chunk = fe.render(2_000)
        t0 = 0.1  # seconds of signal already elapsed
        expect = np.exp(2j * np.pi * 10_000 * (t0 + np.arange(2_000) / 2_000_000))
        assert np.allclose(chunk.samples, expect.astype(np.complex64), atol=1e-3)

    def test_chunk_samples_tracks_new_rate(self):
        fe = FrontEnd(FM_SIGNALS, sample_rate_hz=2_400_000)
        fe.set_sample_rate(240_000)
        assert fe.chunk_samples == int(CHUNK_SECONDS * 240_000)


class TestAdsbBursts:
    SIGNALS = [
        SignalSpec(
            kind="adsb_burst",
            carrier_hz=1_090_000_000,
            params={
                "payload": "8d4840d6202cc371c32ce0576098",
                "repeat_ms": 50,
                "amplitude": 0.4,
            },
        )
    ]

    def test_repeats_are_bit_identical(self):
        fe = FrontEnd(self.SIGNALS, center_freq_hz=1_090_000_000, sample_rate_hz=2_400_000)
        fe.set_sample_rate(2_000_000)
        period = 100_000  # 50 ms at 2 Msps
        x = np.concatenate([fe.render(fe.chunk_samples).samples for _ in range(4)])
        first = x[:240]
        assert np.abs(first).max() > 0.3
        for k in range(1, len(x) // period):
            burst = x[k * period : k * period + 240]
            assert np.array_equal(burst, first)

    def test_preamble_pulse_positions(self):
        fe = FrontEnd(self.SIGNALS, center_freq_hz=1_090_000_000, sample_rate_hz=2_400_000)
        fe.set_sample_rate(2_000_000)
        mag = np.abs(fe.render(32).samples)
        hot = set(np.flatnonzero(mag > 0.2).tolist())
        assert {0, 2, 7, 9} <= hot
        assert not {1, 3, 4, 5, 6, 8} & hot


class TestCaptureFiles:
    def test_write_read_round_trip(self, tmp_path):
        fe = FrontEnd(FM_SIGNALS, sample_rate_hz=2_400_000, seed=2)
        chunks = [fe.render(100_000) for _ in range(3)]
        path = tmp_path / "band.cu8"
        write_cu8(path, chunks)
        assert path.stat().st_size == 2 * 300_000
        sidecar = json.loads((path.with_suffix(".cu8.json")).read_text())
        assert sidecar["sample_rate_hz"] == 2_400_000
        back = np.concatenate([c.samples for c in playback(path)])
        orig = np.concatenate([c.samples for c in chunks])
        assert len(back) == len(orig)
        # 8-bit quantization: within half an LSB of 1/127.5
        assert np.max(np.abs(back.real - orig.real)) <= (1.01 / 255)
        assert np.max(np.abs(back.imag - orig.imag)) <= (1.01 / 255)

    def test_playback_loop_wraps(self, tmp_path):
        fe = FrontEnd(FM_SIGNALS, sample_rate_hz=2_400_000, seed=2)
        path = tmp_path / "loop.cu8"
        write_cu8(path, [fe.render(50_000)])
        gen = playback(path, loop=True)
        first = next(gen)
        for _ in range(3):
            again = next(gen)
        assert np.array_equal(again.samples, first.samples)

    def test_playback_front_end(self, tmp_path):
        fe = FrontEnd(FM_SIGNALS, center_freq_hz=100_000_000, sample_rate_hz=2_400_000, seed=2)
        path = tmp_path / "cap.cu8"
        write_cu8(path, [fe.render(480_000)])
        pb = PlaybackFrontEnd(path)
        assert pb.sample_rate_hz == 2_400_000
        assert pb.center_freq_hz == 100_000_000
        chunk = pb.render(pb.chunk_samples)
        assert len(chunk) == pb.chunk_samples
        assert spectrum_peak_hz(chunk) == pytest.approx(100_300_000, abs=80_000)
        # only the capture's native rate is available
        with pytest.raises(SourceError) as err:
            pb.set_sample_rate(240_000)
        assert err.value.code == "BAD_RATE"
        pb.set_sample_rate(2_400_000)  # a no-op is fine
        # tuning within range is accepted but cannot move the capture
        pb.tune(100_100_000)
        more = pb.render(1_000)
        assert len(more) == 1_000

    def test_empty_write_rejected(self, tmp_path):
        with pytest.raises(SourceError):
            write_cu8(tmp_path / "x.cu8", [])


def test_default_scenario_has_stations_and_noise():
    specs = default_fm_scenario()
    kinds = {s.kind for s in specs}
    assert "fm_broadcast" in kinds
    assert "noise_floor" in kinds
