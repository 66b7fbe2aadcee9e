"""Compact position reporting: round-trip accuracy and pairing rules."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bandcast.decoders import DecodeError
from bandcast.decoders.cpr import CprFix, cpr_encode, cpr_global_decode, nl


class TestZoneTable:
    def test_equator_value(self):
        assert nl(0.0) == 59

    def test_poles_and_boundary(self):
        assert nl(87.0) == 2
        assert nl(89.0) == 1
        assert nl(-89.0) == 1

    def test_monotone_toward_the_poles(self):
        values = [nl(lat) for lat in range(0, 88)]
        assert all(a >= b for a, b in zip(values, values[1:]))


class TestRoundTrip:
    def test_grid_accuracy(self):
        for lat in (-80.5, -47.25, -1.0, 0.0, 3.141, 40.0, 52.57, 75.9):
            for lon in (-179.9, -120.0, -1.5, 0.0, 8.54, 99.0, 179.9):
                even = cpr_encode(lat, lon, odd=False)
                odd = cpr_encode(lat, lon, odd=True)
                got_lat, got_lon = cpr_global_decode(even, odd)
                assert abs(got_lat - lat) < 0.0005
                assert abs(got_lon - lon) < 0.0005

    @settings(max_examples=300, deadline=None)
    @given(
        lat=st.floats(min_value=-85.0, max_value=85.0),
        lon=st.floats(min_value=-180.0, max_value=179.999),
    )
    def test_round_trip_property(self, lat, lon):
        even = cpr_encode(lat, lon, odd=False)
        odd = cpr_encode(lat, lon, odd=True)
        got_lat, got_lon = cpr_global_decode(even, odd)
        assert abs(got_lat - lat) < 0.0005
        # circular distance: -180 and +180 are the same meridian
        assert abs((got_lon - lon + 180.0) % 360.0 - 180.0) < 0.0005

    def test_17_bit_fields(self):
        fix = cpr_encode(47.0, 8.0, odd=False)
        assert 0 <= fix.lat17 < (1 << 17)
        assert 0 <= fix.lon17 < (1 << 17)


class TestValidation:
    def test_fix_rejects_out_of_range_fields(self):
        with pytest.raises(DecodeError):
            CprFix(lat17=1 << 17, lon17=0, odd=False)
        with pytest.raises(DecodeError):
            CprFix(lat17=0, lon17=-1, odd=True)

    def test_encode_rejects_bad_latitude(self):
        with pytest.raises(DecodeError):
            cpr_encode(95.0, 0.0, odd=False)

    def test_decode_needs_one_even_one_odd(self):
        even = cpr_encode(40.0, 9.0, odd=False)
        odd = cpr_encode(40.0, 9.0, odd=True)
        with pytest.raises(DecodeError):
            cpr_global_decode(odd, even)
        with pytest.raises(DecodeError):
            cpr_global_decode(even, even)

    def test_zone_straddle_detected(self):
        # fixes from opposite sides of the NL 59 -> 58 boundary near
        # 10.4705 deg disagree on zone count when reconstructed
        even = cpr_encode(10.45, 20.0, odd=False)
        odd = cpr_encode(10.49, 20.0, odd=True)
        with pytest.raises(DecodeError) as err:
            cpr_global_decode(even, odd)
        assert err.value.code == "ZONE_MISMATCH"
