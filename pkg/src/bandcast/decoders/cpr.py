"""Compact position reporting: airborne encode and global decode.

Positions travel as 17-bit fractions of a latitude/longitude zone; even
frames use 60 latitude zones, odd frames 59, and a frame pair pins the
zone indices down. The encoder exists for fixture generation and as the
round-trip oracle for the decoder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import DecodeError

NZ = 15
DLAT_EVEN = 360.0 / (4 * NZ)  # 6 degrees
DLAT_ODD = 360.0 / (4 * NZ - 1)
CPR_SCALE = 1 << 17


@dataclass(frozen=True)
class CprFix:
    lat17: int
    lon17: int
    odd: bool

    def __post_init__(self):
        if not 0 <= self.lat17 < CPR_SCALE or not 0 <= self.lon17 < CPR_SCALE:
            raise DecodeError("BAD_CPR", "lat17/lon17 must be 17-bit values")


def nl(lat_deg: float) -> int:
    """Longitude zone count at a latitude."""
    if lat_deg == 0:
        return 59
    a = abs(lat_deg)
    if a == 87:
        return 2
    if a > 87:
        return 1
    c = 1 - (1 - math.cos(math.pi / (2 * NZ))) / math.cos(math.radians(a)) ** 2
    return int(math.floor(2 * math.pi / math.acos(c)))


def cpr_encode(lat_deg: float, lon_deg: float, odd: bool) -> CprFix:
    if not -90 <= lat_deg <= 90:
        raise DecodeError("BAD_CPR", "latitude out of range")
    dlat = DLAT_ODD if odd else DLAT_EVEN
    yz = math.floor(CPR_SCALE * (lat_deg % dlat) / dlat + 0.5)
    rlat = dlat * (yz / CPR_SCALE + math.floor(lat_deg / dlat))
    zones = max(nl(rlat) - (1 if odd else 0), 1)
    dlon = 360.0 / zones
    xz = math.floor(CPR_SCALE * (lon_deg % dlon) / dlon + 0.5)
    return CprFix(lat17=yz % CPR_SCALE, lon17=xz % CPR_SCALE, odd=odd)


def cpr_global_decode(even: CprFix, odd: CprFix) -> tuple[float, float]:
    """Decode an even/odd pair into (lat_deg, lon_deg).

    The returned position is the even frame's; the pair must lie in one
    latitude zone or the zone index is ambiguous.
    """
    if even.odd or not odd.odd:
        raise DecodeError("BAD_CPR", "need one even and one odd fix")
    lat_e = even.lat17 / CPR_SCALE
    lat_o = odd.lat17 / CPR_SCALE
    j = math.floor(59 * lat_e - 60 * lat_o + 0.5)
    rlat_e = DLAT_EVEN * ((j % 60) + lat_e)
    rlat_o = DLAT_ODD * ((j % 59) + lat_o)
    if rlat_e >= 270:
        rlat_e -= 360
    if rlat_o >= 270:
        rlat_o -= 360
    if nl(rlat_e) != nl(rlat_o):
        raise DecodeError("ZONE_MISMATCH", "fixes straddle a latitude zone")
    zones = nl(rlat_e)
    ni = max(zones, 1)
    dlon = 360.0 / ni
    m = math.floor((even.lon17 / CPR_SCALE) * (zones - 1)
                   - (odd.lon17 / CPR_SCALE) * zones + 0.5)
    lon = dlon * ((m % ni) + even.lon17 / CPR_SCALE)
    if lon > 180:
        lon -= 360
    return rlat_e, lon
