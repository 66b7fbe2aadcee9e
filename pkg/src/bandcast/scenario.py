"""Scenario files: the JSON documents that drive fixtures and simulations.

A scenario declares the RF environment (signal specs), the sensor fleet,
scripted client timelines, and reward parameters. Validation is strict:
unknown keys anywhere in the document are rejected.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import jsonschema

from .iqsource import SignalSpec, default_fm_scenario
from .rewards import RewardParams, SensorWeek


class ScenarioError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


_SIGNAL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {
            "enum": ["fm_broadcast", "am_broadcast", "adsb_burst", "tone", "noise_floor"]
        },
        "carrier_hz": {"type": "integer", "minimum": 0},
        "params": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "audio_hz": {"type": "number", "exclusiveMinimum": 0},
                "deviation_hz": {"type": "number", "exclusiveMinimum": 0},
                "mod_index": {"type": "number"},
                "amplitude": {"type": "number", "minimum": 0},
                "payload": {"type": "string", "pattern": "^[0-9a-fA-F]{28}$"},
                "repeat_ms": {"type": "number", "exclusiveMinimum": 0},
                "power_dbfs": {"type": "number"},
            },
        },
    },
}

_STEP_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["at_s", "action"],
    "properties": {
        "at_s": {"type": "number", "minimum": 0},
        "action": {
            "enum": ["connect", "tune", "gain", "decoder", "volume", "disconnect"]
        },
        "sensor_id": {"type": "string"},
        "freq_hz": {"type": "integer", "minimum": 0},
        "gain_db": {"type": "number"},
        "decoder_id": {"type": "string"},
        "level": {"type": "number"},
    },
}

_WEEK_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["sensor_id", "owner_id", "density", "deploy_day", "days_psd", "days_dec"],
    "properties": {
        "sensor_id": {"type": "string"},
        "owner_id": {"type": "string"},
        "density": {"type": "integer", "minimum": 1},
        "deploy_day": {"type": "integer", "minimum": 1},
        "days_psd": {"type": "number", "minimum": 0, "maximum": 7},
        "days_dec": {"type": "number", "minimum": 0, "maximum": 7},
    },
}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "duration_s": {"type": "number", "exclusiveMinimum": 0},
        "time_scale": {"type": "number", "exclusiveMinimum": 0},
        "signals": {"type": "array", "items": _SIGNAL_SCHEMA},
        "front_end": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "sample_rate_hz": {"type": "integer", "enum": [240000, 2000000, 2400000]},
                "center_freq_hz": {"type": "integer", "minimum": 0},
                "gain_db": {"type": "number"},
            },
        },
        "fleet": {
            "type": "object",
            "additionalProperties": False,
            "required": ["count"],
            "properties": {
                "count": {"type": "integer", "minimum": 0},
                "locations": {
                    "type": "array",
                    "items": {
                        "type": "array",
                        "items": {"type": "number"},
                        "minItems": 2,
                        "maxItems": 2,
                    },
                },
                "deploy_days": {"type": "array", "items": {"type": "integer", "minimum": 1}},
            },
        },
        "clients": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["user_id", "script"],
                "properties": {
                    "user_id": {"type": "string"},
                    "script": {"type": "array", "items": _STEP_SCHEMA},
                },
            },
        },
        "campaign": {
            "type": "object",
            "additionalProperties": False,
            "required": ["freqs_hz", "dwell_ms"],
            "properties": {
                "freqs_hz": {
                    "type": "array",
                    "items": {"type": "integer", "minimum": 0},
                    "minItems": 1,
                },
                "dwell_ms": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "rewards": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "p_psd": {"type": "number", "minimum": 0},
                "p_dec": {"type": "number", "exclusiveMinimum": 0},
                "network_share": {"type": "number", "minimum": 0, "maximum": 1},
                "network_age_days": {"type": "integer", "minimum": 1},
            },
        },
        "settlement": {
            "type": "object",
            "additionalProperties": False,
            "required": ["week_id", "sensor_weeks"],
            "properties": {
                "week_id": {"type": "integer", "minimum": 0},
                "sensor_weeks": {"type": "array", "items": _WEEK_SCHEMA},
            },
        },
    },
}


class Scenario:
    """Validated scenario document with typed accessors."""

    def __init__(self, doc: dict):
        try:
            jsonschema.validate(doc, SCENARIO_SCHEMA)
        except jsonschema.ValidationError as exc:
            path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ScenarioError("SCHEMA", f"{path}: {exc.message}") from exc
        self.doc = doc

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ScenarioError("IO", str(exc)) from exc
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError("SCHEMA", f"not valid JSON: {exc}") from exc
        return cls(doc)

    @property
    def name(self) -> str:
        return self.doc.get("name", "scenario")

    @property
    def seed(self) -> int:
        return self.doc.get("seed", 0)

    @property
    def duration_s(self) -> float:
        return self.doc.get("duration_s", 10.0)

    @property
    def time_scale(self) -> float:
        return self.doc.get("time_scale", 1.0)

    def signals(self) -> list[SignalSpec]:
        rows = self.doc.get("signals")
        if rows is None:
            return default_fm_scenario()
        return [
            SignalSpec(
                kind=r["kind"],
                carrier_hz=r.get("carrier_hz", 0),
                params=dict(r.get("params", {})),
            )
            for r in rows
        ]

    def front_end(self) -> dict:
        fe = dict(self.doc.get("front_end", {}))
        fe.setdefault("sample_rate_hz", 2_400_000)
        fe.setdefault("center_freq_hz", 100_000_000)
        fe.setdefault("gain_db", 0.0)
        return fe

    def fleet(self) -> list[dict]:
        fleet = self.doc.get("fleet", {"count": 1})
        count = fleet.get("count", 1)
        locations = fleet.get("locations", [])
        deploy_days = fleet.get("deploy_days", [])
        out = []
        for i in range(count):
            loc = locations[i] if i < len(locations) else [47.0 + i * 0.001, 8.0]
            out.append(
                {
                    "sensor_id": f"sensor-{i + 1:03d}",
                    "owner_id": f"owner-{i + 1:03d}",
                    "location": loc,
                    "deploy_day": deploy_days[i] if i < len(deploy_days) else 1,
                }
            )
        return out

    def clients(self) -> list[dict]:
        return self.doc.get("clients", [])

    def campaign(self) -> dict:
        return self.doc.get(
            "campaign",
            {
                "freqs_hz": [88_800_000 + i * 2_400_000 for i in range(9)],
                "dwell_ms": 500.0,
            },
        )

    def reward_params(self) -> RewardParams:
        r = self.doc.get("rewards", {})
        return RewardParams(
            p_psd=r.get("p_psd", 1.0),
            p_dec=r.get("p_dec", 5.0),
            network_share=r.get("network_share", 0.4),
            network_age_days=r.get("network_age_days", 500),
        )

    def settlement_weeks(self) -> tuple[int, list[SensorWeek]] | None:
        s = self.doc.get("settlement")
        if s is None:
            return None
        weeks = [SensorWeek(**w) for w in s["sensor_weeks"]]
        return s["week_id"], weeks

    def hash(self) -> str:
        canon = json.dumps(self.doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]
