"""Command line entry points.

`sensor run` and `backend run` host the daemons; `fixtures gen` writes
deterministic I/Q corpora; `simulate` runs the loopback harness and
renders its report; `rewards settle` turns declared sensor weeks into a
ledger statement. Exit codes: 0 success, 2 schema/config error, 3
runtime failure.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path

import numpy as np

from .backend import Backend, BackendError, load_credentials
from .clock import Clock
from .decoders.adsb import build_df17
from .decoders.cpr import cpr_encode
from .dsp import DspError
from .iqsource import (
    FrontEnd,
    IqChunk,
    PlaybackFrontEnd,
    SourceError,
    encode_modes_burst,
    write_cu8,
)
from .rewards import Ledger, RewardError, RewardParams, SensorWeek, settle_week
from .scenario import Scenario, ScenarioError
from .sensor import SensorConfig, SensorDaemon, SensorError
from .sim import SimError

SCHEMA_ERROR_CODES = frozenset(
    {"SCHEMA", "BAD_CONFIG", "BAD_CREDENTIALS", "BAD_PARAM", "BAD_PROFILE",
     "DENSITY_ZERO", "NEGATIVE_TIME"}
)

CORPUS_SPACING_SAMPLES = 4000  # 2 ms between burst starts at 2 Msps
CORPUS_NOISE_DBFS = -40.0
CALLSIGN_CHARS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"


def _load_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ScenarioError("IO", str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError("SCHEMA", f"{path} is not valid JSON: {exc}") from exc


# ---- fixtures ---------------------------------------------------------------


def gen_band_fixture(scenario: Scenario, out_dir: Path) -> Path:
    """Render the scenario band for duration_s into one cu8 capture."""
    fe_conf = scenario.front_end()
    fe = FrontEnd(
        scenario.signals(),
        center_freq_hz=fe_conf["center_freq_hz"],
        sample_rate_hz=fe_conf["sample_rate_hz"],
        gain_db=fe_conf["gain_db"],
        seed=scenario.seed,
    )
    total = int(round(scenario.duration_s * fe.sample_rate_hz))
    chunks = []
    step = fe.sample_rate_hz  # render one second at a time
    while total > 0:
        chunks.append(fe.render(min(step, total)))
        total -= step
    path = out_dir / f"{scenario.name}_band.cu8"
    write_cu8(path, chunks)
    return path


def gen_adsb_corpus(seed: int, count: int, out_dir: Path, name: str) -> tuple[Path, Path]:
    """A timeline of CRC-valid downlink bursts plus ground-truth JSONL.

    Position reports come as even/odd pairs sharing one aircraft state so
    the pair decodes to the recorded lat/lon.
    """
    rng = np.random.default_rng(seed)
    total = count * CORPUS_SPACING_SAMPLES + 8000
    buf = np.zeros(total, dtype=np.complex64)
    truth = []
    index = 0
    while index < count:
        icao = int(rng.integers(1, 1 << 24))
        offset = index * CORPUS_SPACING_SAMPLES + int(rng.integers(0, 1000))
        if index + 1 < count and rng.random() < 0.5:
            lat = float(rng.uniform(-60, 60))
            lon = float(rng.uniform(-179, 179))
            alt = int(rng.integers(1, 2000)) * 25 - 1000
            rows = []
            for odd in (False, True):
                fix = cpr_encode(lat, lon, odd)
                payload = build_df17(icao, 11, altitude_ft=alt, cpr=fix)
                rows.append(
                    {
                        "index": index + int(odd),
                        "sample_offset": offset + int(odd) * CORPUS_SPACING_SAMPLES,
                        "hex": payload.hex(),
                        "icao": f"{icao:06X}",
                        "kind": "pos_odd" if odd else "pos_even",
                        "alt_ft": alt,
                        "lat": round(lat, 6),
                        "lon": round(lon, 6),
                    }
                )
            for row in rows:
                burst = encode_modes_burst(bytes.fromhex(row["hex"]))
                buf[row["sample_offset"] : row["sample_offset"] + len(burst.samples)] += (
                    burst.samples
                )
                truth.append(row)
            index += 2
        else:
            callsign = "".join(
                rng.choice(list(CALLSIGN_CHARS)) for _ in range(6)
            ) + "  "
            payload = build_df17(icao, 4, callsign=callsign)
            burst = encode_modes_burst(payload)
            buf[offset : offset + len(burst.samples)] += burst.samples
            truth.append(
                {
                    "index": index,
                    "sample_offset": offset,
                    "hex": payload.hex(),
                    "icao": f"{icao:06X}",
                    "kind": "ident",
                    "callsign": callsign,
                }
            )
            index += 1
    sigma = np.sqrt(10.0 ** (CORPUS_NOISE_DBFS / 10.0) / 2.0)
    buf += rng.normal(scale=sigma, size=total) + 1j * rng.normal(scale=sigma, size=total)
    buf *= 0.5  # headroom so the 8-bit quantizer never clips a burst
    cu8_path = out_dir / f"{name}_adsb.cu8"
    write_cu8(
        cu8_path,
        [
            IqChunk(
                samples=buf.astype(np.complex64),
                sample_rate_hz=2_000_000,
                center_freq_hz=1_090_000_000,
                timestamp_ms=0,
            )
        ],
    )
    truth_path = out_dir / f"{name}_adsb_truth.jsonl"
    with truth_path.open("w", encoding="utf-8") as fh:
        for row in truth:
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")
    return cu8_path, truth_path


def cmd_fixtures(args) -> int:
    scenario = Scenario.load(args.scenario)
    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise SourceError("IO", str(exc)) from exc
    band = gen_band_fixture(scenario, out_dir)
    cu8, truth = gen_adsb_corpus(scenario.seed, args.adsb_count, out_dir, scenario.name)
    for path in (band, cu8, truth):
        print(f"wrote {path} ({path.stat().st_size} bytes)")
    return 0


# ---- simulate ---------------------------------------------------------------


def cmd_simulate(args) -> int:
    from .report import render_report
    from .sim import run_simulation

    scenario = Scenario.load(args.scenario)
    report = run_simulation(scenario)
    written = render_report(report, out_dir=args.out, json_path=args.json)
    for path in written:
        print(f"wrote {path}")
    return 0


# ---- rewards ----------------------------------------------------------------


def cmd_rewards_settle(args) -> int:
    doc = _load_json(args.weeks)
    if isinstance(doc, dict):
        week_id = args.week if args.week is not None else doc.get("week_id", 0)
        rows = doc.get("sensor_weeks", [])
    else:
        week_id = args.week if args.week is not None else 0
        rows = doc
    try:
        weeks = [SensorWeek(**row) for row in rows]
    except TypeError as exc:
        raise ScenarioError("SCHEMA", f"bad sensor week row: {exc}") from exc
    params = RewardParams(**_load_json(args.params)) if args.params else RewardParams()
    statement = settle_week(weeks, params, week_id)
    Ledger(args.ledger).append(statement)
    print(
        f"week {statement.week_id}: gross {statement.gross_charges_mtk} mtk, "
        f"share {statement.network_share_mtk}, pools {statement.pool_psd_mtk}/"
        f"{statement.pool_dec_mtk}, benefit {statement.network_benefit_mtk}"
    )
    for line in statement.payouts:
        print(f"  {line.sensor_id} {line.owner_id} {line.pipeline} {line.amount_mtk} mtk")
    print(f"appended to {args.ledger}")
    return 0


# ---- daemons ----------------------------------------------------------------


async def _run_sensor(conf: dict) -> None:
    if "sensor_id" not in conf or "credential" not in conf:
        raise SensorError("BAD_CONFIG", "config needs sensor_id and credential")
    clock = Clock(conf.get("time_scale", 1.0))
    if "capture" in conf:
        fe = PlaybackFrontEnd(conf["capture"], gain_db=conf.get("gain_db", 0.0))
    else:
        scenario = Scenario.load(conf["scenario"]) if "scenario" in conf else Scenario({})
        fe_conf = scenario.front_end()
        fe = FrontEnd(
            scenario.signals(),
            center_freq_hz=conf.get("center_freq_hz", fe_conf["center_freq_hz"]),
            sample_rate_hz=fe_conf["sample_rate_hz"],
            gain_db=fe_conf["gain_db"],
            seed=scenario.seed,
        )
    cfg = SensorConfig(
        sensor_id=conf["sensor_id"],
        owner_id=conf.get("owner_id", ""),
        credential=conf["credential"],
        backend_host=conf.get("backend_host", "127.0.0.1"),
        backend_port=int(conf.get("backend_port", 0)),
        peer_host=conf.get("peer_host", "127.0.0.1"),
        peer_port=int(conf.get("peer_port", 0)),
        location=tuple(conf.get("location", (47.0, 8.0))),
        deploy_day=int(conf.get("deploy_day", 1)),
        center_freq_hz=int(conf.get("center_freq_hz", fe.center_freq_hz)),
    )
    daemon = SensorDaemon(cfg, fe, clock=clock)
    await daemon.start()
    print(f"sensor {cfg.sensor_id} serving {daemon.endpoint}", flush=True)
    try:
        while True:
            await asyncio.sleep(3600)
    finally:
        await daemon.stop()


async def _run_backend(conf: dict) -> None:
    creds = conf.get("credentials", {"users": [], "sensors": []})
    if isinstance(creds, str):
        creds = load_credentials(creds)
    if "users" not in creds or "sensors" not in creds:
        raise BackendError("BAD_CREDENTIALS", "need users and sensors lists")
    backend = Backend(
        creds,
        store_path=conf.get("store", ":memory:"),
        host=conf.get("host", "127.0.0.1"),
        control_port=int(conf.get("control_port", 0)),
        http_port=int(conf.get("http_port", 0)),
        clock=Clock(conf.get("time_scale", 1.0)),
    )
    await backend.start()
    print(
        f"backend control {backend.host}:{backend.control_port} "
        f"http {backend.host}:{backend.http_port}",
        flush=True,
    )
    try:
        while True:
            await asyncio.sleep(3600)
    finally:
        await backend.stop()


def cmd_sensor_run(args) -> int:
    try:
        asyncio.run(_run_sensor(_load_json(args.config)))
    except KeyboardInterrupt:
        pass
    return 0


def cmd_backend_run(args) -> int:
    try:
        asyncio.run(_run_backend(_load_json(args.config)))
    except KeyboardInterrupt:
        pass
    return 0


# ---- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bandcast", description="crowdsourced spectrum decoding toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sensor = sub.add_parser("sensor", help="sensor daemon")
    sensor_sub = p_sensor.add_subparsers(dest="subcommand", required=True)
    p = sensor_sub.add_parser("run", help="run one sensor from a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_sensor_run)

    p_backend = sub.add_parser("backend", help="controller daemon")
    backend_sub = p_backend.add_subparsers(dest="subcommand", required=True)
    p = backend_sub.add_parser("run", help="run the backend from a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_backend_run)

    p_fixtures = sub.add_parser("fixtures", help="I/Q fixture generation")
    fixtures_sub = p_fixtures.add_subparsers(dest="subcommand", required=True)
    p = fixtures_sub.add_parser("gen", help="write capture fixtures for a scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--adsb-count", type=int, default=1000)
    p.set_defaults(func=cmd_fixtures)

    p = sub.add_parser("simulate", help="run the loopback fleet simulation")
    p.add_argument("--scenario", required=True)
    p.add_argument("--json", default=None, help="write the metrics report here")
    p.add_argument("--out", default=None, help="directory for CSV and figures")
    p.set_defaults(func=cmd_simulate)

    p_rewards = sub.add_parser("rewards", help="token reward settlement")
    rewards_sub = p_rewards.add_subparsers(dest="subcommand", required=True)
    p = rewards_sub.add_parser("settle", help="settle one week of declared usage")
    p.add_argument("--week", type=int, default=None)
    p.add_argument("--ledger", required=True)
    p.add_argument("--weeks", required=True, help="JSON file of sensor weeks")
    p.add_argument("--params", default=None)
    p.set_defaults(func=cmd_rewards_settle)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, SourceError, BackendError, SensorError, RewardError,
            DspError, SimError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = getattr(exc, "code", "")
        return 2 if code in SCHEMA_ERROR_CODES else 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
