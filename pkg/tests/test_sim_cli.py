"""CLI and loopback-simulation tests.

The simulation scenario runs once per module; the CLI entry points run
in process through main(argv) so exit codes and outputs are checked
directly.
"""

import csv
import hashlib
import json
from pathlib import Path

import pytest

from bandcast.cli import main
from bandcast.decoders.adsb import AdsbDecoder
from bandcast.iqsource import playback
from bandcast.rewards import Ledger
from bandcast.scenario import Scenario

SIM_DOC = {
    "name": "looptest",
    "seed": 5,
    "duration_s": 6.0,
    "time_scale": 3.0,
    "fleet": {"count": 1},
    "clients": [
        {
            "user_id": "u1",
            "script": [
                {"at_s": 0.5, "action": "connect", "sensor_id": "sensor-001"},
                {"at_s": 2.0, "action": "tune", "freq_hz": 105_000_000},
                {"at_s": 3.0, "action": "volume", "level": 0.8},
                {"at_s": 5.0, "action": "disconnect"},
            ],
        },
        {
            "user_id": "u2",
            "script": [{"at_s": 2.5, "action": "connect", "sensor_id": "sensor-001"}],
        },
    ],
    "settlement": {
        "week_id": 3,
        "sensor_weeks": [
            {"sensor_id": "s1", "owner_id": "o1", "density": 2, "deploy_day": 100,
             "days_psd": 7, "days_dec": 1},
            {"sensor_id": "s2", "owner_id": "o2", "density": 2, "deploy_day": 100,
             "days_psd": 7, "days_dec": 3},
        ],
    },
}

WORKED_WEEKS = {
    "week_id": 3,
    "sensor_weeks": SIM_DOC["settlement"]["sensor_weeks"],
}


@pytest.fixture(scope="module")
def sim_outputs(tmp_path_factory):
    """One simulate run shared by the assertions below."""
    root = tmp_path_factory.mktemp("sim")
    scenario_path = root / "loop.json"
    scenario_path.write_text(json.dumps(SIM_DOC))
    json_path = root / "report.json"
    out_dir = root / "out"
    rc = main(
        ["simulate", "--scenario", str(scenario_path),
         "--json", str(json_path), "--out", str(out_dir)]
    )
    assert rc == 0
    return {
        "scenario_path": scenario_path,
        "report": json.loads(json_path.read_text()),
        "out_dir": out_dir,
        "json_path": json_path,
    }


class TestSimulate:
    def test_report_identity(self, sim_outputs):
        report = sim_outputs["report"]
        assert report["name"] == "looptest"
        assert report["sensor_count"] == 1
        assert report["scenario_hash"] == Scenario.load(
            sim_outputs["scenario_path"]
        ).hash()

    def test_streaming_client_metrics(self, sim_outputs):
        u1 = sim_outputs["report"]["clients"][0]
        assert u1["user_id"] == "u1"
        assert u1["frames"]["psd"] > 0
        assert u1["frames"]["audio"] > 0
        assert u1["connect_to_psd_s"] is not None
        assert u1["connect_to_psd_s"] < 1.0
        assert u1["decoder_to_audio_s"] is not None
        assert u1["retune_s"] is not None
        assert u1["kbps"]["total"] > 0
        assert not u1["errors"]

    def test_second_client_sees_busy(self, sim_outputs):
        report = sim_outputs["report"]
        u2 = report["clients"][1]
        assert u2["busy_rejects"] == 1
        assert report["busy_rejections"] == 1
        assert report["offers_minted"] == 1

    def test_declared_settlement_in_report(self, sim_outputs):
        statement = sim_outputs["report"]["statement"]
        assert statement["week_id"] == 3
        assert statement["gross_charges_mtk"] == 28000
        assert statement["network_share_mtk"] == 11200

    def test_idle_sensor_swept(self, sim_outputs):
        assert sim_outputs["report"]["sweep_retunes"] >= 1

    def test_csv_and_figures_written(self, sim_outputs):
        out_dir = sim_outputs["out_dir"]
        with (out_dir / "metrics.csv").open() as handle:
            rows = list(csv.reader(handle))
        assert rows[0][0] == "record"
        kinds = {row[0] for row in rows[1:]}
        assert {"client", "sensor", "payout"} <= kinds
        for name in ("metrics.json", "waterfall.png", "spectrum.png", "payouts.png"):
            assert (out_dir / name).exists(), name
        # a PNG, not an empty file
        assert (out_dir / "waterfall.png").read_bytes()[:4] == b"\x89PNG"

    def test_missing_scenario_is_runtime_error(self, tmp_path, capsys):
        rc = main(["simulate", "--scenario", str(tmp_path / "absent.json")])
        assert rc == 3
        assert "error:" in capsys.readouterr().err

    def test_invalid_scenario_is_schema_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"name": "x", "unknown_key": 1}))
        rc = main(["simulate", "--scenario", str(bad)])
        assert rc == 2
        assert "error:" in capsys.readouterr().err


class TestFixtures:
    def gen(self, tmp_path, name):
        scenario_path = tmp_path / "scn.json"
        scenario_path.write_text(
            json.dumps({"name": "fxt", "seed": 9, "duration_s": 0.5})
        )
        out = tmp_path / name
        rc = main(
            ["fixtures", "gen", "--scenario", str(scenario_path),
             "--out", str(out), "--adsb-count", "12"]
        )
        assert rc == 0
        return out

    def test_band_capture_shape(self, tmp_path):
        out = self.gen(tmp_path, "a")
        band = out / "fxt_band.cu8"
        # 0.5 s at 2.4 Msps, two bytes per complex sample
        assert band.stat().st_size == 2_400_000
        sidecar = json.loads((out / "fxt_band.cu8.json").read_text())
        assert sidecar["sample_rate_hz"] == 2_400_000
        assert sidecar["center_freq_hz"] == 100_000_000

    def test_adsb_corpus_decodes_against_truth(self, tmp_path):
        out = self.gen(tmp_path, "a")
        truth = [
            json.loads(line)
            for line in (out / "fxt_adsb_truth.jsonl").read_text().splitlines()
        ]
        assert len(truth) == 12
        assert all(len(bytes.fromhex(row["hex"])) == 14 for row in truth)
        decoder = AdsbDecoder()
        seen = []
        for chunk in playback(out / "fxt_adsb.cu8"):
            seen += [f.raw.hex() for f in decoder.feed(chunk)]
        expected = [row["hex"] for row in truth]
        hits = sum(1 for hexstr in expected if hexstr in seen)
        assert hits >= 11  # quantized replay may cost at most one burst

    def test_fixtures_deterministic(self, tmp_path):
        first = self.gen(tmp_path, "a")
        second = self.gen(tmp_path, "b")
        for name in ("fxt_band.cu8", "fxt_adsb.cu8", "fxt_adsb_truth.jsonl"):
            one = hashlib.sha256((first / name).read_bytes()).hexdigest()
            two = hashlib.sha256((second / name).read_bytes()).hexdigest()
            assert one == two, name


class TestRewardsCli:
    def test_settle_appends_ledger(self, tmp_path, capsys):
        weeks = tmp_path / "weeks.json"
        weeks.write_text(json.dumps(WORKED_WEEKS))
        ledger_path = tmp_path / "ledger.jsonl"
        rc = main(
            ["rewards", "settle", "--weeks", str(weeks), "--ledger", str(ledger_path)]
        )
        assert rc == 0
        printed = capsys.readouterr().out
        assert "gross 28000 mtk" in printed
        statements = Ledger(ledger_path).statements()
        assert len(statements) == 1
        assert statements[0].week_id == 3
        assert statements[0].gross_charges_mtk == 28000
        # a second run with an explicit week id appends
        rc = main(
            ["rewards", "settle", "--weeks", str(weeks),
             "--ledger", str(ledger_path), "--week", "4"]
        )
        assert rc == 0
        statements = Ledger(ledger_path).statements()
        assert [s.week_id for s in statements] == [3, 4]

    def test_settle_rejects_bad_rows(self, tmp_path, capsys):
        weeks = tmp_path / "weeks.json"
        weeks.write_text(
            json.dumps({"week_id": 1, "sensor_weeks": [{"sensor_id": "s1"}]})
        )
        rc = main(
            ["rewards", "settle", "--weeks", str(weeks),
             "--ledger", str(tmp_path / "l.jsonl")]
        )
        assert rc == 2
        assert "error:" in capsys.readouterr().err

    def test_settle_rejects_invalid_week(self, tmp_path, capsys):
        weeks = tmp_path / "weeks.json"
        doc = {
            "week_id": 1,
            "sensor_weeks": [
                {"sensor_id": "s1", "owner_id": "o1", "density": 0,
                 "deploy_day": 1, "days_psd": 1, "days_dec": 0}
            ],
        }
        weeks.write_text(json.dumps(doc))
        rc = main(
            ["rewards", "settle", "--weeks", str(weeks),
             "--ledger", str(tmp_path / "l.jsonl")]
        )
        assert rc == 2
        assert "DENSITY_ZERO" in capsys.readouterr().err
