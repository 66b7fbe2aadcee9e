"""Render a simulation report: text table, CSV, JSON, and figures.

The figure set mirrors what the browser client shows live: a waterfall of
the PSD frames one client received, the averaged spectrum with detected
channel spans, and the payout split of the settled statement.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .sim import SimReport


def format_table(report: SimReport) -> str:
    lines = [
        f"scenario {report.name}  hash {report.scenario_hash}  version {report.version}",
        f"duration {report.duration_s:g} s at x{report.time_scale:g}  "
        f"sensors {report.sensor_count}  offers {report.offers_minted}  "
        f"busy rejections {report.busy_rejections}  dropped chunks {report.dropped_chunks}",
        "",
    ]
    if report.clients:
        header = (
            f"{'client':<12} {'psd kb/s':>9} {'audio kb/s':>10} {'json kb/s':>10} "
            f"{'connect s':>10} {'audio s':>8} {'retune s':>9} {'busy':>5}"
        )
        lines += [header, "-" * len(header)]
        for c in report.clients:
            kbps = c.kbps()

            def cell(value, width=9):
                return f"{value:>{width}.3f}" if value is not None else " " * (width - 1) + "-"

            lines.append(
                f"{c.user_id:<12} {kbps.get('psd', 0.0):>9.1f} {kbps.get('audio', 0.0):>10.1f} "
                f"{kbps.get('json', 0.0):>10.1f} {cell(c.connect_to_psd_s, 10)} "
                f"{cell(c.decoder_to_audio_s, 8)} {cell(c.retune_s, 9)} {c.busy_rejects:>5d}"
            )
        lines.append("")
    if report.signaling_kbps:
        rates = sorted(report.signaling_kbps.values())
        lines.append(
            f"signaling kb/s per sensor: min {rates[0]:.3f}  "
            f"median {rates[len(rates) // 2]:.3f}  max {rates[-1]:.3f}"
        )
    if report.statement is not None:
        s = report.statement
        lines += [
            "",
            f"week {s.week_id}: gross {s.gross_charges_mtk} mtk, "
            f"network share {s.network_share_mtk} mtk, "
            f"pools psd {s.pool_psd_mtk} / dec {s.pool_dec_mtk} mtk, "
            f"benefit {s.network_benefit_mtk} mtk",
        ]
        for sensor_id, row in _payouts_by_sensor(s).items():
            lines.append(
                f"  {sensor_id:<12} owner {row['owner_id']:<12} "
                f"psd {row['psd']:>8d} mtk  dec {row['dec']:>8d} mtk"
            )
    return "\n".join(lines)


def _payouts_by_sensor(statement) -> dict[str, dict]:
    out: dict[str, dict] = {}
    for line in statement.payouts:
        row = out.setdefault(line.sensor_id, {"owner_id": line.owner_id, "psd": 0, "dec": 0})
        row[line.pipeline] += line.amount_mtk
    return out


def write_csv(report: SimReport, path: Path) -> None:
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["record", "id", "psd_kbps", "audio_kbps", "json_kbps", "channels_kbps",
             "total_kbps", "connect_to_psd_s", "decoder_to_audio_s", "retune_s",
             "busy_rejects", "signaling_kbps"]
        )
        for c in report.clients:
            kbps = c.kbps()
            writer.writerow(
                ["client", c.user_id, *(round(kbps.get(k, 0.0), 3) for k in
                 ("psd", "audio", "json", "channels", "total")),
                 c.connect_to_psd_s, c.decoder_to_audio_s, c.retune_s,
                 c.busy_rejects, ""]
            )
        for sensor_id, rate in sorted(report.signaling_kbps.items()):
            writer.writerow(
                ["sensor", sensor_id, "", "", "", "", "", "", "", "", "", round(rate, 4)]
            )
        if report.statement is not None:
            for sensor_id, row in _payouts_by_sensor(report.statement).items():
                writer.writerow(
                    ["payout", sensor_id, "", "", "", "", "", "", "", "", "",
                     f"psd={row['psd']};dec={row['dec']}"]
                )


def _plot_waterfall(client, path: Path) -> bool:
    history = list(client.psd_history)
    if not history:
        return False
    grid = np.vstack([f.power_db for f in history])
    head = history[-1]
    freqs = (head.bin_freq_hz(np.arange(head.fft_size))) / 1e6
    fig, ax = plt.subplots(figsize=(8, 5))
    img = ax.imshow(
        grid,
        aspect="auto",
        origin="lower",
        extent=(freqs[0], freqs[-1], 0, len(history)),
        cmap="viridis",
    )
    ax.set_xlabel("frequency (MHz)")
    ax.set_ylabel("frame")
    ax.set_title(f"waterfall, client {client.user_id}")
    fig.colorbar(img, ax=ax, label="dBFS")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return True


def _plot_spectrum(client, path: Path) -> bool:
    history = list(client.psd_history)
    if not history:
        return False
    head = history[-1]
    recent = [f for f in history if f.center_freq_hz == head.center_freq_hz]
    avg = np.mean([f.power_db for f in recent], axis=0)
    freqs = head.bin_freq_hz(np.arange(head.fft_size)) / 1e6
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot(freqs, avg, lw=0.8)
    for span in client.last_channels:
        lo = (span["center_hz"] - span["width_hz"] / 2) / 1e6
        hi = (span["center_hz"] + span["width_hz"] / 2) / 1e6
        ax.axvspan(lo, hi, alpha=0.25, color="tab:orange")
    ax.set_xlabel("frequency (MHz)")
    ax.set_ylabel("power (dBFS)")
    ax.set_title(f"averaged spectrum with detected channels, client {client.user_id}")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return True


def _plot_payouts(statement, path: Path) -> bool:
    if statement is None or not statement.payouts:
        return False
    rows = _payouts_by_sensor(statement)
    labels = list(rows)
    psd = [rows[k]["psd"] for k in labels]
    dec = [rows[k]["dec"] for k in labels]
    x = np.arange(len(labels))
    fig, ax = plt.subplots(figsize=(max(6, len(labels) * 0.9), 4))
    ax.bar(x - 0.2, psd, width=0.4, label="spectrum pool")
    ax.bar(x + 0.2, dec, width=0.4, label="decoding pool")
    ax.set_xticks(x, labels, rotation=30, ha="right")
    ax.set_ylabel("payout (mtk)")
    ax.set_title(f"week {statement.week_id} payouts")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return True


def render_report(
    report: SimReport,
    out_dir: str | Path | None = None,
    json_path: str | Path | None = None,
) -> list[Path]:
    """Print the table; write JSON/CSV/figures when paths are given."""
    print(format_table(report))
    written: list[Path] = []
    if json_path is not None:
        json_path = Path(json_path)
        json_path.parent.mkdir(parents=True, exist_ok=True)
        json_path.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
        written.append(json_path)
    if out_dir is None:
        return written
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "metrics.csv"
    write_csv(report, csv_path)
    written.append(csv_path)
    full = out_dir / "metrics.json"
    full.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    written.append(full)
    streamed = [c for c in report.clients if c.psd_history]
    if streamed:
        best = max(streamed, key=lambda c: len(c.psd_history))
        if _plot_waterfall(best, out_dir / "waterfall.png"):
            written.append(out_dir / "waterfall.png")
        if _plot_spectrum(best, out_dir / "spectrum.png"):
            written.append(out_dir / "spectrum.png")
    if _plot_payouts(report.statement, out_dir / "payouts.png"):
        written.append(out_dir / "payouts.png")
    return written
