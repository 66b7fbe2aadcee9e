/** Aircraft position scatter: plain lat/lon axes, no map tiles. */

import type { AircraftRow } from "./state.js";

export class ScatterView {
  private readonly ctx: CanvasRenderingContext2D;

  constructor(private readonly canvas: HTMLCanvasElement) {
    const ctx = canvas.getContext("2d");
    if (!ctx) {
      throw new Error("2d canvas unavailable");
    }
    this.ctx = ctx;
  }

  render(rows: AircraftRow[]): void {
    const { width, height } = this.canvas;
    const ctx = this.ctx;
    ctx.fillStyle = "#0b0e1a";
    ctx.fillRect(0, 0, width, height);
    const fixes = rows.filter((r) => r.lat !== null && r.lon !== null);
    if (fixes.length === 0) {
      ctx.fillStyle = "#6b7280";
      ctx.font = "12px system-ui";
      ctx.fillText("no position fixes yet", 12, height / 2);
      return;
    }
    const lats = fixes.map((r) => r.lat!);
    const lons = fixes.map((r) => r.lon!);
    const pad = 0.05;
    const latSpan = Math.max(1e-4, Math.max(...lats) - Math.min(...lats));
    const lonSpan = Math.max(1e-4, Math.max(...lons) - Math.min(...lons));
    const lat0 = Math.min(...lats) - latSpan * pad;
    const lat1 = Math.max(...lats) + latSpan * pad;
    const lon0 = Math.min(...lons) - lonSpan * pad;
    const lon1 = Math.max(...lons) + lonSpan * pad;
    const toX = (lon: number): number => ((lon - lon0) / (lon1 - lon0)) * (width - 20) + 10;
    const toY = (lat: number): number => height - (((lat - lat0) / (lat1 - lat0)) * (height - 20) + 10);

    ctx.strokeStyle = "#1f2437";
    ctx.strokeRect(10, 10, width - 20, height - 20);
    for (const row of fixes) {
      ctx.fillStyle = "#5fd4f0";
      ctx.beginPath();
      ctx.arc(toX(row.lon!), toY(row.lat!), 3, 0, 2 * Math.PI);
      ctx.fill();
      ctx.fillStyle = "#9aa3b5";
      ctx.font = "10px system-ui";
      ctx.fillText(row.callsign?.trim() || row.icao, toX(row.lon!) + 5, toY(row.lat!) - 4);
    }
  }
}
