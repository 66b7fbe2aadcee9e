/** Canvas rendering: scrolling waterfall, newest-frame spectrum line, and
 * the channel-span overlay. One row is painted per PSD frame as it
 * arrives, so the row rate equals the sensor's frame rate.
 */

import type { ColorScale } from "./colorscale.js";
import { freqToPixel, spanRect } from "./geometry.js";
import type { ChannelSpan, PsdFrame } from "./wire.js";

export class WaterfallView {
  private readonly ctx: CanvasRenderingContext2D;
  private readonly row: ImageData;
  rowsDrawn = 0;

  constructor(private readonly canvas: HTMLCanvasElement) {
    const ctx = canvas.getContext("2d");
    if (!ctx) {
      throw new Error("2d canvas unavailable");
    }
    this.ctx = ctx;
    this.row = ctx.createImageData(canvas.width, 1);
    ctx.fillStyle = "#050824";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
  }

  clear(): void {
    this.ctx.fillStyle = "#050824";
    this.ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
    this.rowsDrawn = 0;
  }

  appendRow(frame: PsdFrame, scale: ColorScale): void {
    const { width, height } = this.canvas;
    // scroll down one row, newest on top
    this.ctx.drawImage(this.canvas, 0, 0, width, height - 1, 0, 1, width, height - 1);
    const bins = frame.bins;
    const data = this.row.data;
    for (let x = 0; x < width; x++) {
      const bin = Math.min(bins.length - 1, Math.floor((x / width) * bins.length));
      const [r, g, b] = scale.rgb(bins[bin]!);
      const o = x * 4;
      data[o] = r;
      data[o + 1] = g;
      data[o + 2] = b;
      data[o + 3] = 255;
    }
    this.ctx.putImageData(this.row, 0, 0);
    this.rowsDrawn += 1;
  }
}

export class SpectrumView {
  private readonly ctx: CanvasRenderingContext2D;

  constructor(private readonly canvas: HTMLCanvasElement) {
    const ctx = canvas.getContext("2d");
    if (!ctx) {
      throw new Error("2d canvas unavailable");
    }
    this.ctx = ctx;
  }

  clear(): void {
    this.ctx.fillStyle = "#0b0e1a";
    this.ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
  }

  render(
    frame: PsdFrame,
    spans: ChannelSpan[],
    scale: ColorScale,
    tunedHz: number | null,
  ): void {
    const { width, height } = this.canvas;
    const ctx = this.ctx;
    this.clear();
    const dbToY = (db: number): number => {
      const t = (db - scale.minDb) / (scale.maxDb - scale.minDb);
      return height - 1 - Math.max(0, Math.min(1, t)) * (height - 1);
    };

    // span rectangles, drawn first so the trace stays readable
    ctx.strokeStyle = "#e0404d";
    ctx.lineWidth = 1;
    for (const span of spans) {
      const { x0, x1 } = spanRect(span, width, frame.centerHz, frame.rateHz);
      const left = Math.round(x0);
      const right = Math.round(x1);
      ctx.strokeRect(left + 0.5, 0.5, Math.max(1, right - left) - 1, height - 1);
    }

    ctx.strokeStyle = "#5fd4f0";
    ctx.beginPath();
    const bins = frame.bins;
    for (let x = 0; x < width; x++) {
      const bin = Math.min(bins.length - 1, Math.floor((x / width) * bins.length));
      const y = dbToY(bins[bin]!);
      if (x === 0) {
        ctx.moveTo(x, y);
      } else {
        ctx.lineTo(x, y);
      }
    }
    ctx.stroke();

    if (tunedHz !== null) {
      const x = Math.round(freqToPixel(tunedHz, width, frame.centerHz, frame.rateHz));
      ctx.strokeStyle = "#f5f5f5";
      ctx.beginPath();
      ctx.moveTo(x + 0.5, 0);
      ctx.lineTo(x + 0.5, height);
      ctx.stroke();
    }
  }
}
