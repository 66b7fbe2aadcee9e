/** Frequency/pixel mapping for the waterfall and the channel overlay.
 *
 * The horizontal axis maps [center - rate/2, center + rate/2] linearly onto
 * [0, width) pixels, matching the PSD bin layout (DC at the middle bin).
 */

import type { ChannelSpan } from "./wire.js";

export function pixelToFreq(
  x: number, width: number, centerHz: number, rateHz: number,
): number {
  const frac = (x + 0.5) / width; // pixel centers, not edges
  return Math.round(centerHz + (frac - 0.5) * rateHz);
}

export function freqToPixel(
  freqHz: number, width: number, centerHz: number, rateHz: number,
): number {
  return ((freqHz - centerHz) / rateHz + 0.5) * width;
}

/** Span rectangle in pixel space; edges at center +- width/2. */
export function spanRect(
  span: ChannelSpan, width: number, centerHz: number, rateHz: number,
): { x0: number; x1: number } {
  const x0 = freqToPixel(span.center_hz - span.width_hz / 2, width, centerHz, rateHz);
  const x1 = freqToPixel(span.center_hz + span.width_hz / 2, width, centerHz, rateHz);
  return { x0, x1 };
}

export function spanAt(spans: ChannelSpan[], freqHz: number): ChannelSpan | null {
  for (const span of spans) {
    if (Math.abs(freqHz - span.center_hz) <= span.width_hz / 2) {
      return span;
    }
  }
  return null;
}

/** Click target: the span's center when the click lands inside one. */
export function clickFreq(
  x: number, width: number, centerHz: number, rateHz: number, spans: ChannelSpan[],
): number {
  const raw = pixelToFreq(x, width, centerHz, rateHz);
  const span = spanAt(spans, raw);
  return span ? Math.round(span.center_hz) : raw;
}
