import { readFileSync } from "node:fs";
import { join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { decodeAdpcm } from "../src/adpcm.js";
import {
  FRAME_AUDIO, FRAME_CHANNELS, FRAME_CONTROL, FRAME_DECODED_JSON, FRAME_HELLO,
  FRAME_PSD, WireError, controlFrame, decodeFrame, encodeFrame, helloFrame,
  parseChannels, parseDecoded, parseError, parsePsd,
} from "../src/wire.js";

const fixture = JSON.parse(
  readFileSync(join(fileURLToPath(new URL(".", import.meta.url)), "fixtures", "wire.json"), "utf-8"),
) as Record<string, any>;

function fromHex(hex: string): Uint8Array {
  const out = new Uint8Array(hex.length / 2);
  for (let i = 0; i < out.length; i++) {
    out[i] = parseInt(hex.slice(2 * i, 2 * i + 2), 16);
  }
  return out;
}

describe("frame codec", () => {
  it("round-trips an arbitrary frame", () => {
    const payload = Uint8Array.from({ length: 97 }, (_, i) => (i * 37) & 0xff);
    const frame = decodeFrame(encodeFrame(FRAME_AUDIO, payload));
    expect(frame.frameType).toBe(FRAME_AUDIO);
    expect(Array.from(frame.payload)).toEqual(Array.from(payload));
  });

  it("rejects truncated, oversized, and unknown-type frames", () => {
    expect(() => decodeFrame(new Uint8Array(3))).toThrowError(WireError);
    const good = encodeFrame(FRAME_PSD, new Uint8Array(4));
    expect(() => decodeFrame(good.subarray(0, 7))).toThrowError(/length/);
    const bad = good.slice();
    bad[0] = 0x09;
    expect(() => decodeFrame(bad)).toThrowError(/unknown frame type/);
  });

  it("builds HELLO frames carrying the token bytes", () => {
    const frame = decodeFrame(helloFrame("tok-123"));
    expect(frame.frameType).toBe(FRAME_HELLO);
    expect(new TextDecoder().decode(frame.payload)).toBe("tok-123");
  });

  it("builds CONTROL frames matching the sensor schema", () => {
    const frame = decodeFrame(controlFrame({ cmd: "tune", freq_hz: 105_000_000 }));
    expect(frame.frameType).toBe(FRAME_CONTROL);
    expect(JSON.parse(new TextDecoder().decode(frame.payload))).toEqual({
      cmd: "tune",
      freq_hz: 105_000_000,
    });
    const decoder = decodeFrame(controlFrame({ cmd: "decoder", decoder_id: "fm" }));
    expect(JSON.parse(new TextDecoder().decode(decoder.payload))).toEqual({
      cmd: "decoder",
      decoder_id: "fm",
    });
  });
});

describe("sensor frame parsing", () => {
  it("parses the golden PSD frame", () => {
    const frame = decodeFrame(fromHex(fixture.psd_frame_hex));
    expect(frame.frameType).toBe(FRAME_PSD);
    const psd = parsePsd(frame.payload);
    const expected = fixture.psd_expect;
    expect(psd.timestampMs).toBe(expected.timestamp_ms);
    expect(psd.centerHz).toBe(expected.center_hz);
    expect(psd.rateHz).toBe(expected.rate_hz);
    expect(psd.bins.length).toBe(expected.bin_count);
    for (let i = 0; i < expected.bins_head.length; i++) {
      expect(psd.bins[i]).toBeCloseTo(expected.bins_head[i], 4);
    }
    let peak = 0;
    for (let i = 1; i < psd.bins.length; i++) {
      if (psd.bins[i]! > psd.bins[peak]!) peak = i;
    }
    expect(peak).toBe(expected.peak_bin);
  });

  it("rejects malformed PSD payloads", () => {
    expect(() => parsePsd(new Uint8Array(10))).toThrowError(WireError);
    const frame = decodeFrame(fromHex(fixture.psd_frame_hex));
    expect(() => parsePsd(frame.payload.subarray(0, 30))).toThrowError(/bins/);
  });

  it("parses the golden CHANNELS frame", () => {
    const frame = decodeFrame(fromHex(fixture.channels_frame_hex));
    expect(frame.frameType).toBe(FRAME_CHANNELS);
    const spans = parseChannels(frame.payload);
    expect(spans).toHaveLength(2);
    expect(spans[0]!.center_hz).toBe(98_100_000);
    expect(spans[0]!.width_hz).toBe(180_000);
    expect(spans[1]!.peak_db).toBeCloseTo(-35.5, 6);
  });

  it("parses the golden decoded-event frame", () => {
    const frame = decodeFrame(fromHex(fixture.decoded_frame_hex));
    expect(frame.frameType).toBe(FRAME_DECODED_JSON);
    const event = parseDecoded(frame.payload);
    expect(event).toEqual(fixture.decoded_expect);
    expect(event.body.icao).toBe("4840D6");
  });

  it("decodes the golden audio frame to the full block", () => {
    const frame = decodeFrame(fromHex(fixture.audio_frame_hex));
    expect(frame.frameType).toBe(FRAME_AUDIO);
    expect(decodeAdpcm(frame.payload).length).toBe(fixture.audio_sample_count);
  });

  it("parses error payloads", () => {
    const err = parseError(
      new TextEncoder().encode('{"code":"BAD_TOKEN","message":"nope"}'),
    );
    expect(err.code).toBe("BAD_TOKEN");
  });
});
