/** Binary peer framing and payload codecs, mirroring the sensor wire format.
 *
 * Every frame is a 5 byte header (type u8, payload length u32 LE) followed
 * by the payload. The client only ever sends HELLO and CONTROL frames; it
 * never requests raw I/Q, because no such frame type exists.
 */

export const FRAME_PSD = 0x01;
export const FRAME_DECODED_JSON = 0x02;
export const FRAME_AUDIO = 0x03;
export const FRAME_CONTROL = 0x04;
export const FRAME_CHANNELS = 0x05;
export const FRAME_ERROR = 0x06;
export const FRAME_HELLO = 0x07;

const FRAME_HEADER_SIZE = 5;
const PSD_HEADER_SIZE = 22;

export class WireError extends Error {
  constructor(readonly code: string, message: string) {
    super(message);
    this.name = "WireError";
  }
}

export interface PeerFrame {
  frameType: number;
  payload: Uint8Array;
}

export function encodeFrame(frameType: number, payload: Uint8Array): Uint8Array {
  const out = new Uint8Array(FRAME_HEADER_SIZE + payload.length);
  const view = new DataView(out.buffer);
  view.setUint8(0, frameType);
  view.setUint32(1, payload.length, true);
  out.set(payload, FRAME_HEADER_SIZE);
  return out;
}

/** Decode one complete frame; a WebSocket message carries exactly one. */
export function decodeFrame(buf: Uint8Array): PeerFrame {
  if (buf.length < FRAME_HEADER_SIZE) {
    throw new WireError("TRUNCATED", `frame shorter than header: ${buf.length}`);
  }
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  const frameType = view.getUint8(0);
  const length = view.getUint32(1, true);
  if (frameType < FRAME_PSD || frameType > FRAME_HELLO) {
    throw new WireError("BAD_TYPE", `unknown frame type ${frameType}`);
  }
  if (buf.length !== FRAME_HEADER_SIZE + length) {
    throw new WireError("BAD_LENGTH", `payload length ${length} vs ${buf.length - FRAME_HEADER_SIZE}`);
  }
  return { frameType, payload: buf.subarray(FRAME_HEADER_SIZE) };
}

export function helloFrame(sessionToken: string): Uint8Array {
  return encodeFrame(FRAME_HELLO, new TextEncoder().encode(sessionToken));
}

export type ControlCommand =
  | { cmd: "tune"; freq_hz: number }
  | { cmd: "gain"; gain_db: number }
  | { cmd: "volume"; level: number }
  | { cmd: "decoder"; decoder_id: string };

export function controlFrame(command: ControlCommand): Uint8Array {
  return encodeFrame(FRAME_CONTROL, new TextEncoder().encode(JSON.stringify(command)));
}

export interface PsdFrame {
  timestampMs: number;
  centerHz: number;
  rateHz: number;
  bins: Float32Array;
}

/** Payload: u64 timestamp ms, u64 center Hz, u32 rate Hz, u16 bin count,
 * then float32 dB bins, all little endian. */
export function parsePsd(payload: Uint8Array): PsdFrame {
  if (payload.length < PSD_HEADER_SIZE) {
    throw new WireError("TRUNCATED", "psd payload shorter than its header");
  }
  const view = new DataView(payload.buffer, payload.byteOffset, payload.byteLength);
  const timestampMs = Number(view.getBigUint64(0, true));
  const centerHz = Number(view.getBigUint64(8, true));
  const rateHz = view.getUint32(16, true);
  const count = view.getUint16(20, true);
  if (payload.length !== PSD_HEADER_SIZE + 4 * count) {
    throw new WireError("BAD_LENGTH", `expected ${count} bins`);
  }
  const bins = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    bins[i] = view.getFloat32(PSD_HEADER_SIZE + 4 * i, true);
  }
  return { timestampMs, centerHz, rateHz, bins };
}

export interface ChannelSpan {
  center_hz: number;
  width_hz: number;
  peak_db: number;
}

export function parseChannels(payload: Uint8Array): ChannelSpan[] {
  const rows = JSON.parse(new TextDecoder().decode(payload)) as ChannelSpan[];
  if (!Array.isArray(rows)) {
    throw new WireError("SCHEMA", "channels payload is not a list");
  }
  return rows;
}

export interface DecodedEvent {
  decoder_id: string;
  timestamp_ms: number;
  body: {
    icao: string;
    df: number;
    crc: string;
    tc?: number;
    callsign?: string;
    alt_ft?: number;
    lat?: number;
    lon?: number;
  };
}

export function parseDecoded(payload: Uint8Array): DecodedEvent {
  return JSON.parse(new TextDecoder().decode(payload)) as DecodedEvent;
}

export interface PeerError {
  code: string;
  message: string;
}

export function parseError(payload: Uint8Array): PeerError {
  return JSON.parse(new TextDecoder().decode(payload)) as PeerError;
}
