/** Client view state and its reducer. Every mutation flows through
 * reduce(), so invariants (bounded buffers, ordering, icao dedupe) hold in
 * one place and the DOM layer stays a pure projection.
 */

import type { ChannelSpan, DecodedEvent, PsdFrame } from "./wire.js";

export const PSD_WINDOW_MS = 60_000;
export const PSD_MAX_FRAMES = 600;
export const STALE_AFTER_MS = 3_000;

export interface SensorRow {
  sensor_id: string;
  owner_id: string;
  state: "ONLINE_IDLE" | "ONLINE_BUSY" | "OFFLINE";
  region_cell: string;
  endpoint: string;
  registry: string[];
}

export interface AircraftRow {
  icao: string;
  callsign: string | null;
  altFt: number | null;
  lat: number | null;
  lon: number | null;
  lastSeenMs: number;
  messages: number;
}

export type Phase = "idle" | "connecting" | "live" | "disconnected";

export interface ViewState {
  sensors: SensorRow[];
  selectedSensor: string | null;
  phase: Phase;
  endpoint: string | null;
  tunedHz: number | null;
  activeDecoder: string | null;
  psdRing: PsdFrame[];
  spans: ChannelSpan[];
  aircraft: AircraftRow[];
  audioPlaying: boolean;
  volume: number;
  gainDb: number;
  scaleMinDb: number;
  scaleMaxDb: number;
  balanceMtk: number | null;
  lastFrameWallMs: number;
  audioErrors: number;
  dropouts: number;
  lastError: string | null;
}

export function initialState(): ViewState {
  return {
    sensors: [],
    selectedSensor: null,
    phase: "idle",
    endpoint: null,
    tunedHz: null,
    activeDecoder: null,
    psdRing: [],
    spans: [],
    aircraft: [],
    audioPlaying: false,
    volume: 0.8,
    gainDb: 0,
    scaleMinDb: -100,
    scaleMaxDb: 0,
    balanceMtk: null,
    lastFrameWallMs: 0,
    audioErrors: 0,
    dropouts: 0,
    lastError: null,
  };
}

export type Action =
  | { kind: "sensors"; rows: SensorRow[] }
  | { kind: "select"; sensorId: string }
  | { kind: "connecting"; endpoint: string }
  | { kind: "live" }
  | { kind: "disconnected" }
  | { kind: "psd"; frame: PsdFrame; wallMs: number }
  | { kind: "channels"; spans: ChannelSpan[] }
  | { kind: "decoded"; event: DecodedEvent }
  | { kind: "tuned"; freqHz: number }
  | { kind: "decoder"; decoderId: string | null }
  | { kind: "audio"; playing: boolean }
  | { kind: "volume"; level: number }
  | { kind: "gain"; gainDb: number }
  | { kind: "scale"; minDb: number; maxDb: number }
  | { kind: "balance"; mtk: number }
  | { kind: "audio-error" }
  | { kind: "dropout" }
  | { kind: "peer-error"; code: string; message: string };

/** Insert keeping timestamp order, then trim to window and count bounds. */
function pushPsd(ring: PsdFrame[], frame: PsdFrame): PsdFrame[] {
  const out = ring.slice();
  let i = out.length;
  while (i > 0 && out[i - 1]!.timestampMs > frame.timestampMs) {
    i--;
  }
  out.splice(i, 0, frame);
  const newest = out[out.length - 1]!.timestampMs;
  let drop = 0;
  while (
    drop < out.length - 1 &&
    (newest - out[drop]!.timestampMs > PSD_WINDOW_MS ||
      out.length - drop > PSD_MAX_FRAMES)
  ) {
    drop++;
  }
  return drop ? out.slice(drop) : out;
}

function mergeAircraft(rows: AircraftRow[], event: DecodedEvent): AircraftRow[] {
  const body = event.body;
  const prior = rows.find((r) => r.icao === body.icao);
  const row: AircraftRow = {
    icao: body.icao,
    callsign: body.callsign ?? prior?.callsign ?? null,
    altFt: body.alt_ft ?? prior?.altFt ?? null,
    lat: body.lat ?? prior?.lat ?? null,
    lon: body.lon ?? prior?.lon ?? null,
    lastSeenMs: event.timestamp_ms,
    messages: (prior?.messages ?? 0) + 1,
  };
  const rest = rows.filter((r) => r.icao !== body.icao);
  rest.push(row);
  rest.sort((a, b) => b.lastSeenMs - a.lastSeenMs);
  return rest;
}

export function reduce(state: ViewState, action: Action): ViewState {
  switch (action.kind) {
    case "sensors":
      return { ...state, sensors: action.rows };
    case "select":
      return { ...state, selectedSensor: action.sensorId };
    case "connecting":
      return {
        ...state,
        phase: "connecting",
        endpoint: action.endpoint,
        psdRing: [],
        spans: [],
        aircraft: [],
        tunedHz: null,
        activeDecoder: null,
        lastError: null,
      };
    case "live":
      return { ...state, phase: "live" };
    case "disconnected":
      return {
        ...state,
        phase: state.phase === "idle" ? "idle" : "disconnected",
        audioPlaying: false,
      };
    case "psd":
      return {
        ...state,
        psdRing: pushPsd(state.psdRing, action.frame),
        tunedHz: action.frame.centerHz,
        lastFrameWallMs: action.wallMs,
      };
    case "channels":
      return { ...state, spans: action.spans };
    case "decoded":
      return { ...state, aircraft: mergeAircraft(state.aircraft, action.event) };
    case "tuned":
      return { ...state, tunedHz: action.freqHz };
    case "decoder":
      return { ...state, activeDecoder: action.decoderId };
    case "audio":
      return { ...state, audioPlaying: action.playing };
    case "volume":
      return { ...state, volume: Math.max(0, Math.min(1, action.level)) };
    case "gain":
      return { ...state, gainDb: Math.max(0, Math.min(50, action.gainDb)) };
    case "scale":
      return action.maxDb > action.minDb
        ? { ...state, scaleMinDb: action.minDb, scaleMaxDb: action.maxDb }
        : state;
    case "balance":
      return { ...state, balanceMtk: action.mtk };
    case "audio-error":
      return { ...state, audioErrors: state.audioErrors + 1 };
    case "dropout":
      return { ...state, dropouts: state.dropouts + 1 };
    case "peer-error":
      return { ...state, lastError: `${action.code}: ${action.message}` };
  }
}

/** Disconnected banner predicate: no frames for 3 s while live. */
export function isStale(state: ViewState, nowWallMs: number): boolean {
  return (
    state.phase === "live" &&
    state.lastFrameWallMs > 0 &&
    nowWallMs - state.lastFrameWallMs > STALE_AFTER_MS
  );
}
