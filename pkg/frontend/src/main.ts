/** Application glue: DOM wiring, the peer WebSocket, and the polling
 * loops. All state changes go through the reducer; canvases redraw from
 * the frames that caused the change.
 */

import { decodeAdpcm } from "./adpcm.js";
import { ApiError, BackendApi } from "./api.js";
import { AudioPlayer } from "./audio.js";
import { makeColorScale } from "./colorscale.js";
import { clickFreq } from "./geometry.js";
import { ScatterView } from "./scatter.js";
import {
  initialState, isStale, reduce, type Action, type ViewState,
} from "./state.js";
import { SpectrumView, WaterfallView } from "./waterfall.js";
import {
  FRAME_AUDIO, FRAME_CHANNELS, FRAME_DECODED_JSON, FRAME_ERROR, FRAME_PSD,
  controlFrame, decodeFrame, helloFrame, parseChannels, parseDecoded,
  parseError, parsePsd,
} from "./wire.js";

const BALANCE_POLL_MS = 30_000;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

class App {
  state: ViewState = initialState();
  api: BackendApi | null = null;
  ws: WebSocket | null = null;
  scale = makeColorScale(-100, 0);
  readonly waterfall = new WaterfallView(el<HTMLCanvasElement>("waterfall"));
  readonly spectrum = new SpectrumView(el<HTMLCanvasElement>("spectrum"));
  readonly scatter = new ScatterView(el<HTMLCanvasElement>("scatter"));
  readonly player = new AudioPlayer(
    () => this.dispatch({ kind: "audio-error" }),
    () => this.dispatch({ kind: "dropout" }),
  );

  dispatch(action: Action): void {
    this.state = reduce(this.state, action);
    this.renderChrome();
  }

  // ---- backend ------------------------------------------------------------

  async loadSensors(): Promise<void> {
    const base = el<HTMLInputElement>("backend-url").value.replace(/\/$/, "");
    const token = el<HTMLInputElement>("user-token").value.trim();
    this.api = new BackendApi(base, token);
    try {
      const rows = await this.api.sensors();
      this.dispatch({ kind: "sensors", rows });
      this.renderSensorList();
      await this.pollBalance();
    } catch (err) {
      this.showStatus(err instanceof ApiError ? err.code : String(err));
    }
  }

  async pollBalance(): Promise<void> {
    if (!this.api) {
      return;
    }
    try {
      const account = await this.api.me();
      this.dispatch({ kind: "balance", mtk: account.balance_mtk });
    } catch {
      // transient; next poll retries
    }
  }

  async connect(sensorId: string): Promise<void> {
    if (!this.api) {
      return;
    }
    this.dispatch({ kind: "select", sensorId });
    try {
      const reply = await this.api.connect(sensorId);
      if (reply.kind === "connect_reject") {
        this.showStatus(`rejected: ${reply.reason}`);
        return;
      }
      this.openPeer(reply.endpoint, reply.session_token);
    } catch (err) {
      this.showStatus(err instanceof ApiError ? err.code : String(err));
    }
  }

  // ---- peer socket ----------------------------------------------------------

  openPeer(endpoint: string, sessionToken: string): void {
    this.ws?.close();
    const ws = new WebSocket(endpoint);
    ws.binaryType = "arraybuffer";
    this.dispatch({ kind: "connecting", endpoint });
    this.waterfall.clear();
    this.spectrum.clear();
    ws.onopen = () => {
      ws.send(helloFrame(sessionToken));
      this.dispatch({ kind: "live" });
    };
    ws.onmessage = (event) => this.onFrame(new Uint8Array(event.data as ArrayBuffer));
    ws.onclose = () => this.dispatch({ kind: "disconnected" });
    ws.onerror = () => this.showStatus("peer socket error");
    this.ws = ws;
  }

  disconnect(): void {
    this.ws?.close();
    this.ws = null;
    void this.player.stop();
    this.dispatch({ kind: "disconnected" });
  }

  onFrame(buf: Uint8Array): void {
    const frame = decodeFrame(buf);
    switch (frame.frameType) {
      case FRAME_PSD: {
        const psd = parsePsd(frame.payload);
        this.dispatch({ kind: "psd", frame: psd, wallMs: Date.now() });
        this.waterfall.appendRow(psd, this.scale);
        this.spectrum.render(psd, this.state.spans, this.scale, this.state.tunedHz);
        break;
      }
      case FRAME_CHANNELS:
        this.dispatch({ kind: "channels", spans: parseChannels(frame.payload) });
        break;
      case FRAME_DECODED_JSON: {
        const event = parseDecoded(frame.payload);
        this.dispatch({ kind: "decoded", event });
        this.dispatch({ kind: "decoder", decoderId: event.decoder_id });
        this.renderAircraft();
        break;
      }
      case FRAME_AUDIO:
        if (this.player.running) {
          this.player.push(frame.payload);
        } else {
          // still count undecodable blocks while muted
          try {
            decodeAdpcm(frame.payload);
          } catch {
            this.dispatch({ kind: "audio-error" });
          }
        }
        break;
      case FRAME_ERROR: {
        const err = parseError(frame.payload);
        this.dispatch({ kind: "peer-error", code: err.code, message: err.message });
        break;
      }
      default:
        break; // control/hello never arrive client-bound
    }
  }

  // ---- controls -------------------------------------------------------------

  tune(freqHz: number): void {
    if (this.state.phase !== "live" || !this.ws) {
      this.showStatus("not connected; reconnect to tune");
      return;
    }
    this.ws.send(controlFrame({ cmd: "tune", freq_hz: freqHz }));
    this.dispatch({ kind: "tuned", freqHz });
  }

  onSpectrumClick(x: number, width: number): void {
    const newest = this.state.psdRing[this.state.psdRing.length - 1];
    if (!newest) {
      return;
    }
    this.tune(clickFreq(x, width, newest.centerHz, newest.rateHz, this.state.spans));
  }

  selectDecoder(decoderId: string): void {
    if (this.state.phase !== "live" || !this.ws || !decoderId) {
      return;
    }
    this.ws.send(controlFrame({ cmd: "decoder", decoder_id: decoderId }));
    this.dispatch({ kind: "decoder", decoderId });
  }

  setGain(gainDb: number): void {
    this.dispatch({ kind: "gain", gainDb });
    if (this.state.phase === "live" && this.ws) {
      this.ws.send(controlFrame({ cmd: "gain", gain_db: this.state.gainDb }));
    }
  }

  setVolume(level: number): void {
    this.dispatch({ kind: "volume", level });
    this.player.setVolume(this.state.volume);
  }

  setScale(minDb: number, maxDb: number): void {
    if (maxDb > minDb) {
      this.scale = makeColorScale(minDb, maxDb);
      this.dispatch({ kind: "scale", minDb, maxDb });
    }
  }

  async toggleAudio(): Promise<void> {
    if (this.player.running) {
      await this.player.stop();
      this.dispatch({ kind: "audio", playing: false });
    } else {
      await this.player.start();
      this.player.setVolume(this.state.volume);
      this.dispatch({ kind: "audio", playing: true });
    }
  }

  // ---- rendering --------------------------------------------------------------

  showStatus(text: string): void {
    el("status").textContent = text;
  }

  renderChrome(): void {
    const s = this.state;
    el("balance").textContent =
      s.balanceMtk === null ? "balance: -" : `balance: ${s.balanceMtk} mtk`;
    el("phase").textContent = s.phase;
    el("tuned").textContent =
      s.tunedHz === null ? "-" : `${(s.tunedHz / 1e6).toFixed(3)} MHz`;
    el("decoder").textContent = s.activeDecoder ?? "psd only";
    el("audio-errors").textContent = String(s.audioErrors);
    el("dropouts").textContent = String(s.dropouts);
    el("peer-error").textContent = s.lastError ?? "";
    el<HTMLButtonElement>("audio-toggle").textContent = s.audioPlaying
      ? "mute audio"
      : "play audio";
  }

  renderSensorList(): void {
    const list = el("sensor-list");
    list.replaceChildren();
    for (const row of this.state.sensors) {
      const item = document.createElement("li");
      const button = document.createElement("button");
      button.textContent = `${row.sensor_id} (${row.state.toLowerCase()})`;
      button.disabled = row.state !== "ONLINE_IDLE";
      button.onclick = () => void this.connect(row.sensor_id);
      item.appendChild(button);
      list.appendChild(item);
    }
    const picker = el<HTMLSelectElement>("decoder-picker");
    picker.replaceChildren(new Option("decoder...", ""));
    const selected = this.state.sensors.find(
      (r) => r.sensor_id === this.state.selectedSensor,
    );
    for (const id of selected?.registry ?? ["am", "fm", "adsb"]) {
      picker.appendChild(new Option(id, id));
    }
  }

  renderAircraft(): void {
    const tbody = el("adsb-rows");
    tbody.replaceChildren();
    for (const row of this.state.aircraft.slice(0, 50)) {
      const tr = document.createElement("tr");
      for (const cell of [
        row.icao,
        row.callsign?.trim() ?? "",
        row.altFt === null ? "" : String(row.altFt),
        row.lat === null ? "" : row.lat.toFixed(4),
        row.lon === null ? "" : row.lon.toFixed(4),
        String(row.messages),
      ]) {
        const td = document.createElement("td");
        td.textContent = cell;
        tr.appendChild(td);
      }
      tbody.appendChild(tr);
    }
    this.scatter.render(this.state.aircraft);
  }
}

function wire(): void {
  const app = new App();
  el<HTMLButtonElement>("load-sensors").onclick = () => void app.loadSensors();
  el<HTMLButtonElement>("disconnect").onclick = () => app.disconnect();
  el<HTMLButtonElement>("audio-toggle").onclick = () => void app.toggleAudio();
  el<HTMLSelectElement>("decoder-picker").onchange = (event) =>
    app.selectDecoder((event.target as HTMLSelectElement).value);
  el<HTMLInputElement>("volume").oninput = (event) =>
    app.setVolume(Number((event.target as HTMLInputElement).value));
  el<HTMLInputElement>("gain").onchange = (event) =>
    app.setGain(Number((event.target as HTMLInputElement).value));
  const applyScale = (): void =>
    app.setScale(
      Number(el<HTMLInputElement>("scale-min").value),
      Number(el<HTMLInputElement>("scale-max").value),
    );
  el<HTMLInputElement>("scale-min").onchange = applyScale;
  el<HTMLInputElement>("scale-max").onchange = applyScale;

  for (const id of ["waterfall", "spectrum"]) {
    const canvas = el<HTMLCanvasElement>(id);
    canvas.onclick = (event) => {
      const rect = canvas.getBoundingClientRect();
      const x = ((event.clientX - rect.left) / rect.width) * canvas.width;
      app.onSpectrumClick(x, canvas.width);
    };
  }

  setInterval(() => void app.pollBalance(), BALANCE_POLL_MS);
  setInterval(() => {
    el("banner").style.display = isStale(app.state, Date.now()) ? "block" : "none";
  }, 500);
  app.renderChrome();
}

wire();
