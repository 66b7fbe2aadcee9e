/** Speaker pipeline: ADPCM block to float PCM, resample to the device
 * rate, then a jitter buffer feeding the audio callback. Volume applies
 * locally through a gain node, after the decoder.
 */

import { decodeAdpcm, pcmToFloat } from "./adpcm.js";
import { JitterBuffer } from "./jitter.js";
import { LinearResampler } from "./resample.js";

export const SENSOR_AUDIO_RATE = 12_000;

export class AudioPlayer {
  private ctx: AudioContext | null = null;
  private gain: GainNode | null = null;
  private node: ScriptProcessorNode | null = null;
  private jitter: JitterBuffer | null = null;
  private resampler: LinearResampler | null = null;
  private reportedDropouts = 0;

  constructor(
    private readonly onError: () => void,
    private readonly onDropout: () => void,
    private volume = 0.8,
  ) {}

  get running(): boolean {
    return this.ctx !== null;
  }

  async start(): Promise<void> {
    if (this.ctx) {
      return;
    }
    const ctx = new AudioContext();
    await ctx.resume();
    this.jitter = new JitterBuffer(ctx.sampleRate);
    this.resampler = new LinearResampler(SENSOR_AUDIO_RATE, ctx.sampleRate);
    this.gain = ctx.createGain();
    this.gain.gain.value = this.volume;
    this.node = ctx.createScriptProcessor(2048, 0, 1);
    this.node.onaudioprocess = (event) => {
      const out = event.outputBuffer.getChannelData(0);
      this.jitter!.pull(out);
      if (this.jitter!.dropouts > this.reportedDropouts) {
        this.reportedDropouts = this.jitter!.dropouts;
        this.onDropout();
      }
    };
    this.node.connect(this.gain);
    this.gain.connect(ctx.destination);
    this.ctx = ctx;
  }

  async stop(): Promise<void> {
    if (!this.ctx) {
      return;
    }
    this.node?.disconnect();
    this.gain?.disconnect();
    await this.ctx.close();
    this.ctx = null;
    this.node = null;
    this.gain = null;
    this.jitter = null;
    this.resampler = null;
    this.reportedDropouts = 0;
  }

  setVolume(level: number): void {
    this.volume = Math.max(0, Math.min(1, level));
    if (this.gain) {
      this.gain.gain.value = this.volume;
    }
  }

  /** Feed one AUDIO frame payload; corrupt blocks are skipped and counted. */
  push(payload: Uint8Array): void {
    if (!this.ctx || !this.jitter || !this.resampler) {
      return;
    }
    let pcm;
    try {
      pcm = decodeAdpcm(payload);
    } catch {
      this.onError();
      return;
    }
    this.jitter.push(this.resampler.process(pcmToFloat(pcm)));
  }
}
