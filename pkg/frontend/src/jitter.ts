/** Playback jitter buffer: absorb network timing noise by holding 200 ms
 * of decoded audio before the first pull, then serving fixed-size device
 * quanta. An underrun mid-stream counts one dropout, emits silence, and
 * re-enters the prefill state so playback resumes cleanly.
 */

export const PREFILL_MS = 200;

export class JitterBuffer {
  private chunks: Float32Array[] = [];
  private buffered = 0;
  private offset = 0; // read position inside chunks[0]
  private primed = false;
  dropouts = 0;

  constructor(readonly sampleRate: number, readonly prefillMs = PREFILL_MS) {}

  get bufferedSamples(): number {
    return this.buffered;
  }

  get bufferedMs(): number {
    return (this.buffered / this.sampleRate) * 1000;
  }

  push(block: Float32Array): void {
    if (block.length === 0) {
      return;
    }
    this.chunks.push(block);
    this.buffered += block.length;
    if (!this.primed && this.bufferedMs >= this.prefillMs) {
      this.primed = true;
    }
  }

  /** Fill out completely, with silence while priming or after an underrun. */
  pull(out: Float32Array): void {
    if (!this.primed) {
      out.fill(0);
      return;
    }
    let wrote = 0;
    while (wrote < out.length && this.chunks.length > 0) {
      const head = this.chunks[0]!;
      const take = Math.min(out.length - wrote, head.length - this.offset);
      out.set(head.subarray(this.offset, this.offset + take), wrote);
      wrote += take;
      this.offset += take;
      if (this.offset === head.length) {
        this.chunks.shift();
        this.offset = 0;
      }
    }
    this.buffered -= wrote;
    if (wrote < out.length) {
      out.fill(0, wrote);
      this.dropouts += 1;
      this.primed = false; // rebuild the cushion before resuming
    }
  }

  reset(): void {
    this.chunks = [];
    this.buffered = 0;
    this.offset = 0;
    this.primed = false;
  }
}
