/** Streaming linear resampler for playback (12 kHz sensor audio to the
 * audio device rate). Linear interpolation is plenty above 4x oversampling
 * and keeps the per-sample cost trivial; chunked output matches batch to
 * float rounding.
 */

export class LinearResampler {
  private last = 0;
  private haveLast = false;
  private phase = 0; // input-sample position of the next output, minus history
  private readonly step: number;

  constructor(readonly inRate: number, readonly outRate: number) {
    if (inRate <= 0 || outRate <= 0) {
      throw new RangeError("rates must be positive");
    }
    this.step = inRate / outRate;
  }

  process(block: Float32Array): Float32Array {
    if (block.length === 0) {
      return new Float32Array(0);
    }
    // Work on [last, ...block]; position 0 is the carried sample.
    const prev = this.haveLast ? this.last : block[0]!;
    const n = block.length; // valid positions: 0 .. n
    const out: number[] = [];
    let pos = this.phase;
    while (pos <= n - 1e-9) {
      const i = Math.floor(pos);
      const frac = pos - i;
      const a = i === 0 ? prev : block[i - 1]!;
      const b = i < n ? block[i]! : block[n - 1]!;
      out.push(a + (b - a) * frac);
      pos += this.step;
    }
    this.phase = pos - n;
    this.last = block[n - 1]!;
    this.haveLast = true;
    return Float32Array.from(out);
  }
}
