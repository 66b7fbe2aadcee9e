/** IMA ADPCM decoder for sensor audio frames.
 *
 * Each block is self-contained: a 3 byte header (predictor int16 LE, step
 * index u8) followed by 4-bit codes packed low nibble first, two samples
 * per byte. Must stay sample-exact with the sensor's encoder.
 */

export class AdpcmError extends Error {
  constructor(readonly code: string, message: string) {
    super(message);
    this.name = "AdpcmError";
  }
}

const HEADER_SIZE = 3;

const STEP_TABLE = [
  7, 8, 9, 10, 11, 12, 13, 14, 16, 17, 19, 21, 23, 25, 28, 31, 34, 37,
  41, 45, 50, 55, 60, 66, 73, 80, 88, 97, 107, 118, 130, 143, 157, 173,
  190, 209, 230, 253, 279, 307, 337, 371, 408, 449, 494, 544, 598, 658,
  724, 796, 876, 963, 1060, 1166, 1282, 1411, 1552, 1707, 1878, 2066,
  2272, 2499, 2749, 3024, 3327, 3660, 4026, 4428, 4871, 5358, 5894,
  6484, 7132, 7845, 8630, 9493, 10442, 11487, 12635, 13899, 15289,
  16818, 18500, 20350, 22385, 24623, 27086, 29794, 32767,
] as const;

const INDEX_TABLE = [-1, -1, -1, -1, 2, 4, 6, 8] as const;

function clamp16(v: number): number {
  return Math.max(-32768, Math.min(32767, v));
}

export function decodeAdpcm(block: Uint8Array): Int16Array {
  if (block.length < HEADER_SIZE) {
    throw new AdpcmError("TRUNCATED_BLOCK", "block shorter than its header");
  }
  const view = new DataView(block.buffer, block.byteOffset, block.byteLength);
  let predictor = view.getInt16(0, true);
  let index = view.getUint8(2);
  if (index > 88) {
    throw new AdpcmError("BAD_STATE", `step index ${index} out of range`);
  }
  const body = block.subarray(HEADER_SIZE);
  const out = new Int16Array(body.length * 2);
  let pos = 0;
  for (const byte of body) {
    for (const nibble of [byte & 0x0f, byte >> 4]) {
      const step = STEP_TABLE[index]!;
      let diff = step >> 3;
      if (nibble & 4) diff += step;
      if (nibble & 2) diff += step >> 1;
      if (nibble & 1) diff += step >> 2;
      predictor = clamp16(nibble & 8 ? predictor - diff : predictor + diff);
      index = Math.max(0, Math.min(88, index + INDEX_TABLE[nibble & 7]!));
      out[pos++] = predictor;
    }
  }
  return out;
}

/** Int16 PCM to float in [-1, 1) for the audio pipeline. */
export function pcmToFloat(pcm: Int16Array): Float32Array {
  const out = new Float32Array(pcm.length);
  for (let i = 0; i < pcm.length; i++) {
    out[i] = pcm[i]! / 32768;
  }
  return out;
}
