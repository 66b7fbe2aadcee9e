/** dB to color mapping for the waterfall. Adjusting the scale changes
 * colors only; bin-to-pixel geometry lives in geometry.ts and is untouched.
 */

export interface ColorScale {
  minDb: number;
  maxDb: number;
  /** RGB bytes for one dB value, clamped to [minDb, maxDb]. */
  rgb(db: number): [number, number, number];
}

// Dark blue floor through cyan and yellow to white, the usual SDR ramp.
const STOPS: [number, [number, number, number]][] = [
  [0.0, [5, 8, 36]],
  [0.25, [12, 51, 131]],
  [0.5, [29, 151, 185]],
  [0.75, [235, 211, 101]],
  [1.0, [255, 255, 255]],
];

export function makeColorScale(minDb: number, maxDb: number): ColorScale {
  if (!(maxDb > minDb)) {
    throw new RangeError(`empty scale range ${minDb}..${maxDb}`);
  }
  return {
    minDb,
    maxDb,
    rgb(db: number): [number, number, number] {
      let t = (db - minDb) / (maxDb - minDb);
      t = Math.max(0, Math.min(1, t));
      for (let i = 1; i < STOPS.length; i++) {
        const [t1, c1] = STOPS[i]!;
        if (t <= t1) {
          const [t0, c0] = STOPS[i - 1]!;
          const u = (t - t0) / (t1 - t0);
          return [
            Math.round(c0[0] + u * (c1[0] - c0[0])),
            Math.round(c0[1] + u * (c1[1] - c0[1])),
            Math.round(c0[2] + u * (c1[2] - c0[2])),
          ];
        }
      }
      return STOPS[STOPS.length - 1]![1];
    },
  };
}
