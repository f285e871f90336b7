// The 1-NN observation feature, mirrored bit-for-bit from the primary
// evaluator. The definition is versioned: centroids use a left-to-right
// float64 summation, the quaternion sign is canonicalized, and queries
// farther than TRUST_RADIUS from every training feature are treated as
// out-of-distribution (the policy holds still).

export const FEATURE_VERSION = "dockaug-nn-features-v1";
export const TRUST_RADIUS = 0.15;

export const LABEL_ARM = 1;

export function seqCentroid(
  points: Float32Array,
  labels: Uint8Array,
  code: number,
  n: number,
): [number, number, number] {
  let sx = 0;
  let sy = 0;
  let sz = 0;
  let count = 0;
  for (let i = 0; i < n; i++) {
    if (labels[i] !== code) continue;
    sx += points[3 * i];
    sy += points[3 * i + 1];
    sz += points[3 * i + 2];
    count += 1;
  }
  if (count === 0) return [0, 0, 0];
  return [sx / count, sy / count, sz / count];
}

export function canonicalQuat(q: number[]): number[] {
  for (const c of q) {
    if (c > 0) return [...q];
    if (c < 0) return q.map((v) => -v);
  }
  return [...q];
}

export function frameFeature(
  points: Float32Array,
  labels: Uint8Array,
  state: Float64Array,
  pointsPerFrame: number,
  objectCodes: number[],
): number[] {
  const out: number[] = [];
  out.push(...seqCentroid(points, labels, LABEL_ARM, pointsPerFrame));
  for (const code of objectCodes) {
    out.push(...seqCentroid(points, labels, code, pointsPerFrame));
  }
  out.push(state[0], state[1], state[2]);
  out.push(...canonicalQuat([state[3], state[4], state[5], state[6]]));
  out.push(state[7]);
  return out;
}

export function squaredDistance(a: number[], b: ArrayLike<number>): number {
  let s = 0;
  for (let i = 0; i < a.length; i++) {
    const d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

export function nearestIndex(features: number[][], query: ArrayLike<number>): {
  index: number;
  d2: number;
} {
  let best = Infinity;
  let index = -1;
  for (let i = 0; i < features.length; i++) {
    let s = 0;
    const f = features[i];
    for (let j = 0; j < f.length; j++) {
      const d = f[j] - (query as number[])[j];
      s += d * d;
    }
    if (s < best) {
      best = s;
      index = i;
    }
  }
  return { index, d2: best };
}
