// Deterministic byte-stream featurizer: the "penultimate" representation of
// the toy embedder. Any input (image file bytes, UTF-8 text) becomes a
// sequence of per-patch feature vectors: a normalized 16-bin byte histogram
// plus mean, spread, patch position, and fill fraction. All arithmetic is
// plain float64, so two runs over the same bytes are bit-identical.

export const FEATURE_WIDTH = 20;

export function patchFeatures(
  data: Buffer,
  patchSize: number,
  maxPatches: number,
): Float64Array[] {
  if (patchSize < 1 || maxPatches < 1) {
    throw new Error('patchSize and maxPatches must be positive');
  }
  const patchCount = Math.max(
    1,
    Math.min(maxPatches, Math.ceil(data.length / patchSize)),
  );
  const patches: Float64Array[] = [];
  for (let p = 0; p < patchCount; p += 1) {
    const start = p * patchSize;
    const end = Math.min(data.length, start + patchSize);
    const feature = new Float64Array(FEATURE_WIDTH);
    const length = Math.max(end - start, 0);
    let sum = 0;
    let sumSquares = 0;
    for (let i = start; i < end; i += 1) {
      const byte = data[i];
      feature[byte >> 4] += 1;
      sum += byte;
      sumSquares += byte * byte;
    }
    if (length > 0) {
      for (let bin = 0; bin < 16; bin += 1) {
        feature[bin] /= length;
      }
      const mean = sum / length;
      const variance = Math.max(sumSquares / length - mean * mean, 0);
      feature[16] = mean / 255;
      feature[17] = Math.sqrt(variance) / 255;
    }
    feature[18] = patchCount > 1 ? p / (patchCount - 1) : 0;
    feature[19] = length / patchSize;
    patches.push(feature);
  }
  return patches;
}

export function poolPatches(
  patches: Float64Array[],
  pooling: 'cls' | 'mean',
): Float64Array {
  if (patches.length === 0) {
    throw new Error('no patches to pool');
  }
  if (pooling === 'cls') {
    return Float64Array.from(patches[0]);
  }
  const pooled = new Float64Array(patches[0].length);
  for (const patch of patches) {
    for (let i = 0; i < pooled.length; i += 1) {
      pooled[i] += patch[i];
    }
  }
  for (let i = 0; i < pooled.length; i += 1) {
    pooled[i] /= patches.length;
  }
  return pooled;
}
