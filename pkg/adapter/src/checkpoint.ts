// Checkpoint and connector loading. A checkpoint is a JSON file describing a
// small deterministic embedder: how input bytes are patched into penultimate
// features and the projection from pooled features to the embedding space.
// A connector is a small MLP (the post-adaptation projection into a language
// model's space) applied to the pooled penultimate features instead of the
// checkpoint projection.

import { readFileSync } from 'node:fs';
import { FEATURE_WIDTH } from './features.js';

export const CHECKPOINT_FORMAT = 'byte-embedder.v1';

export interface Checkpoint {
  modelId: string;
  patchSize: number;
  maxPatches: number;
  embedDim: number;
  projection: number[][]; // FEATURE_WIDTH x embedDim
  bias: number[]; // embedDim
}

export interface ConnectorLayer {
  weights: number[][]; // inWidth x outWidth
  bias: number[];
}

export interface Connector {
  layers: ConnectorLayer[];
  activation: 'gelu' | 'none';
}

function fail(path: string, message: string): never {
  throw new Error(`${path}: ${message}`);
}

export function loadCheckpoint(path: string): Checkpoint {
  let raw: unknown;
  try {
    raw = JSON.parse(readFileSync(path, 'utf-8'));
  } catch (error) {
    fail(path, `unloadable checkpoint (${(error as Error).message})`);
  }
  const ckpt = raw as Record<string, unknown>;
  if (ckpt.format !== CHECKPOINT_FORMAT) {
    fail(path, `unloadable checkpoint (format ${String(ckpt.format)})`);
  }
  const projection = ckpt.projection as number[][];
  const bias = ckpt.bias as number[];
  const embedDim = ckpt.embed_dim as number;
  if (
    !Array.isArray(projection) ||
    projection.length !== FEATURE_WIDTH ||
    projection.some((row) => !Array.isArray(row) || row.length !== embedDim)
  ) {
    fail(path, `projection must be ${FEATURE_WIDTH} x embed_dim`);
  }
  if (!Array.isArray(bias) || bias.length !== embedDim) {
    fail(path, 'bias length must equal embed_dim');
  }
  if (!Number.isInteger(embedDim) || embedDim < 1) {
    fail(path, 'embed_dim must be a positive integer');
  }
  return {
    modelId: String(ckpt.model_id ?? 'unknown'),
    patchSize: Number(ckpt.patch_size ?? 64),
    maxPatches: Number(ckpt.max_patches ?? 32),
    embedDim,
    projection,
    bias,
  };
}

export function loadConnector(path: string): Connector {
  let raw: unknown;
  try {
    raw = JSON.parse(readFileSync(path, 'utf-8'));
  } catch (error) {
    fail(path, `unloadable connector (${(error as Error).message})`);
  }
  const conn = raw as Record<string, unknown>;
  const layers = conn.layers as ConnectorLayer[];
  if (!Array.isArray(layers) || layers.length === 0) {
    fail(path, 'connector needs at least one layer');
  }
  for (const layer of layers) {
    if (
      !Array.isArray(layer.weights) ||
      layer.weights.length === 0 ||
      !Array.isArray(layer.bias) ||
      layer.bias.length !== layer.weights[0].length
    ) {
      fail(path, 'each layer needs weights[in][out] and a matching bias');
    }
  }
  const activation = (conn.activation ?? 'gelu') as string;
  if (activation !== 'gelu' && activation !== 'none') {
    fail(path, `unknown activation ${activation}`);
  }
  return { layers, activation };
}

function gelu(x: number): number {
  // tanh approximation, the same form the MLP connectors use
  const cube = 0.044715 * x * x * x;
  return 0.5 * x * (1 + Math.tanh(Math.sqrt(2 / Math.PI) * (x + cube)));
}

export function applyProjection(
  pooled: Float64Array,
  projection: number[][],
  bias: number[],
): Float64Array {
  const inWidth = projection.length;
  if (pooled.length !== inWidth) {
    throw new Error(
      `width mismatch: features have ${pooled.length}, projection expects ${inWidth}`,
    );
  }
  const outWidth = projection[0].length;
  const out = new Float64Array(outWidth);
  for (let j = 0; j < outWidth; j += 1) {
    let acc = bias[j];
    for (let i = 0; i < inWidth; i += 1) {
      acc += pooled[i] * projection[i][j];
    }
    out[j] = acc;
  }
  return out;
}

export function applyConnector(
  pooled: Float64Array,
  connector: Connector,
): Float64Array {
  let current = pooled;
  connector.layers.forEach((layer, index) => {
    if (current.length !== layer.weights.length) {
      throw new Error(
        `width mismatch: connector layer ${index} expects ${layer.weights.length}, got ${current.length}`,
      );
    }
    let next = applyProjection(current, layer.weights, layer.bias);
    const isLast = index === connector.layers.length - 1;
    if (!isLast && connector.activation === 'gelu') {
      next = next.map(gelu) as Float64Array;
    }
    current = next;
  });
  return current;
}
