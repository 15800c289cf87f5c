// Deterministic test fixtures: a seeded PRNG, toy checkpoints, connectors,
// and synthetic "image" files (random bytes on disk).

import { mkdtempSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { FEATURE_WIDTH } from '../src/features.js';
import { CHECKPOINT_FORMAT } from '../src/checkpoint.js';

export function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function tempDir(): string {
  return mkdtempSync(join(tmpdir(), 'adapter-test-'));
}

export function makeCheckpoint(
  dir: string,
  seed = 1,
  embedDim = 12,
  name = 'ckpt.json',
): string {
  const rand = mulberry32(seed);
  const projection = Array.from({ length: FEATURE_WIDTH }, () =>
    Array.from({ length: embedDim }, () => rand() * 2 - 1),
  );
  const bias = Array.from({ length: embedDim }, () => rand() * 0.1);
  const path = join(dir, name);
  writeFileSync(
    path,
    JSON.stringify({
      format: CHECKPOINT_FORMAT,
      model_id: `toy-${seed}`,
      patch_size: 64,
      max_patches: 16,
      embed_dim: embedDim,
      projection,
      bias,
    }),
  );
  return path;
}

export function makeConnector(
  dir: string,
  kind: 'identity' | 'zero' | 'random',
  outWidth = 8,
  name = 'connector.json',
): string {
  let layers;
  let activation = 'gelu';
  if (kind === 'identity') {
    layers = [
      {
        weights: Array.from({ length: FEATURE_WIDTH }, (_, i) =>
          Array.from({ length: FEATURE_WIDTH }, (_, j) => (i === j ? 1 : 0)),
        ),
        bias: Array.from({ length: FEATURE_WIDTH }, () => 0),
      },
    ];
    activation = 'none';
  } else if (kind === 'zero') {
    layers = [
      {
        weights: Array.from({ length: FEATURE_WIDTH }, () =>
          Array.from({ length: outWidth }, () => 0),
        ),
        bias: Array.from({ length: outWidth }, () => 0),
      },
    ];
  } else {
    const rand = mulberry32(99);
    const hidden = 10;
    layers = [
      {
        weights: Array.from({ length: FEATURE_WIDTH }, () =>
          Array.from({ length: hidden }, () => rand() * 2 - 1),
        ),
        bias: Array.from({ length: hidden }, () => rand() * 0.1),
      },
      {
        weights: Array.from({ length: hidden }, () =>
          Array.from({ length: outWidth }, () => rand() * 2 - 1),
        ),
        bias: Array.from({ length: outWidth }, () => rand() * 0.1),
      },
    ];
  }
  const path = join(dir, name);
  writeFileSync(path, JSON.stringify({ layers, activation }));
  return path;
}

export function makeImages(dir: string, count: number, seed = 7): string {
  const rand = mulberry32(seed);
  const items = [];
  for (let i = 0; i < count; i += 1) {
    const bytes = Buffer.alloc(200 + Math.floor(rand() * 300));
    for (let b = 0; b < bytes.length; b += 1) {
      bytes[b] = Math.floor(rand() * 256);
    }
    const path = join(dir, `img${String(i).padStart(3, '0')}.bin`);
    writeFileSync(path, bytes);
    items.push({ id: `img${String(i).padStart(3, '0')}`, path });
  }
  const manifestPath = join(dir, 'manifest.json');
  writeFileSync(manifestPath, JSON.stringify({ items }));
  return manifestPath;
}

export function makePrompts(dir: string, lines: string[]): string {
  const path = join(dir, 'prompts.txt');
  writeFileSync(path, lines.join('\n') + '\n');
  return path;
}
