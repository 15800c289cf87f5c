// Extraction pipeline: manifest -> penultimate patch features -> pooling ->
// checkpoint projection (base embeddings) or connector MLP (post-adaptation
// embeddings) -> binary embedding file. Fully deterministic: identical
// inputs produce identical bytes.

import { readFileSync, writeFileSync } from 'node:fs';
import {
  applyConnector,
  applyProjection,
  Checkpoint,
  Connector,
} from './checkpoint.js';
import { EmbeddingFile, writeEmbeddingFile } from './format.js';
import { patchFeatures, poolPatches } from './features.js';
import { ManifestItem, TextItem } from './manifest.js';

export type Pooling = 'cls' | 'mean';

function embedBytes(
  data: Buffer,
  checkpoint: Checkpoint,
  pooling: Pooling,
  connector: Connector | null,
): Float64Array {
  const patches = patchFeatures(data, checkpoint.patchSize, checkpoint.maxPatches);
  const pooled = poolPatches(patches, pooling);
  if (connector !== null) {
    return applyConnector(pooled, connector);
  }
  return applyProjection(pooled, checkpoint.projection, checkpoint.bias);
}

function collectRows(
  sources: { id: string; data: Buffer }[],
  checkpoint: Checkpoint,
  pooling: Pooling,
  connector: Connector | null,
): EmbeddingFile {
  let dim = -1;
  const rows: Float64Array[] = [];
  for (const source of sources) {
    const row = embedBytes(source.data, checkpoint, pooling, connector);
    if (dim === -1) {
      dim = row.length;
    } else if (row.length !== dim) {
      throw new Error(
        `dim mismatch: ${source.id} produced ${row.length}, expected ${dim}`,
      );
    }
    rows.push(row);
  }
  const values = new Float64Array(rows.length * dim);
  rows.forEach((row, r) => values.set(row, r * dim));
  return {
    modelId: checkpoint.modelId,
    ids: sources.map((s) => s.id),
    dim,
    values,
  };
}

export function extractImages(
  items: ManifestItem[],
  checkpoint: Checkpoint,
  pooling: Pooling,
  connector: Connector | null,
): EmbeddingFile {
  const sources = items.map((item) => {
    let data: Buffer;
    try {
      data = readFileSync(item.path);
    } catch (error) {
      throw new Error(
        `unreadable image ${item.path} for id ${item.id} (${(error as Error).message})`,
      );
    }
    return { id: item.id, data };
  });
  return collectRows(sources, checkpoint, pooling, connector);
}

export function extractTexts(
  items: TextItem[],
  checkpoint: Checkpoint,
  pooling: Pooling,
  connector: Connector | null,
): EmbeddingFile {
  const sources = items.map((item) => ({
    id: item.id,
    data: Buffer.from(item.text, 'utf-8'),
  }));
  return collectRows(sources, checkpoint, pooling, connector);
}

export function writeToPath(file: EmbeddingFile, outPath: string): void {
  writeFileSync(outPath, writeEmbeddingFile(file));
}
