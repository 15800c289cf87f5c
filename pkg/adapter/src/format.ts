// Binary embedding file writer/reader matching the audit toolkit's format:
// 8 magic bytes "BIAUD1\0\0", little-endian uint32 header length, UTF-8 JSON
// header, then count x dim little-endian float32 values, row-major. The
// header is written with a fixed key order and no whitespace so identical
// inputs produce identical bytes.

export const MAGIC = Buffer.from('BIAUD1\0\0', 'latin1');

export interface EmbeddingFile {
  modelId: string;
  ids: string[];
  dim: number;
  values: Float64Array; // row-major, length ids.length * dim
}

export function writeEmbeddingFile(file: EmbeddingFile): Buffer {
  const { modelId, ids, dim, values } = file;
  if (values.length !== ids.length * dim) {
    throw new Error(
      `value count ${values.length} does not match ${ids.length} x ${dim}`,
    );
  }
  if (new Set(ids).size !== ids.length) {
    throw new Error('duplicate ids in embedding output');
  }
  const header = {
    version: 1,
    dtype: 'f32le',
    count: ids.length,
    dim,
    model_id: modelId,
    ids,
  };
  const headerBytes = Buffer.from(JSON.stringify(header), 'utf-8');
  const lengthBytes = Buffer.alloc(4);
  lengthBytes.writeUInt32LE(headerBytes.length, 0);
  const payload = Buffer.alloc(values.length * 4);
  const view = new DataView(payload.buffer, payload.byteOffset, payload.length);
  for (let i = 0; i < values.length; i += 1) {
    if (!Number.isFinite(values[i])) {
      throw new Error(`non-finite embedding value at flat index ${i}`);
    }
    view.setFloat32(i * 4, values[i], true);
  }
  return Buffer.concat([MAGIC, lengthBytes, headerBytes, payload]);
}

export interface ParsedEmbeddingFile {
  modelId: string;
  ids: string[];
  dim: number;
  rows: Float32Array[];
}

// reader used by the adapter's own tests; the authoritative validator is the
// audit toolkit's `validate` command
export function readEmbeddingFile(blob: Buffer): ParsedEmbeddingFile {
  if (!blob.subarray(0, 8).equals(MAGIC)) {
    throw new Error('bad magic bytes');
  }
  const headerLength = blob.readUInt32LE(8);
  const header = JSON.parse(
    blob.subarray(12, 12 + headerLength).toString('utf-8'),
  );
  const { count, dim, model_id: modelId, ids } = header;
  const payload = blob.subarray(12 + headerLength);
  if (payload.length !== count * dim * 4) {
    throw new Error(
      `payload holds ${payload.length} bytes, expected ${count * dim * 4}`,
    );
  }
  const view = new DataView(payload.buffer, payload.byteOffset, payload.length);
  const rows: Float32Array[] = [];
  for (let r = 0; r < count; r += 1) {
    const row = new Float32Array(dim);
    for (let c = 0; c < dim; c += 1) {
      row[c] = view.getFloat32((r * dim + c) * 4, true);
    }
    rows.push(row);
  }
  return { modelId, ids, dim, rows };
}
