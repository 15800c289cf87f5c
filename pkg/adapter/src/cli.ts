#!/usr/bin/env node
// extract --model ckpt.json (--images manifest.json | --texts prompts.txt)
//         --out file.emb [--pooling cls|mean] [--connector weights.json]

import { loadCheckpoint, loadConnector } from './checkpoint.js';
import { extractImages, extractTexts, Pooling, writeToPath } from './extract.js';
import { loadImageManifest, loadTextPrompts } from './manifest.js';

const USAGE = `usage: extract --model CKPT.json --out FILE.emb
               (--images MANIFEST.json | --texts PROMPTS.txt)
               [--pooling cls|mean] [--connector WEIGHTS.json]`;

function parseArgs(argv: string[]): Map<string, string> {
  const args = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const flag = argv[i];
    const value = argv[i + 1];
    if (!flag.startsWith('--') || value === undefined) {
      throw new Error(USAGE);
    }
    args.set(flag.slice(2), value);
  }
  return args;
}

export function main(argv: string[]): number {
  let args: Map<string, string>;
  try {
    args = parseArgs(argv);
  } catch (error) {
    console.error((error as Error).message);
    return 2;
  }
  const model = args.get('model');
  const out = args.get('out');
  const images = args.get('images');
  const texts = args.get('texts');
  const pooling = (args.get('pooling') ?? 'mean') as Pooling;
  if (!model || !out || (!images && !texts) || (images && texts)) {
    console.error(USAGE);
    return 2;
  }
  if (pooling !== 'cls' && pooling !== 'mean') {
    console.error(`unknown pooling ${pooling}`);
    return 2;
  }
  try {
    const checkpoint = loadCheckpoint(model);
    const connectorPath = args.get('connector');
    const connector = connectorPath ? loadConnector(connectorPath) : null;
    const file = images
      ? extractImages(loadImageManifest(images), checkpoint, pooling, connector)
      : extractTexts(loadTextPrompts(texts!), checkpoint, pooling, connector);
    writeToPath(file, out);
    console.log(
      JSON.stringify({
        out,
        model_id: file.modelId,
        count: file.ids.length,
        dim: file.dim,
        pooling,
        connector: connectorPath ?? null,
      }),
    );
    return 0;
  } catch (error) {
    console.error((error as Error).message);
    return 1;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${process.argv[1]}`).href;
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
