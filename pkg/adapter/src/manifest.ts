// Input manifests: images come from a JSON manifest of {id, path} entries,
// texts from a plain file with one prompt per line. Row order in the output
// always equals manifest order.

import { readFileSync } from 'node:fs';

export interface ManifestItem {
  id: string;
  path: string;
}

export function loadImageManifest(path: string): ManifestItem[] {
  const raw = JSON.parse(readFileSync(path, 'utf-8')) as {
    items?: { id?: unknown; path?: unknown }[];
  };
  if (!Array.isArray(raw.items) || raw.items.length === 0) {
    throw new Error(`${path}: manifest needs a non-empty "items" list`);
  }
  const items = raw.items.map((item, index) => {
    if (typeof item.id !== 'string' || item.id.length === 0) {
      throw new Error(`${path}: item ${index} is missing an id`);
    }
    if (typeof item.path !== 'string' || item.path.length === 0) {
      throw new Error(`${path}: item ${index} is missing a path`);
    }
    return { id: item.id, path: item.path };
  });
  const seen = new Set<string>();
  for (const item of items) {
    if (seen.has(item.id)) {
      throw new Error(`${path}: duplicate id ${item.id}`);
    }
    seen.add(item.id);
  }
  return items;
}

export interface TextItem {
  id: string;
  text: string;
}

export function loadTextPrompts(path: string): TextItem[] {
  const lines = readFileSync(path, 'utf-8')
    .split('\n')
    .map((line) => line.trimEnd())
    .filter((line) => line.length > 0);
  if (lines.length === 0) {
    throw new Error(`${path}: no prompts found`);
  }
  const width = String(lines.length - 1).length;
  return lines.map((text, index) => ({
    id: `p${String(index).padStart(Math.max(width, 4), '0')}`,
    text,
  }));
}
