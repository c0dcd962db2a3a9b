/** Dataset manifest (newline-delimited JSON) produced by the simulation side. */

import * as fs from 'fs';
import * as path from 'path';

export type Split = 'train' | 'val' | 'test';

export interface PairEntry {
  inputRef: string;
  labelRef: string;
  pairKind: 'osnet' | 'osnet-roi' | 'mneto';
  phantomSeed: number;
  segmentIndex: number | null;
  split: Split;
  augmentations: string[];
}

export interface Manifest {
  root: string;
  head: Record<string, any>;
  entries: PairEntry[];
}

export function readManifest(file: string): Manifest {
  const root = path.dirname(file);
  const lines = fs.readFileSync(file, 'utf8').split('\n').filter((l) => l.length);
  let head: Record<string, any> | null = null;
  const entries: PairEntry[] = [];
  for (const line of lines) {
    const rec = JSON.parse(line);
    if (rec.kind === 'head') {
      head = rec;
    } else if (rec.kind === 'pair') {
      entries.push({
        inputRef: rec.input,
        labelRef: rec.label,
        pairKind: rec.pair_kind,
        phantomSeed: rec.phantom_seed,
        segmentIndex: rec.segment_index,
        split: rec.split,
        augmentations: rec.augmentations ?? [],
      });
    }
  }
  if (!head) throw new Error(`${file}: no head record`);
  return { root, head, entries };
}

export function filterEntries(m: Manifest, split: Split,
                              segment?: number): PairEntry[] {
  return m.entries.filter((e) =>
    e.split === split && (segment === undefined || e.segmentIndex === segment));
}

export function segmentCount(m: Manifest): number {
  const segs = new Set<number>();
  for (const e of m.entries) {
    if (e.segmentIndex !== null) segs.add(e.segmentIndex);
  }
  return segs.size;
}
