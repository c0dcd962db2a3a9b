/** Paired-image dataset access on top of the manifest + array containers. */

import * as path from 'path';

import * as tf from '@tensorflow/tfjs';

import { ArrayImage, readArray } from './container';
import { filterEntries, Manifest, PairEntry, Split } from './manifest';
import { Rng } from './rng';

export interface LoadedPair {
  input: ArrayImage;
  label: ArrayImage;
  entry: PairEntry;
}

export function loadPair(m: Manifest, entry: PairEntry): LoadedPair {
  return {
    input: readArray(path.join(m.root, entry.inputRef)),
    label: readArray(path.join(m.root, entry.labelRef)),
    entry,
  };
}

export function loadSplit(m: Manifest, split: Split,
                          segment?: number): LoadedPair[] {
  return filterEntries(m, split, segment).map((e) => loadPair(m, e));
}

/** Largest |value| over the inputs; used to scale network inputs to ~[-1, 1]
 * (the backprojection images carry the 2*pi Hilbert magnitude). */
export function inputScale(pairs: LoadedPair[]): number {
  let s = 0;
  for (const p of pairs) {
    for (const v of p.input.data) {
      const a = Math.abs(v);
      if (a > s) s = a;
    }
  }
  return s > 0 ? s : 1;
}

export function toBatch(pairs: LoadedPair[], scale: number):
    { x: tf.Tensor4D; y: tf.Tensor4D } {
  const n = pairs.length;
  const side = pairs[0].input.rows;
  const x = new Float32Array(n * side * side);
  const y = new Float32Array(n * side * side);
  for (let i = 0; i < n; i++) {
    const inp = pairs[i].input;
    const lab = pairs[i].label;
    if (inp.rows !== side || lab.rows !== side) {
      throw new Error('pairs have inconsistent shapes');
    }
    for (let j = 0; j < side * side; j++) {
      x[i * side * side + j] = inp.data[j] / scale;
      y[i * side * side + j] = lab.data[j];
    }
  }
  return {
    x: tf.tensor4d(x, [n, side, side, 1]),
    y: tf.tensor4d(y, [n, side, side, 1]),
  };
}

export function* batches(pairs: LoadedPair[], batchSize: number,
                         rng: Rng | null): Generator<LoadedPair[]> {
  const order = rng ? rng.shuffle(pairs) : pairs.slice();
  for (let i = 0; i < order.length; i += batchSize) {
    yield order.slice(i, i + batchSize);
  }
}

/** Remove the symmetric zero frame added for per-segment pairs. */
export function unpad(img: ArrayImage, targetSide: number): ArrayImage {
  const off = (img.rows - targetSide) / 2;
  if (!Number.isInteger(off) || off < 0) {
    throw new Error(`cannot unpad ${img.rows} -> ${targetSide}`);
  }
  const data = new Float32Array(targetSide * targetSide);
  for (let r = 0; r < targetSide; r++) {
    const src = (r + off) * img.cols + off;
    data.set(img.data.subarray(src, src + targetSide), r * targetSide);
  }
  return { rows: targetSide, cols: targetSide, data };
}

export function psnrOf(a: Float32Array, b: Float32Array, range: number): number {
  let mse = 0;
  for (let i = 0; i < a.length; i++) {
    const d = a[i] - b[i];
    mse += d * d;
  }
  mse /= a.length;
  if (mse === 0) return Infinity;
  return 10 * Math.log10((range * range) / mse);
}
