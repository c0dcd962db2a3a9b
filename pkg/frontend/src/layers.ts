/** Hand-rolled parameter store and primitive layers.
 *
 * Everything trains through explicit tf.Variables held in a ParamStore, so
 * saving, loading, and seeded re-initialization stay fully deterministic
 * (no framework-side RNG involved).
 */

import * as tf from '@tensorflow/tfjs';

import { Rng } from './rng';

export class ParamStore {
  readonly vars = new Map<string, tf.Variable>();
  private rng: Rng;

  constructor(seed: number) {
    this.rng = new Rng(seed);
  }

  variable(name: string, shape: number[], init: 'gauss' | 'zeros' | 'ones',
           std = 0.02): tf.Variable {
    if (this.vars.has(name)) throw new Error(`duplicate parameter ${name}`);
    const n = shape.reduce((a, b) => a * b, 1);
    let data: Float32Array;
    if (init === 'gauss') data = this.rng.normals(n, std);
    else if (init === 'ones') data = new Float32Array(n).fill(1);
    else data = new Float32Array(n);
    // name tracked here only: tfjs variable names live in a global registry
    // and would collide across independent model instances
    const v = tf.variable(tf.tensor(data, shape), true);
    this.vars.set(name, v);
    return v;
  }

  trainables(): tf.Variable[] {
    return [...this.vars.values()];
  }

  /** Deep copy of all weights (for best-checkpoint tracking). */
  snapshot(): Map<string, Float32Array> {
    const out = new Map<string, Float32Array>();
    for (const [k, v] of this.vars) out.set(k, v.dataSync() as Float32Array);
    return out;
  }

  restore(snap: Map<string, Float32Array>): void {
    for (const [k, v] of this.vars) {
      const data = snap.get(k);
      if (!data) throw new Error(`missing weights for ${k}`);
      v.assign(tf.tensor(data, v.shape));
    }
  }

  serialize(): Buffer {
    const names = [...this.vars.keys()].sort();
    const meta: { name: string; shape: number[]; offset: number }[] = [];
    let offset = 0;
    const chunks: Buffer[] = [];
    for (const name of names) {
      const v = this.vars.get(name)!;
      const data = v.dataSync() as Float32Array;
      meta.push({ name, shape: v.shape.slice(), offset });
      chunks.push(Buffer.from(data.buffer.slice(data.byteOffset,
                                                data.byteOffset + data.byteLength)));
      offset += data.length;
    }
    const header = Buffer.from(JSON.stringify(meta), 'utf8');
    const hlen = Buffer.alloc(4);
    hlen.writeUInt32LE(header.length);
    return Buffer.concat([hlen, header, ...chunks]);
  }

  loadSerialized(blob: Buffer): void {
    const hlen = blob.readUInt32LE(0);
    const meta = JSON.parse(blob.subarray(4, 4 + hlen).toString('utf8'));
    const base = 4 + hlen;
    for (const m of meta) {
      const v = this.vars.get(m.name);
      if (!v) throw new Error(`unknown parameter ${m.name} in weights file`);
      const n = m.shape.reduce((a: number, b: number) => a * b, 1);
      const buf = Buffer.from(blob.subarray(base + m.offset * 4,
                                            base + (m.offset + n) * 4));
      const data = new Float32Array(buf.buffer, buf.byteOffset, n);
      v.assign(tf.tensor(new Float32Array(data), m.shape));
    }
  }

  dispose(): void {
    for (const v of this.vars.values()) v.dispose();
    this.vars.clear();
  }
}

export function gelu(x: tf.Tensor): tf.Tensor {
  // tanh approximation of the Gaussian error linear unit
  const c = Math.sqrt(2 / Math.PI);
  return tf.tidy(() => {
    const inner = tf.mul(c, tf.add(x, tf.mul(0.044715, tf.pow(x, 3))));
    return tf.mul(tf.mul(0.5, x), tf.add(1, tf.tanh(inner)));
  });
}

export interface Linear {
  apply(x: tf.Tensor): tf.Tensor;
}

export function linear(store: ParamStore, name: string, inDim: number,
                       outDim: number): Linear {
  const w = store.variable(`${name}/w`, [inDim, outDim], 'gauss');
  const b = store.variable(`${name}/b`, [outDim], 'zeros');
  return {
    apply: (x) => tf.tidy(() => {
      const flat = tf.reshape(x, [-1, inDim]);
      const y = tf.add(tf.matMul(flat, w), b);
      return tf.reshape(y, [...x.shape.slice(0, -1), outDim]);
    }),
  };
}

export function layerNorm(store: ParamStore, name: string, dim: number) {
  const g = store.variable(`${name}/gamma`, [dim], 'ones');
  const b = store.variable(`${name}/beta`, [dim], 'zeros');
  return {
    apply: (x: tf.Tensor) => tf.tidy(() => {
      const mean = tf.mean(x, -1, true);
      const centered = tf.sub(x, mean);
      const variance = tf.mean(tf.square(centered), -1, true);
      const normed = tf.div(centered, tf.sqrt(tf.add(variance, 1e-5)));
      return tf.add(tf.mul(normed, g), b);
    }),
  };
}

export function conv2d(store: ParamStore, name: string, k: number, inC: number,
                       outC: number, stride = 1, pad: 'same' | 'valid' = 'same') {
  const f = store.variable(`${name}/filter`, [k, k, inC, outC], 'gauss');
  const b = store.variable(`${name}/bias`, [outC], 'zeros');
  return {
    apply: (x: tf.Tensor4D) => tf.tidy(() =>
      tf.add(tf.conv2d(x, f as unknown as tf.Tensor4D, stride, pad), b) as tf.Tensor4D),
  };
}

export function mlp(store: ParamStore, name: string, dim: number, ratio = 4) {
  const fc1 = linear(store, `${name}/fc1`, dim, dim * ratio);
  const fc2 = linear(store, `${name}/fc2`, dim * ratio, dim);
  return {
    apply: (x: tf.Tensor) => tf.tidy(() => fc2.apply(gelu(fc1.apply(x)))),
  };
}

/** Bilinear spatial resize of an NHWC tensor. */
export function resizeBilinear(x: tf.Tensor4D, h: number, w: number): tf.Tensor4D {
  return tf.image.resizeBilinear(x, [h, w], false);
}

/** Cyclic spatial shift (positive = toward higher index), NHWC. */
export function cyclicShift(x: tf.Tensor4D, dy: number, dx: number): tf.Tensor4D {
  return tf.tidy(() => {
    let out = x;
    const [, H, W] = [x.shape[0], x.shape[1], x.shape[2]];
    if (dy !== 0) {
      const s = ((-dy % H) + H) % H;
      out = tf.concat([
        tf.slice(out, [0, s, 0, 0], [-1, H - s, -1, -1]),
        tf.slice(out, [0, 0, 0, 0], [-1, s, -1, -1]),
      ], 1) as tf.Tensor4D;
    }
    if (dx !== 0) {
      const s = ((-dx % W) + W) % W;
      out = tf.concat([
        tf.slice(out, [0, 0, s, 0], [-1, -1, W - s, -1]),
        tf.slice(out, [0, 0, 0, 0], [-1, -1, s, -1]),
      ], 2) as tf.Tensor4D;
    }
    return out as tf.Tensor4D;
  });
}
