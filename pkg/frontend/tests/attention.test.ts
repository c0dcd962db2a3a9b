import * as tf from '@tensorflow/tfjs';
import { describe, expect, it } from 'vitest';

import {
  relativeIndex, shiftMask, windowAttention, windowPartition, windowReverse,
} from '../src/attention';
import { ParamStore } from '../src/layers';

function zeroBias(store: ParamStore, name: string) {
  const v = store.vars.get(name)!;
  v.assign(tf.zeros(v.shape));
}

describe('window partition', () => {
  it('roundtrips exactly', () => {
    const x = tf.randomUniform([2, 8, 8, 3], -1, 1, 'float32', 1) as tf.Tensor4D;
    const wins = windowPartition(x, 4);
    expect(wins.shape).toEqual([2 * 4, 16, 3]);
    const back = windowReverse(wins, 4, 8, 8);
    expect(Array.from(back.dataSync())).toEqual(Array.from(x.dataSync()));
  });
});

describe('relative position index', () => {
  it('is symmetric under pair swap up to reflection and spans the table', () => {
    const win = 3;
    const idx = relativeIndex(win);
    const n = win * win;
    expect(idx.length).toBe(n * n);
    const maxIdx = (2 * win - 1) * (2 * win - 1) - 1;
    expect(Math.max(...idx)).toBe(maxIdx);
    expect(Math.min(...idx)).toBe(0);
    // zero relative offset sits at the table center for every diagonal pair
    const center = ((win - 1) * (2 * win - 1)) + (win - 1);
    for (let i = 0; i < n; i++) expect(idx[i * n + i]).toBe(center);
  });
});

describe('window attention closed forms', () => {
  it('returns the per-window mean of V when Q is zero and bias is zero', () => {
    const store = new ParamStore(3);
    const attn = windowAttention(store, 'a', 8, 2, 2);
    zeroBias(store, 'a/relbias');
    const t = 4; // 2x2 window
    const q = tf.zeros([3, 2, t, 4]);
    const k = tf.randomUniform([3, 2, t, 4], -1, 1, 'float32', 2);
    const v = tf.randomUniform([3, 2, t, 4], -1, 1, 'float32', 3);
    const out = attn.attend(q, k, v);
    const mean = tf.mean(v, 2, true).tile([1, 1, t, 1]);
    const diff = tf.max(tf.abs(tf.sub(out, mean))).dataSync()[0];
    expect(diff).toBeLessThan(1e-6);
  });

  it('passes V through for a single-token window', () => {
    const store = new ParamStore(4);
    const attn = windowAttention(store, 'a', 4, 1, 1);
    zeroBias(store, 'a/relbias');
    const q = tf.randomUniform([2, 1, 1, 4], -1, 1, 'float32', 4);
    const k = tf.randomUniform([2, 1, 1, 4], -1, 1, 'float32', 5);
    const v = tf.randomUniform([2, 1, 1, 4], -1, 1, 'float32', 6);
    const out = attn.attend(q, k, v);
    const diff = tf.max(tf.abs(tf.sub(out, v))).dataSync()[0];
    expect(diff).toBeLessThan(1e-7);
  });

  it('matches the hand-computed two-token case', () => {
    // d_z = 1, Q = [1, 0], K = [1, 0], V = [1, 2]:
    // logits = [[1, 0], [0, 0]] -> softmax rows; out = softmax @ V
    const store = new ParamStore(5);
    // window 2x1 is not expressible; use win=1.. construct via attend directly
    const attn = windowAttention(store, 'a', 1, 1, 1);
    zeroBias(store, 'a/relbias');
    // shape [1, 1, 2, 1]: two tokens, head dim 1 (bias table is 1x1 -> same
    // bias on every pair, zeroed above)
    const q = tf.tensor4d([1, 0], [1, 1, 2, 1]);
    const k = tf.tensor4d([1, 0], [1, 1, 2, 1]);
    const v = tf.tensor4d([1, 2], [1, 1, 2, 1]);
    const out = Array.from(attn.attend(q, k, v).dataSync());
    const e = Math.exp(1);
    const row0 = (e * 1 + 1 * 2) / (e + 1);
    const row1 = (1 * 1 + 1 * 2) / 2;
    expect(out[0]).toBeCloseTo(row0, 5);
    expect(out[1]).toBeCloseTo(row1, 5);
  });

  it('rejects indivisible head dimensions', () => {
    const store = new ParamStore(6);
    expect(() => windowAttention(store, 'a', 6, 2, 4)).toThrow();
  });
});

describe('shifted-window mask', () => {
  it('blocks exactly the cross-region pairs', () => {
    const m = shiftMask(4, 4, 2, 1);
    expect(m.shape).toEqual([4, 4, 4]);
    const vals = m.dataSync();
    // every entry is 0 or -1e9, diagonal always allowed
    for (let w = 0; w < 4; w++) {
      for (let i = 0; i < 4; i++) {
        expect(vals[w * 16 + i * 4 + i]).toBe(0);
      }
    }
    const blocked = Array.from(vals).filter((x) => x !== 0);
    expect(blocked.length).toBeGreaterThan(0);
    for (const b of blocked) expect(b).toBe(-1e9);
  });

  it('full attention output stays finite with and without shift', () => {
    const store = new ParamStore(7);
    const attn = windowAttention(store, 'a', 8, 2, 2);
    const x = tf.randomUniform([1, 4, 4, 8], -1, 1, 'float32', 8) as tf.Tensor4D;
    for (const shifted of [false, true]) {
      const y = attn.apply(x, shifted);
      expect(y.shape).toEqual([1, 4, 4, 8]);
      const finite = tf.all(tf.isFinite(y)).dataSync()[0];
      expect(finite).toBe(1);
    }
  });
});
