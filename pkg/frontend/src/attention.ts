/** Windowed multi-head self-attention with learned relative-position bias,
 * plus the shifted-window variant with region masking. */

import * as tf from '@tensorflow/tfjs';

import { cyclicShift, linear, ParamStore } from './layers';

/** [B, H, W, C] -> [B * numWindows, win*win, C]. */
export function windowPartition(x: tf.Tensor4D, win: number): tf.Tensor3D {
  return tf.tidy(() => {
    const [B, H, W, C] = x.shape;
    const r = tf.reshape(x, [B, H / win, win, W / win, win, C]);
    const t = tf.transpose(r, [0, 1, 3, 2, 4, 5]);
    return tf.reshape(t, [-1, win * win, C]) as tf.Tensor3D;
  });
}

/** Inverse of windowPartition. */
export function windowReverse(windows: tf.Tensor3D, win: number, H: number,
                              W: number): tf.Tensor4D {
  return tf.tidy(() => {
    const C = windows.shape[2];
    const B = windows.shape[0] / ((H / win) * (W / win));
    const r = tf.reshape(windows, [B, H / win, W / win, win, win, C]);
    const t = tf.transpose(r, [0, 1, 3, 2, 4, 5]);
    return tf.reshape(t, [B, H, W, C]) as tf.Tensor4D;
  });
}

/** Pairwise relative-position index for a win x win window: [win^2 * win^2]. */
export function relativeIndex(win: number): Int32Array {
  const n = win * win;
  const idx = new Int32Array(n * n);
  for (let i = 0; i < n; i++) {
    const yi = Math.floor(i / win);
    const xi = i % win;
    for (let j = 0; j < n; j++) {
      const yj = Math.floor(j / win);
      const xj = j % win;
      const dy = yi - yj + win - 1;
      const dx = xi - xj + win - 1;
      idx[i * n + j] = dy * (2 * win - 1) + dx;
    }
  }
  return idx;
}

/** Additive mask blocking attention across shifted-window region seams.
 * Returns [numWindows, win^2, win^2] with 0 (allowed) / -1e9 (blocked). */
export function shiftMask(H: number, W: number, win: number,
                          shift: number): tf.Tensor3D {
  const region = new Float32Array(H * W);
  let id = 0;
  const hs = [[0, H - win], [H - win, H - shift], [H - shift, H]];
  const ws = [[0, W - win], [W - win, W - shift], [W - shift, W]];
  for (const [h0, h1] of hs) {
    for (const [w0, w1] of ws) {
      for (let y = h0; y < h1; y++) {
        for (let x = w0; x < w1; x++) region[y * W + x] = id;
      }
      id += 1;
    }
  }
  return tf.tidy(() => {
    const img = tf.tensor4d(region, [1, H, W, 1]);
    const wins = windowPartition(img as tf.Tensor4D, win); // [nW, win^2, 1]
    const a = tf.squeeze(wins, [2]); // [nW, win^2]
    const diff = tf.sub(tf.expandDims(a, 1), tf.expandDims(a, 2));
    const blocked = tf.notEqual(diff, 0);
    return tf.where(blocked, tf.fill(blocked.shape, -1e9),
                    tf.zeros(blocked.shape)) as tf.Tensor3D;
  });
}

export interface WindowAttention {
  /** x: [B, H, W, C] spatially windowed tokens; shifted toggles SW-MSA. */
  apply(x: tf.Tensor4D, shifted: boolean): tf.Tensor4D;
  /** Raw per-window attention on prepared q/k/v (exposed for testing). */
  attend(q: tf.Tensor, k: tf.Tensor, v: tf.Tensor,
         mask?: tf.Tensor3D): tf.Tensor;
}

export function windowAttention(store: ParamStore, name: string, dim: number,
                                win: number, heads: number): WindowAttention {
  if (dim % heads !== 0) throw new Error(`dim ${dim} not divisible by ${heads} heads`);
  const dHead = dim / heads;
  const scale = 1 / Math.sqrt(dHead);
  const qkv = linear(store, `${name}/qkv`, dim, 3 * dim);
  const proj = linear(store, `${name}/proj`, dim, dim);
  const biasTable = store.variable(`${name}/relbias`,
                                   [(2 * win - 1) * (2 * win - 1), heads], 'gauss');
  const relIdx = tf.tensor1d(relativeIndex(win), 'int32');
  const maskCache = new Map<string, tf.Tensor3D>();

  function relBias(): tf.Tensor {
    // [win^2 * win^2, heads] -> [1, heads, win^2, win^2]
    return tf.tidy(() => {
      const n = win * win;
      const gathered = tf.gather(biasTable, relIdx);
      return tf.expandDims(tf.transpose(tf.reshape(gathered, [n, n, -1]),
                                        [2, 0, 1]), 0);
    });
  }

  function attend(q: tf.Tensor, k: tf.Tensor, v: tf.Tensor,
                  mask?: tf.Tensor3D): tf.Tensor {
    // q, k, v: [nB, heads, tokens, dHead]
    return tf.tidy(() => {
      let logits = tf.mul(tf.matMul(q, k, false, true), scale);
      logits = tf.add(logits, relBias());
      if (mask) {
        // mask is [nW, t, t]; batch is a multiple of nW
        const nW = mask.shape[0];
        const nB = logits.shape[0] as number;
        const m = tf.tile(tf.expandDims(mask, 1), [nB / nW, 1, 1, 1]);
        logits = tf.add(logits, m);
      }
      const attn = tf.softmax(logits, -1);
      return tf.matMul(attn, v);
    });
  }

  function apply(x: tf.Tensor4D, shifted: boolean): tf.Tensor4D {
    return tf.tidy(() => {
      const [B, H, W, C] = x.shape;
      const shift = shifted ? Math.floor(win / 2) : 0;
      let inp = x;
      if (shift > 0) inp = cyclicShift(x, -shift, -shift);
      const wins = windowPartition(inp, win); // [nB, t, C]
      const t = win * win;
      const nB = wins.shape[0];
      const qkvOut = qkv.apply(wins); // [nB, t, 3C]
      const split = tf.reshape(qkvOut, [nB, t, 3, heads, dHead]);
      const perm = tf.transpose(split, [2, 0, 3, 1, 4]); // [3, nB, heads, t, dHead]
      const q = tf.squeeze(tf.slice(perm, [0, 0, 0, 0, 0], [1, -1, -1, -1, -1]), [0]);
      const k = tf.squeeze(tf.slice(perm, [1, 0, 0, 0, 0], [1, -1, -1, -1, -1]), [0]);
      const v = tf.squeeze(tf.slice(perm, [2, 0, 0, 0, 0], [1, -1, -1, -1, -1]), [0]);
      let mask: tf.Tensor3D | undefined;
      if (shift > 0) {
        const key = `${H}x${W}`;
        if (!maskCache.has(key)) {
          const m = shiftMask(H, W, win, shift);
          tf.keep(m);
          maskCache.set(key, m);
        }
        mask = maskCache.get(key);
      }
      const out = attend(q, k, v, mask); // [nB, heads, t, dHead]
      const merged = tf.reshape(tf.transpose(out, [0, 2, 1, 3]), [nB, t, C]);
      const projected = proj.apply(merged) as tf.Tensor3D;
      let back = windowReverse(projected, win, H, W);
      if (shift > 0) back = cyclicShift(back, shift, shift);
      return back;
    });
  }

  return { apply, attend };
}
