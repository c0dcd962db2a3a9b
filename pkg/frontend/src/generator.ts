/** Generators: the windowed-attention U-shaped network and a convolutional
 * baseline.  Both map [B, side, side, 1] -> same shape. */

import * as tf from '@tensorflow/tfjs';

import { windowAttention } from './attention';
import { conv2d, gelu, layerNorm, linear, mlp, ParamStore, resizeBilinear } from './layers';

export interface NetConfig {
  imageSide: number;
  embedDim: number;    // 96 in the full preset
  window: number;      // 8 in the full preset
  patchSize: number;   // patch-embedding stride
  stages: number;      // encoder downsampling steps
  blocks: number;      // attention blocks per layer (4 = W/SW/W/SW)
  generatorKind: 'st' | 'plain';
}

export function validateConfig(cfg: NetConfig): void {
  const tokens = cfg.imageSide / cfg.patchSize;
  if (!Number.isInteger(tokens)) {
    throw new Error(`imageSide ${cfg.imageSide} not divisible by patch ${cfg.patchSize}`);
  }
  const need = cfg.window * 2 ** cfg.stages;
  if (tokens % need !== 0) {
    throw new Error(
      `token grid ${tokens} must be divisible by window*2^stages = ${need}`);
  }
}

export interface Generator {
  store: ParamStore;
  config: NetConfig;
  forward(x: tf.Tensor4D): tf.Tensor4D;
}

function headsFor(dim: number): number {
  for (const h of [8, 4, 2]) {
    if (dim % h === 0 && dim / h >= 8) return h;
  }
  return 1;
}

interface Block {
  apply(x: tf.Tensor4D): tf.Tensor4D;
}

function stLayer(store: ParamStore, name: string, dim: number, win: number,
                 blocks: number): Block {
  const parts = [] as {
    ln1: ReturnType<typeof layerNorm>;
    attn: ReturnType<typeof windowAttention>;
    ln2: ReturnType<typeof layerNorm>;
    ffn: ReturnType<typeof mlp>;
    shifted: boolean;
  }[];
  for (let b = 0; b < blocks; b++) {
    parts.push({
      ln1: layerNorm(store, `${name}/b${b}/ln1`, dim),
      attn: windowAttention(store, `${name}/b${b}/attn`, dim, win, headsFor(dim)),
      ln2: layerNorm(store, `${name}/b${b}/ln2`, dim),
      ffn: mlp(store, `${name}/b${b}/mlp`, dim),
      shifted: b % 2 === 1, // alternate window / shifted-window attention
    });
  }
  return {
    apply: (x) => tf.tidy(() => {
      let h = x;
      for (const p of parts) {
        h = tf.add(h, p.attn.apply(p.ln1.apply(h) as tf.Tensor4D, p.shifted)) as tf.Tensor4D;
        h = tf.add(h, p.ffn.apply(p.ln2.apply(h))) as tf.Tensor4D;
      }
      return h;
    }),
  };
}

function patchMerge(store: ParamStore, name: string, dim: number) {
  const norm = layerNorm(store, `${name}/ln`, 4 * dim);
  const reduce = linear(store, `${name}/reduce`, 4 * dim, 2 * dim);
  return {
    apply: (x: tf.Tensor4D) => tf.tidy(() => {
      const [B, H, W, C] = x.shape;
      const r = tf.reshape(x, [B, H / 2, 2, W / 2, 2, C]);
      const t = tf.transpose(r, [0, 1, 3, 2, 4, 5]);
      const cat = tf.reshape(t, [B, H / 2, W / 2, 4 * C]);
      return reduce.apply(norm.apply(cat)) as tf.Tensor4D;
    }),
  };
}

export function buildSTUnet(store: ParamStore, cfg: NetConfig): Generator {
  validateConfig(cfg);
  const C = cfg.embedDim;
  const embed = conv2d(store, 'embed', cfg.patchSize, 1, C, cfg.patchSize, 'valid');
  const embedNorm = layerNorm(store, 'embed/ln', C);

  const encLayers: Block[] = [];
  const merges: ReturnType<typeof patchMerge>[] = [];
  for (let i = 0; i < cfg.stages; i++) {
    const dim = C * 2 ** i;
    encLayers.push(stLayer(store, `enc${i}`, dim, cfg.window, cfg.blocks));
    merges.push(patchMerge(store, `merge${i}`, dim));
  }
  const bottom = stLayer(store, 'bottom', C * 2 ** cfg.stages, cfg.window,
                         cfg.blocks);
  const decHalve: ReturnType<typeof linear>[] = [];
  const decFuse: ReturnType<typeof linear>[] = [];
  const decLayers: Block[] = [];
  for (let i = cfg.stages - 1; i >= 0; i--) {
    const dim = C * 2 ** i;
    decHalve.push(linear(store, `dec${i}/halve`, 2 * dim, dim));
    decFuse.push(linear(store, `dec${i}/fuse`, 2 * dim, dim));
    decLayers.push(stLayer(store, `dec${i}`, dim, cfg.window, cfg.blocks));
  }
  const headConv = conv2d(store, 'head/conv', 3, C, C);
  const headOut = conv2d(store, 'head/out', 1, C, 1);

  function forward(x: tf.Tensor4D): tf.Tensor4D {
    return tf.tidy(() => {
      let h = embedNorm.apply(embed.apply(x)) as tf.Tensor4D;
      const skips: tf.Tensor4D[] = [];
      for (let i = 0; i < cfg.stages; i++) {
        h = encLayers[i].apply(h);
        skips.push(h);
        h = merges[i].apply(h);
      }
      h = bottom.apply(h);
      for (let j = 0; j < cfg.stages; j++) {
        const skip = skips[cfg.stages - 1 - j];
        h = resizeBilinear(h, skip.shape[1], skip.shape[2]);
        h = decHalve[j].apply(h) as tf.Tensor4D;
        h = decFuse[j].apply(tf.concat([h, skip], 3)) as tf.Tensor4D;
        h = decLayers[j].apply(h);
      }
      h = resizeBilinear(h, cfg.imageSide, cfg.imageSide);
      h = gelu(headConv.apply(h)) as tf.Tensor4D;
      return headOut.apply(h);
    });
  }

  return { store, config: cfg, forward };
}

export function buildPlainUnet(store: ParamStore, cfg: NetConfig): Generator {
  validateConfig(cfg);
  const C = cfg.embedDim;
  const mk = (name: string, inC: number, outC: number) => {
    const c1 = conv2d(store, `${name}/c1`, 3, inC, outC);
    const c2 = conv2d(store, `${name}/c2`, 3, outC, outC);
    return {
      apply: (x: tf.Tensor4D) => tf.tidy(() =>
        tf.relu(c2.apply(tf.relu(c1.apply(x)) as tf.Tensor4D)) as tf.Tensor4D),
    };
  };
  const enc: ReturnType<typeof mk>[] = [mk('enc0', 1, C)];
  for (let i = 1; i <= cfg.stages; i++) {
    enc.push(mk(`enc${i}`, C * 2 ** (i - 1), C * 2 ** i));
  }
  const dec: ReturnType<typeof mk>[] = [];
  for (let i = cfg.stages - 1; i >= 0; i--) {
    dec.push(mk(`dec${i}`, C * 2 ** i + C * 2 ** (i + 1), C * 2 ** i));
  }
  const out = conv2d(store, 'out', 1, C, 1);

  function forward(x: tf.Tensor4D): tf.Tensor4D {
    return tf.tidy(() => {
      const skips: tf.Tensor4D[] = [];
      let h = enc[0].apply(x);
      for (let i = 1; i <= cfg.stages; i++) {
        skips.push(h);
        h = tf.maxPool(h, 2, 2, 'same');
        h = enc[i].apply(h);
      }
      for (let j = 0; j < cfg.stages; j++) {
        const skip = skips[cfg.stages - 1 - j];
        h = resizeBilinear(h, skip.shape[1], skip.shape[2]);
        h = dec[j].apply(tf.concat([h, skip], 3) as tf.Tensor4D);
      }
      return out.apply(h);
    });
  }

  return { store, config: cfg, forward };
}

export function buildGenerator(store: ParamStore, cfg: NetConfig): Generator {
  return cfg.generatorKind === 'plain' ? buildPlainUnet(store, cfg)
                                       : buildSTUnet(store, cfg);
}
