/** Conditional patch discriminator: judges (condition, image) pairs per
 * receptive-field patch and outputs probabilities in (0, 1). */

import * as tf from '@tensorflow/tfjs';

import { conv2d, ParamStore } from './layers';

export interface Discriminator {
  store: ParamStore;
  /** cond and img: [B, side, side, 1]; returns [B, h', w', 1] probabilities. */
  forward(cond: tf.Tensor4D, img: tf.Tensor4D): tf.Tensor4D;
}

export function buildPatchDiscriminator(store: ParamStore,
                                        baseChannels = 32): Discriminator {
  const c1 = conv2d(store, 'd/c1', 4, 2, baseChannels, 2);
  const c2 = conv2d(store, 'd/c2', 4, baseChannels, baseChannels * 2, 2);
  const c3 = conv2d(store, 'd/c3', 4, baseChannels * 2, baseChannels * 4, 2);
  const out = conv2d(store, 'd/out', 4, baseChannels * 4, 1, 1);
  const lrelu = (x: tf.Tensor4D) => tf.leakyRelu(x, 0.2) as tf.Tensor4D;

  function forward(cond: tf.Tensor4D, img: tf.Tensor4D): tf.Tensor4D {
    return tf.tidy(() => {
      let h = tf.concat([cond, img], 3) as tf.Tensor4D;
      h = lrelu(c1.apply(h));
      h = lrelu(c2.apply(h));
      h = lrelu(c3.apply(h));
      return tf.sigmoid(out.apply(h)) as tf.Tensor4D;
    });
  }

  return { store, forward };
}
