/** Inference: run a bundle on container images; per-segment outputs are
 * unpadded and summed into the final image. */

import * as tf from '@tensorflow/tfjs';

import { ArrayImage } from './container';
import { unpad } from './data';
import { Bundle } from './train';

export function runGenerator(bundle: Bundle, img: ArrayImage): ArrayImage {
  const side = bundle.config.net.imageSide;
  if (img.rows !== side || img.cols !== side) {
    throw new Error(`input is ${img.rows}x${img.cols}, model wants ${side}`);
  }
  const out = tf.tidy(() => {
    const x = tf.tensor4d(
      Float32Array.from(img.data, (v) => v / bundle.inputScale),
      [1, side, side, 1]);
    return bundle.generator.forward(x);
  });
  const data = out.dataSync() as Float32Array;
  out.dispose();
  return { rows: side, cols: side, data: new Float32Array(data) };
}

/** Sum of per-segment model outputs, unpadded to the target side; the order
 * of (bundle, input) pairs does not matter. */
export function inferAndOverlay(pairs: { bundle: Bundle; input: ArrayImage }[],
                                targetSide: number): ArrayImage {
  if (!pairs.length) throw new Error('need at least one (bundle, input) pair');
  const total = new Float32Array(targetSide * targetSide);
  for (const { bundle, input } of pairs) {
    const out = unpad(runGenerator(bundle, input), targetSide);
    for (let i = 0; i < total.length; i++) total[i] += out.data[i];
  }
  return { rows: targetSide, cols: targetSide, data: total };
}
