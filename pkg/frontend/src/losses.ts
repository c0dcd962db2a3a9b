/** Adversarial training objectives.
 *
 * Generator: L = -lambda * E[log D(G(b), b)] + (1 - lambda) * E[|f - G(b)|]
 * Discriminator: L = -E[log D(b, f)] - E[log(1 - D(b, G(b)))]
 * Multi-model variants report the plain sum over per-segment models (the
 * models share nothing, so the sum is bookkeeping).
 *
 * Discriminator outputs are clamped to [eps, 1 - eps] before any log.
 */

import * as tf from '@tensorflow/tfjs';

export const CLAMP_EPS = 1e-7;

function clamped(p: tf.Tensor): tf.Tensor {
  return tf.clipByValue(p, CLAMP_EPS, 1 - CLAMP_EPS);
}

export function l1Loss(generated: tf.Tensor, label: tf.Tensor): tf.Scalar {
  return tf.tidy(() => tf.mean(tf.abs(tf.sub(label, generated))) as tf.Scalar);
}

export function adversarialLoss(dOnFake: tf.Tensor): tf.Scalar {
  return tf.tidy(() => tf.neg(tf.mean(tf.log(clamped(dOnFake)))) as tf.Scalar);
}

export function generatorLoss(dOnFake: tf.Tensor, generated: tf.Tensor,
                              label: tf.Tensor, lambda: number): tf.Scalar {
  if (lambda < 0 || lambda > 1) throw new Error('lambda must lie in [0, 1]');
  return tf.tidy(() => {
    const adv = adversarialLoss(dOnFake);
    const l1 = l1Loss(generated, label);
    return tf.add(tf.mul(lambda, adv), tf.mul(1 - lambda, l1)) as tf.Scalar;
  });
}

export interface DiscriminatorLossParts {
  total: tf.Scalar;
  real: tf.Scalar; // -E[log D(b, f)]
  fake: tf.Scalar; // -E[log(1 - D(b, G(b)))]
}

export function discriminatorLoss(dOnReal: tf.Tensor,
                                  dOnFake: tf.Tensor): DiscriminatorLossParts {
  return tf.tidy(() => {
    const real = tf.neg(tf.mean(tf.log(clamped(dOnReal)))) as tf.Scalar;
    const fake = tf.neg(tf.mean(tf.log(tf.sub(1, clamped(dOnFake))))) as tf.Scalar;
    return { total: tf.add(real, fake) as tf.Scalar, real, fake };
  });
}

/** Aggregate reported losses across independent per-segment models. */
export function sumLosses(values: number[]): number {
  return values.reduce((a, b) => a + b, 0);
}
