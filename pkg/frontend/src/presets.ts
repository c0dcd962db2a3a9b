/** Preset hyperparameters; imageSide is filled in from the dataset. */

import { NetConfig } from './generator';
import { TrainConfig } from './train';

export type PresetName = 'paper' | 'toy' | 'micro';

export function makeConfig(preset: PresetName, imageSide: number,
                           generatorKind: 'st' | 'plain' = 'st'): TrainConfig {
  const net: NetConfig = {
    imageSide,
    embedDim: 96,
    window: 8,
    patchSize: 4,
    stages: 2,
    blocks: 4,
    generatorKind,
  };
  const base: TrainConfig = {
    net,
    epochs: 200,
    batchSize: 16,
    lr: 2e-4,
    lambda: 0.01,
    seed: 0,
    discChannels: 32,
  };
  if (preset === 'toy') {
    return { ...base, epochs: 20, batchSize: 4 };
  }
  if (preset === 'micro') {
    return {
      ...base,
      net: { ...net, embedDim: 16, window: 4, patchSize: 2, stages: 1, blocks: 2 },
      epochs: 3,
      batchSize: 2,
      discChannels: 8,
    };
  }
  return base;
}
