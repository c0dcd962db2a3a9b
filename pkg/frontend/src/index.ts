export { blake2b } from './blake2b';
export { ArrayImage, ContainerError, readArray, writeArray } from './container';
export { readManifest, filterEntries, segmentCount } from './manifest';
export {
  batches, inputScale, loadPair, loadSplit, psnrOf, toBatch, unpad,
} from './data';
export { ParamStore, gelu, linear, layerNorm, conv2d, mlp } from './layers';
export {
  relativeIndex, shiftMask, windowAttention, windowPartition, windowReverse,
} from './attention';
export {
  buildGenerator, buildPlainUnet, buildSTUnet, NetConfig, validateConfig,
} from './generator';
export { buildPatchDiscriminator } from './discriminator';
export {
  CLAMP_EPS, adversarialLoss, discriminatorLoss, generatorLoss, l1Loss,
  sumLosses,
} from './losses';
export {
  Bundle, TrainConfig, loadBundle, saveBundle, trainMNetO, trainOSNet,
  trainPairs,
} from './train';
export { inferAndOverlay, runGenerator } from './infer';
export { makeConfig, PresetName } from './presets';
export { Rng } from './rng';
