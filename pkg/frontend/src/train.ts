/** Training loops: one shared model over overlaid inputs, or one model per
 * scan segment; alternating generator/discriminator steps with Adam(0.5,
 * 0.999) and an exponentially decaying learning rate. */

import * as fs from 'fs';
import * as path from 'path';

import * as tf from '@tensorflow/tfjs';

import { batches, inputScale, LoadedPair, loadSplit, toBatch } from './data';
import { buildPatchDiscriminator, Discriminator } from './discriminator';
import { buildGenerator, Generator, NetConfig } from './generator';
import { ParamStore } from './layers';
import { discriminatorLoss, generatorLoss, l1Loss } from './losses';
import { Manifest, segmentCount } from './manifest';
import { Rng } from './rng';

export interface TrainConfig {
  net: NetConfig;
  epochs: number;
  batchSize: number;
  lr: number;          // initial learning rate, decays exponentially toward 0
  lambda: number;      // adversarial share of the generator loss, in [0, 1]
  seed: number;
  discChannels: number;
}

export interface EpochLog {
  epoch: number;
  lAdv: number;
  lL1: number;
  lR: number;
  lF: number;
  valL1: number;
}

export interface Bundle {
  generator: Generator;
  config: TrainConfig;
  inputScale: number;
  curve: EpochLog[];
  segmentIndex: number | null;
}

const LR_FLOOR_RATIO = 1e-4; // lr decays exponentially to lr * this by the last epoch

function lrAt(cfg: TrainConfig, epoch: number): number {
  if (cfg.epochs <= 1) return cfg.lr;
  return cfg.lr * LR_FLOOR_RATIO ** (epoch / (cfg.epochs - 1));
}

function valLoss(gen: Generator, pairs: LoadedPair[], scale: number,
                 batchSize: number): number {
  if (!pairs.length) return NaN;
  let total = 0;
  let count = 0;
  for (const group of batches(pairs, batchSize, null)) {
    const { x, y } = toBatch(group, scale);
    const l = tf.tidy(() => l1Loss(gen.forward(x), y).dataSync()[0]);
    total += l * group.length;
    count += group.length;
    x.dispose();
    y.dispose();
  }
  return total / count;
}

export function trainPairs(trainPairs_: LoadedPair[], valPairs: LoadedPair[],
                           cfg: TrainConfig, segmentIndex: number | null = null,
                           verbose = false): Bundle {
  if (!trainPairs_.length) throw new Error('no training pairs');
  const scale = inputScale(trainPairs_);
  const gStore = new ParamStore(cfg.seed);
  const dStore = new ParamStore(cfg.seed + 77);
  const gen = buildGenerator(gStore, cfg.net);
  const disc: Discriminator = buildPatchDiscriminator(dStore, cfg.discChannels);
  const gVars = gStore.trainables();
  const dVars = dStore.trainables();
  const gOpt = tf.train.adam(cfg.lr, 0.5, 0.999);
  const dOpt = tf.train.adam(cfg.lr, 0.5, 0.999);

  const curve: EpochLog[] = [];
  let best: Map<string, Float32Array> | null = null;
  let bestVal = Infinity;

  for (let epoch = 0; epoch < cfg.epochs; epoch++) {
    const lr = lrAt(cfg, epoch);
    (gOpt as any).learningRate = lr;
    (dOpt as any).learningRate = lr;
    const rng = new Rng(cfg.seed * 9973 + epoch + 1);
    let sums = { adv: 0, l1: 0, real: 0, fake: 0, n: 0 };
    for (const group of batches(trainPairs_, cfg.batchSize, rng)) {
      const { x, y } = toBatch(group, scale);

      if (cfg.lambda > 0) {
        const dParts = { real: 0, fake: 0 };
        dOpt.minimize(() => {
          const fake = gen.forward(x);
          const parts = discriminatorLoss(disc.forward(x, y),
                                          disc.forward(x, fake));
          dParts.real = parts.real.dataSync()[0];
          dParts.fake = parts.fake.dataSync()[0];
          return parts.total;
        }, false, dVars);
        sums.real += dParts.real;
        sums.fake += dParts.fake;
      }

      const gParts = { adv: 0, l1: 0 };
      const gLoss = gOpt.minimize(() => {
        const fake = gen.forward(x);
        const l1 = l1Loss(fake, y);
        gParts.l1 = l1.dataSync()[0];
        if (cfg.lambda === 0) return l1;
        const loss = generatorLoss(disc.forward(x, fake), fake, y, cfg.lambda);
        gParts.adv = (loss.dataSync()[0] - (1 - cfg.lambda) * gParts.l1)
          / cfg.lambda;
        return loss;
      }, true, gVars)!;
      const gl = gLoss.dataSync()[0];
      gLoss.dispose();
      if (!Number.isFinite(gl) || !Number.isFinite(gParts.l1)) {
        throw new Error(`training diverged at epoch ${epoch} (non-finite loss)`);
      }
      sums.adv += gParts.adv;
      sums.l1 += gParts.l1;
      sums.n += 1;
      x.dispose();
      y.dispose();
    }
    const v = valLoss(gen, valPairs, scale, cfg.batchSize);
    curve.push({
      epoch,
      lAdv: sums.adv / sums.n,
      lL1: sums.l1 / sums.n,
      lR: sums.real / sums.n,
      lF: sums.fake / sums.n,
      valL1: v,
    });
    if (verbose) {
      console.log(`  epoch ${epoch}: l1=${(sums.l1 / sums.n).toFixed(5)} `
        + `val=${v.toFixed(5)} lr=${lr.toExponential(2)}`);
    }
    const score = Number.isNaN(v) ? sums.l1 / sums.n : v;
    if (score < bestVal) {
      bestVal = score;
      best = gStore.snapshot();
    }
  }
  if (best) gStore.restore(best);
  dStore.dispose();
  return { generator: gen, config: cfg, inputScale: scale, curve, segmentIndex };
}

export function trainOSNet(manifest: Manifest, cfg: TrainConfig,
                           verbose = false): Bundle {
  const train = loadSplit(manifest, 'train');
  const val = loadSplit(manifest, 'val');
  if (!train.length) throw new Error('manifest has no train split');
  return trainPairs(train, val, cfg, null, verbose);
}

export function trainMNetO(manifest: Manifest, cfg: TrainConfig,
                           verbose = false): Bundle[] {
  const T = segmentCount(manifest);
  if (T === 0) throw new Error('manifest has no per-segment pairs');
  const bundles: Bundle[] = [];
  for (let seg = 0; seg < T; seg++) {
    const train = loadSplit(manifest, 'train', seg);
    const val = loadSplit(manifest, 'val', seg);
    if (!train.length) throw new Error(`segment ${seg} missing from train split`);
    if (verbose) console.log(`segment model ${seg}:`);
    bundles.push(trainPairs(train, val,
                            { ...cfg, seed: cfg.seed + 1000 * seg }, seg,
                            verbose));
  }
  return bundles;
}

// ---------------------------------------------------------------------------
// bundle persistence: directory with config.json, weights.bin, curve.csv

export function saveBundle(dir: string, bundle: Bundle): void {
  fs.mkdirSync(dir, { recursive: true });
  fs.writeFileSync(path.join(dir, 'config.json'), JSON.stringify({
    train: bundle.config,
    inputScale: bundle.inputScale,
    segmentIndex: bundle.segmentIndex,
  }, null, 2));
  fs.writeFileSync(path.join(dir, 'weights.bin'),
                   bundle.generator.store.serialize());
  const rows = bundle.curve.map((c) =>
    `${c.epoch},${c.lAdv},${c.lL1},${c.lR},${c.lF},${c.valL1}`);
  fs.writeFileSync(path.join(dir, 'curve.csv'),
                   'epoch,l_adv,l_l1,l_r,l_f,val_l1\n' + rows.join('\n') + '\n');
}

export function loadBundle(dir: string): Bundle {
  const meta = JSON.parse(fs.readFileSync(path.join(dir, 'config.json'), 'utf8'));
  const store = new ParamStore(meta.train.seed ?? 0);
  const gen = buildGenerator(store, meta.train.net);
  store.loadSerialized(fs.readFileSync(path.join(dir, 'weights.bin')));
  const curve: EpochLog[] = [];
  const curvePath = path.join(dir, 'curve.csv');
  if (fs.existsSync(curvePath)) {
    for (const line of fs.readFileSync(curvePath, 'utf8').split('\n').slice(1)) {
      if (!line) continue;
      const [epoch, lAdv, lL1, lR, lF, valL1] = line.split(',').map(Number);
      curve.push({ epoch, lAdv, lL1, lR, lF, valL1 });
    }
  }
  return {
    generator: gen,
    config: meta.train,
    inputScale: meta.inputScale,
    curve,
    segmentIndex: meta.segmentIndex,
  };
}
