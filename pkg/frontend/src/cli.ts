/** Command line: train / eval / infer on corpora from the simulation side. */

import * as fs from 'fs';
import * as path from 'path';

import yargs from 'yargs';
import { hideBin } from 'yargs/helpers';

import { readArray, writeArray } from './container';
import { loadPair, loadSplit, psnrOf, unpad } from './data';
import { inferAndOverlay, runGenerator } from './infer';
import { filterEntries, readManifest } from './manifest';
import { makeConfig, PresetName } from './presets';
import { Bundle, loadBundle, saveBundle, trainMNetO, trainOSNet } from './train';

function sideOf(manifestPath: string): number {
  const m = readManifest(manifestPath);
  if (!m.entries.length) throw new Error('empty manifest');
  return loadPair(m, m.entries[0]).input.rows;
}

async function cmdTrain(argv: any): Promise<void> {
  const m = readManifest(argv.manifest);
  const side = sideOf(argv.manifest);
  const cfg = makeConfig(argv.preset as PresetName, side,
                         argv.generator as 'st' | 'plain');
  if (argv.epochs !== undefined) cfg.epochs = argv.epochs;
  if (argv.batch !== undefined) cfg.batchSize = argv.batch;
  if (argv.lambda !== undefined) cfg.lambda = argv.lambda;
  cfg.seed = argv.seed ?? 0;
  const kind = argv.kind ?? (m.entries[0].pairKind === 'mneto' ? 'mneto' : 'osnet');
  if (kind === 'mneto') {
    const bundles = trainMNetO(m, cfg, true);
    for (const b of bundles) {
      saveBundle(path.join(argv.out, `seg${b.segmentIndex}`), b);
    }
    console.log(`saved ${bundles.length} segment bundles under ${argv.out}`);
  } else {
    const bundle = trainOSNet(m, cfg, true);
    saveBundle(argv.out, bundle);
    console.log(`saved bundle under ${argv.out}`);
  }
}

function evalBundle(bundle: Bundle, manifestPath: string, split: any,
                    segment: number | null): { psnrGen: number; psnrInput: number } {
  const m = readManifest(manifestPath);
  const pairs = loadSplit(m, split, segment ?? undefined);
  if (!pairs.length) throw new Error(`no ${split} pairs`);
  let sGen = 0;
  let sInp = 0;
  for (const p of pairs) {
    const out = runGenerator(bundle, p.input);
    let range = 0;
    for (const v of p.label.data) range = Math.max(range, v);
    if (range === 0) range = 1;
    sGen += psnrOf(out.data, p.label.data, range);
    sInp += psnrOf(p.input.data, p.label.data, range);
  }
  return { psnrGen: sGen / pairs.length, psnrInput: sInp / pairs.length };
}

async function cmdEval(argv: any): Promise<void> {
  const bundle = loadBundle(argv.bundle);
  const r = evalBundle(bundle, argv.manifest, argv.split, bundle.segmentIndex);
  const doc = {
    split: argv.split,
    psnr_generated_db: r.psnrGen,
    psnr_raw_input_db: r.psnrInput,
  };
  console.log(JSON.stringify(doc, null, 2));
  if (argv.out) {
    fs.mkdirSync(argv.out, { recursive: true });
    fs.writeFileSync(path.join(argv.out, 'eval.json'), JSON.stringify(doc));
  }
}

async function cmdInfer(argv: any): Promise<void> {
  fs.mkdirSync(argv.out, { recursive: true });
  const inputs: string[] = argv.inputs;
  if (argv.bundles) {
    // per-segment bundles: one input per segment, outputs summed
    const dirs = fs.readdirSync(argv.bundles)
      .filter((d) => d.startsWith('seg')).sort();
    if (dirs.length !== inputs.length) {
      throw new Error(`${dirs.length} bundles vs ${inputs.length} inputs`);
    }
    const pairs = dirs.map((d, i) => ({
      bundle: loadBundle(path.join(argv.bundles, d)),
      input: readArray(inputs[i]),
    }));
    const side = argv.targetSide ?? Math.round(pairs[0].input.rows / 1.5);
    const img = inferAndOverlay(pairs, side);
    writeArray(path.join(argv.out, 'overlay.lct'), img);
    console.log(`wrote ${path.join(argv.out, 'overlay.lct')}`);
  } else {
    const bundle = loadBundle(argv.bundle);
    for (const f of inputs) {
      const out = runGenerator(bundle, readArray(f));
      const name = path.basename(f).replace(/\.lct$/, '.out.lct');
      writeArray(path.join(argv.out, name), out);
      console.log(`wrote ${path.join(argv.out, name)}`);
    }
  }
}

export function main(args: string[]): Promise<unknown> {
  return Promise.resolve(yargs(args)
    .command('train', 'train on a dataset manifest', (y) => y
      .option('manifest', { type: 'string', demandOption: true })
      .option('out', { type: 'string', demandOption: true })
      .option('kind', { choices: ['osnet', 'mneto'] as const })
      .option('preset', { choices: ['paper', 'toy', 'micro'] as const,
                          default: 'toy' })
      .option('generator', { choices: ['st', 'plain'] as const, default: 'st' })
      .option('epochs', { type: 'number' })
      .option('batch', { type: 'number' })
      .option('lambda', { type: 'number' })
      .option('seed', { type: 'number', default: 0 })
      .option('deterministic', { type: 'boolean', default: true,
                                 describe: 'seeded init/shuffles (always on; '
                                           + 'flag kept for workflow parity)' }),
      cmdTrain)
    .command('eval', 'held-out metrics for a bundle', (y) => y
      .option('manifest', { type: 'string', demandOption: true })
      .option('bundle', { type: 'string', demandOption: true })
      .option('split', { choices: ['val', 'test', 'train'] as const,
                         default: 'test' })
      .option('out', { type: 'string' }),
      cmdEval)
    .command('infer', 'run bundles on container images', (y) => y
      .option('bundle', { type: 'string' })
      .option('bundles', { type: 'string',
                           describe: 'directory of per-segment segN bundles' })
      .option('inputs', { type: 'string', array: true, demandOption: true })
      .option('out', { type: 'string', demandOption: true })
      .option('target-side', { type: 'number' }),
      cmdInfer)
    .demandCommand(1)
    .strict()
    .fail((msg, err) => {
      console.error(`error: ${msg ?? err?.message}`);
      process.exit(err ? 1 : 2);
    })
    .parse());
}

if (require.main === module) {
  main(hideBin(process.argv)).catch((e) => {
    console.error(`error: ${e.message}`);
    process.exit(1);
  });
}
