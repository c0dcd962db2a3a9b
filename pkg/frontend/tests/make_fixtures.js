/**
 * Generates test fixtures by driving the simulation package's CLI (the
 * cross-component interface): two tiny corpora plus one known container.
 * Idempotent: skips anything already present.
 */
const { execFileSync } = require('child_process');
const fs = require('fs');
const path = require('path');

const FIX = path.join(__dirname, 'fixtures');
fs.mkdirSync(FIX, { recursive: true });

const GEOM = {
  geometry: {
    T: 5, delta_theta_deg: 36.5, theta0_deg: 0.0,
    base: { l_mm: 15.0, h_mm: 40.0, traj_len_mm: 20.0, n_src: 101,
            det_cells: 321, det_cell_size_mm: 0.26, det_offset_mm: 0.0 },
  },
  grid: { n: 32, pixel_size_mm: 6.0 / 32 },
  phantom: { name: 'random', support_radius_mm: 2.0, n_ellipses: 3 },
  dataset: { dense_n_src: 101 },
};

function run(args) {
  execFileSync('lctlab', args, { stdio: ['ignore', 'ignore', 'inherit'] });
}

function dataset(kind, out, extraGeom = {}) {
  const target = path.join(FIX, out);
  if (fs.existsSync(path.join(target, 'manifest.ndjson'))) return;
  fs.rmSync(target, { recursive: true, force: true });
  const cfg = JSON.parse(JSON.stringify(GEOM));
  Object.assign(cfg.geometry, extraGeom);
  const cfgPath = path.join(FIX, `cfg-${out}.json`);
  fs.writeFileSync(cfgPath, JSON.stringify(cfg));
  run(['dataset', '--config', cfgPath, '--kind', kind, '--count', '12',
       '--seed', '7', '--out', target]);
  console.log(`fixture ${out} written`);
}

dataset('osnet', 'ds-osnet');
dataset('mneto', 'ds-mneto', { T: 3, delta_theta_deg: 61.0 });

// a known container + expected values, written through the simulation side
const known = path.join(FIX, 'known.lct');
if (!fs.existsSync(known)) {
  execFileSync('python3', ['-c', `
import json
import numpy as np
from lctlab.dataset import write_array
rng = np.random.Generator(np.random.Philox(123))
arr = rng.standard_normal((17, 23))
write_array(${JSON.stringify(known)}, arr, {"geometry_digest": "fixture"})
expected = {
  "rows": 17, "cols": 23,
  "samples": {"0,0": arr[0, 0], "16,22": arr[16, 22], "8,11": arr[8, 11]},
  "sum": float(arr.sum()),
}
with open(${JSON.stringify(known + '.expected.json')}, "w") as f:
    json.dump(expected, f)
`]);
  console.log('fixture known.lct written');
}
