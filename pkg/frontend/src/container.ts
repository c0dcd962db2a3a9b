/** Reader/writer for the shared array-container files (`.lct`).
 *
 * Layout: magic "LCTARR1\n", LE uint32 header length, JSON header
 * {dtype: "f32"|"f64", shape: [rows, cols], order: "row-major",
 * byteorder: "little"}, raw payload, 8-byte BLAKE2b payload digest.
 */

import * as fs from 'fs';
import * as path from 'path';

import { blake2b } from './blake2b';

const MAGIC = Buffer.from('LCTARR1\n', 'ascii');

export interface ArrayImage {
  rows: number;
  cols: number;
  data: Float32Array; // row-major
}

export class ContainerError extends Error {}

export function readArray(file: string): ArrayImage {
  const blob = fs.readFileSync(file);
  if (!blob.subarray(0, 8).equals(MAGIC)) {
    throw new ContainerError(`${path.basename(file)}: bad magic`);
  }
  const hlen = blob.readUInt32LE(8);
  const header = JSON.parse(blob.subarray(12, 12 + hlen).toString('utf8'));
  const [rows, cols] = header.shape;
  const itemsize = header.dtype === 'f64' ? 8 : header.dtype === 'f32' ? 4 : 0;
  if (!itemsize) {
    throw new ContainerError(`${path.basename(file)}: unknown dtype ${header.dtype}`);
  }
  const payload = blob.subarray(12 + hlen, blob.length - 8);
  if (payload.length !== rows * cols * itemsize) {
    throw new ContainerError(`${path.basename(file)}: payload/shape mismatch`);
  }
  const digest = Buffer.from(blake2b(new Uint8Array(payload), 8));
  if (!digest.equals(blob.subarray(blob.length - 8))) {
    throw new ContainerError(`${path.basename(file)}: checksum mismatch`);
  }
  const copy = Buffer.from(payload); // aligned copy for the typed-array view
  const data = new Float32Array(rows * cols);
  if (header.dtype === 'f64') {
    const src = new Float64Array(copy.buffer, copy.byteOffset, rows * cols);
    data.set(src);
  } else {
    data.set(new Float32Array(copy.buffer, copy.byteOffset, rows * cols));
  }
  return { rows, cols, data };
}

export function writeArray(file: string, img: ArrayImage,
                           sidecar?: Record<string, unknown>): void {
  const header = Buffer.from(JSON.stringify({
    byteorder: 'little',
    dtype: 'f32',
    order: 'row-major',
    shape: [img.rows, img.cols],
  }), 'utf8');
  const payload = Buffer.from(new Float32Array(img.data).buffer);
  const hlen = Buffer.alloc(4);
  hlen.writeUInt32LE(header.length);
  const digest = Buffer.from(blake2b(new Uint8Array(payload), 8));
  const tmp = file + '.tmp';
  fs.writeFileSync(tmp, Buffer.concat([MAGIC, hlen, header, payload, digest]));
  fs.renameSync(tmp, file);
  if (sidecar !== undefined) {
    const sc = file.replace(/\.lct$/, '.json');
    fs.writeFileSync(sc, JSON.stringify(sidecar, Object.keys(sidecar).sort()));
  }
}
