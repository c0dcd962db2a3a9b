/** BLAKE2b (RFC 7693) with configurable digest length.
 *
 * The array containers end with an 8-byte BLAKE2b digest; that is a
 * parameterized instance (outlen baked into h[0]), not a truncation of
 * blake2b-512, so node:crypto cannot produce it.
 */

const IV = new BigUint64Array([
  0x6a09e667f3bcc908n, 0xbb67ae8584caa73bn, 0x3c6ef372fe94f82bn,
  0xa54ff53a5f1d36f1n, 0x510e527fade682d1n, 0x9b05688c2b3e6c1fn,
  0x1f83d9abfb41bd6bn, 0x5be0cd19137e2179n,
]);

const SIGMA = [
  [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15],
  [14, 10, 4, 8, 9, 15, 13, 6, 1, 12, 0, 2, 11, 7, 5, 3],
  [11, 8, 12, 0, 5, 2, 15, 13, 10, 14, 3, 6, 7, 1, 9, 4],
  [7, 9, 3, 1, 13, 12, 11, 14, 2, 6, 5, 10, 4, 0, 15, 8],
  [9, 0, 5, 7, 2, 4, 10, 15, 14, 1, 11, 12, 6, 8, 3, 13],
  [2, 12, 6, 10, 0, 11, 8, 3, 4, 13, 7, 5, 15, 14, 1, 9],
  [12, 5, 1, 15, 14, 13, 4, 10, 0, 7, 6, 3, 9, 2, 8, 11],
  [13, 11, 7, 14, 12, 1, 3, 9, 5, 0, 15, 4, 8, 6, 2, 10],
  [6, 15, 14, 9, 11, 3, 0, 8, 12, 2, 13, 7, 1, 4, 10, 5],
  [10, 2, 8, 4, 7, 6, 1, 5, 15, 11, 9, 14, 3, 12, 13, 0],
  [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15],
  [14, 10, 4, 8, 9, 15, 13, 6, 1, 12, 0, 2, 11, 7, 5, 3],
];

const MASK = (1n << 64n) - 1n;

function rotr(x: bigint, n: bigint): bigint {
  return ((x >> n) | (x << (64n - n))) & MASK;
}

function compress(h: BigUint64Array, block: DataView, t: bigint, last: boolean) {
  const v = new BigUint64Array(16);
  const m = new BigUint64Array(16);
  for (let i = 0; i < 8; i++) {
    v[i] = h[i];
    v[i + 8] = IV[i];
  }
  v[12] ^= t & MASK;
  v[13] ^= (t >> 64n) & MASK;
  if (last) v[14] ^= MASK;
  for (let i = 0; i < 16; i++) m[i] = block.getBigUint64(i * 8, true);

  const g = (r: number, a: number, b: number, c: number, d: number,
             x: number, y: number) => {
    v[a] = (v[a] + v[b] + m[SIGMA[r][x]]) & MASK;
    v[d] = rotr(v[d] ^ v[a], 32n);
    v[c] = (v[c] + v[d]) & MASK;
    v[b] = rotr(v[b] ^ v[c], 24n);
    v[a] = (v[a] + v[b] + m[SIGMA[r][y]]) & MASK;
    v[d] = rotr(v[d] ^ v[a], 16n);
    v[c] = (v[c] + v[d]) & MASK;
    v[b] = rotr(v[b] ^ v[c], 63n);
  };
  for (let r = 0; r < 12; r++) {
    g(r, 0, 4, 8, 12, 0, 1);
    g(r, 1, 5, 9, 13, 2, 3);
    g(r, 2, 6, 10, 14, 4, 5);
    g(r, 3, 7, 11, 15, 6, 7);
    g(r, 0, 5, 10, 15, 8, 9);
    g(r, 1, 6, 11, 12, 10, 11);
    g(r, 2, 7, 8, 13, 12, 13);
    g(r, 3, 4, 9, 14, 14, 15);
  }
  for (let i = 0; i < 8; i++) h[i] ^= v[i] ^ v[i + 8];
}

export function blake2b(data: Uint8Array, outlen = 8): Uint8Array {
  if (outlen < 1 || outlen > 64) throw new Error('outlen must be 1..64');
  const h = new BigUint64Array(IV);
  // parameter block: digest length | key length << 8 | fanout << 16 | depth << 24
  h[0] ^= BigInt(0x01010000 ^ outlen);

  const nBlocks = Math.max(1, Math.ceil(data.length / 128));
  let t = 0n;
  for (let i = 0; i < nBlocks; i++) {
    const last = i === nBlocks - 1;
    const chunk = data.subarray(i * 128, i * 128 + 128);
    t += BigInt(chunk.length);
    const block = new Uint8Array(128);
    block.set(chunk);
    compress(h, new DataView(block.buffer), t, last);
  }
  const out = new Uint8Array(64);
  const dv = new DataView(out.buffer);
  for (let i = 0; i < 8; i++) dv.setBigUint64(i * 8, h[i], true);
  return out.slice(0, outlen);
}
