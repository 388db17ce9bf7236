#!/usr/bin/env node
// Regenerates data/mnist/ from the `mnist` npm package (10,000 genuine MNIST
// digits stored as [0,1] floats). Recovers the original 8-bit pixels, applies
// a fixed seeded shuffle, and writes IDX files: 8,000 train / 2,000 test.
//
// Usage:
//   npm install mnist@1.1.0
//   node scripts/fetch_mnist.js [--src <dir-with-digit-jsons>] [--out <dir>]

'use strict';

const fs = require('fs');
const path = require('path');

function parseArgs(argv) {
  const args = { src: null, out: path.join(__dirname, '..', 'data', 'mnist') };
  for (let i = 2; i < argv.length; i++) {
    if (argv[i] === '--src') args.src = argv[++i];
    else if (argv[i] === '--out') args.out = argv[++i];
    else throw new Error(`unknown argument: ${argv[i]}`);
  }
  if (!args.src) {
    // default: resolve the installed package relative to cwd, then this script
    for (const base of [process.cwd(), path.join(__dirname, '..')]) {
      const candidate = path.join(base, 'node_modules', 'mnist', 'src', 'digits');
      if (fs.existsSync(candidate)) {
        args.src = candidate;
        break;
      }
    }
  }
  if (!args.src) throw new Error('mnist package not found; run `npm install mnist@1.1.0` or pass --src');
  return args;
}

// Deterministic 32-bit PRNG (mulberry32) so the split is reproducible.
function mulberry32(seed) {
  let a = seed >>> 0;
  return function () {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function shuffle(arr, rand) {
  for (let i = arr.length - 1; i > 0; i--) {
    const j = Math.floor(rand() * (i + 1));
    [arr[i], arr[j]] = [arr[j], arr[i]];
  }
}

function writeIdxImages(file, images) {
  const n = images.length;
  const buf = Buffer.alloc(16 + n * 784);
  buf.writeUInt32BE(0x00000803, 0);
  buf.writeUInt32BE(n, 4);
  buf.writeUInt32BE(28, 8);
  buf.writeUInt32BE(28, 12);
  for (let i = 0; i < n; i++) images[i].copy(buf, 16 + i * 784);
  fs.writeFileSync(file, buf);
}

function writeIdxLabels(file, labels) {
  const n = labels.length;
  const buf = Buffer.alloc(8 + n);
  buf.writeUInt32BE(0x00000801, 0);
  buf.writeUInt32BE(n, 4);
  for (let i = 0; i < n; i++) buf.writeUInt8(labels[i], 8 + i);
  fs.writeFileSync(file, buf);
}

function main() {
  const args = parseArgs(process.argv);
  const records = [];
  for (let digit = 0; digit <= 9; digit++) {
    const raw = JSON.parse(fs.readFileSync(path.join(args.src, `${digit}.json`), 'utf8'));
    for (const flat of chunk784(raw.data)) {
      const bytes = Buffer.alloc(784);
      for (let i = 0; i < 784; i++) {
        // the package stores round(pixel/255, 3); invert back to the byte
        bytes[i] = Math.round(flat[i] * 255);
      }
      records.push({ label: digit, bytes });
    }
  }
  if (records.length !== 10000) {
    throw new Error(`expected 10000 images, found ${records.length}`);
  }

  shuffle(records, mulberry32(0x6e6c6b6d)); // "nlkm"
  const test = records.slice(0, 2000);
  const train = records.slice(2000);

  fs.mkdirSync(args.out, { recursive: true });
  writeIdxImages(path.join(args.out, 'train-images-idx3-ubyte'), train.map((r) => r.bytes));
  writeIdxLabels(path.join(args.out, 'train-labels-idx1-ubyte'), train.map((r) => r.label));
  writeIdxImages(path.join(args.out, 'test-images-idx3-ubyte'), test.map((r) => r.bytes));
  writeIdxLabels(path.join(args.out, 'test-labels-idx1-ubyte'), test.map((r) => r.label));

  const count = (xs) => xs.reduce((acc, r) => ((acc[r.label] = (acc[r.label] || 0) + 1), acc), {});
  console.log(`wrote ${train.length} train / ${test.length} test images to ${args.out}`);
  console.log('train per class:', count(train));
  console.log('test per class:', count(test));
}

function* chunk784(flat) {
  if (flat.length % 784 !== 0) throw new Error('digit file is not a multiple of 784 values');
  for (let off = 0; off < flat.length; off += 784) {
    yield flat.slice(off, off + 784);
  }
}

main();
