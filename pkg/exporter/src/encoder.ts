/**
 * Patch encoders.  The built-in encoder is a deterministic seeded
 * random-projection over image patches: it needs no downloaded weights,
 * reproduces bit-identically across runs, and exposes the same geometry a
 * transformer backbone would (patch grid, token dim, class vector, and a
 * per-patch saliency map used for fallback foreground masks).  Real
 * encoders can be plugged in behind the same interface.
 */

import { crc32 } from 'node:zlib'
import type { RgbImage } from './image.js'

export interface EncodedImage {
  gridH: number
  gridW: number
  dim: number
  tokens: Float32Array // gridH*gridW*dim
  cls: Float32Array // dim
  saliency: Float64Array // gridH*gridW, higher = more distinctive patch
}

export interface Encoder {
  /** Stable identifier: name plus a hash prefix of the weights. */
  id: string
  patchSize: number
  encode(img: RgbImage): EncodedImage
}

/** Deterministic 32-bit PRNG (mulberry32). */
function mulberry32(seed: number): () => number {
  let a = seed >>> 0
  return () => {
    a = (a + 0x6d2b79f5) >>> 0
    let t = a
    t = Math.imul(t ^ (t >>> 15), t | 1)
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61)
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296
  }
}

function seedFromString(s: string): number {
  return crc32(Buffer.from(s, 'utf-8')) >>> 0
}

export class RandomProjectionEncoder implements Encoder {
  readonly id: string
  readonly patchSize: number
  readonly dim: number
  private readonly weights: Float64Array // dim x (3*patch*patch)

  constructor(name = 'toy-vit', patchSize = 8, dim = 32) {
    this.patchSize = patchSize
    this.dim = dim
    const inputLen = 3 * patchSize * patchSize
    const rand = mulberry32(seedFromString(`${name}-p${patchSize}-d${dim}`))
    this.weights = new Float64Array(dim * inputLen)
    const scale = 1.0 / Math.sqrt(inputLen)
    for (let i = 0; i < this.weights.length; i++) {
      this.weights[i] = (rand() * 2 - 1) * scale
    }
    const weightBytes = Buffer.from(new Float64Array(this.weights).buffer)
    const hash = (crc32(weightBytes) >>> 0).toString(16).padStart(8, '0')
    this.id = `${name}-p${patchSize}-d${dim}@${hash}`
  }

  encode(img: RgbImage): EncodedImage {
    const p = this.patchSize
    if (img.height % p !== 0 || img.width % p !== 0) {
      throw new Error(
        `image ${img.height}x${img.width} not divisible into ${p}x${p} patches`,
      )
    }
    const gridH = img.height / p
    const gridW = img.width / p
    const inputLen = 3 * p * p
    const tokens = new Float32Array(gridH * gridW * this.dim)
    const patch = new Float64Array(inputLen)

    for (let gy = 0; gy < gridH; gy++) {
      for (let gx = 0; gx < gridW; gx++) {
        let k = 0
        for (let py = 0; py < p; py++) {
          const row = (gy * p + py) * img.width
          for (let px = 0; px < p; px++) {
            const base = (row + gx * p + px) * 3
            patch[k++] = img.data[base] / 255 - 0.5
            patch[k++] = img.data[base + 1] / 255 - 0.5
            patch[k++] = img.data[base + 2] / 255 - 0.5
          }
        }
        const tokenBase = (gy * gridW + gx) * this.dim
        for (let d = 0; d < this.dim; d++) {
          let acc = 0
          const wBase = d * inputLen
          for (let j = 0; j < inputLen; j++) acc += this.weights[wBase + j] * patch[j]
          tokens[tokenBase + d] = Math.tanh(acc)
        }
      }
    }

    const nTokens = gridH * gridW
    const mean = new Float64Array(this.dim)
    for (let t = 0; t < nTokens; t++) {
      for (let d = 0; d < this.dim; d++) mean[d] += tokens[t * this.dim + d]
    }
    for (let d = 0; d < this.dim; d++) mean[d] /= nTokens

    const cls = new Float32Array(this.dim)
    for (let d = 0; d < this.dim; d++) cls[d] = mean[d]

    // Saliency: distance of each token from the mean token.  Distinctive
    // (object-like) patches stand out from the dominant background.
    const saliency = new Float64Array(nTokens)
    for (let t = 0; t < nTokens; t++) {
      let acc = 0
      for (let d = 0; d < this.dim; d++) {
        const diff = tokens[t * this.dim + d] - mean[d]
        acc += diff * diff
      }
      saliency[t] = Math.sqrt(acc)
    }
    return { gridH, gridW, dim: this.dim, tokens, cls, saliency }
  }
}

export function makeEncoder(name: string, patchSize: number, dim: number): Encoder {
  if (name === 'toy-vit') return new RandomProjectionEncoder(name, patchSize, dim)
  throw new Error(
    `unknown encoder ${name}; built-in: toy-vit (plug real encoders in via the Encoder interface)`,
  )
}
