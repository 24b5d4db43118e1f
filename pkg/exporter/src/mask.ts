/**
 * Foreground masks: load provided mask files, or derive one from the
 * encoder's per-patch saliency map (Otsu threshold, then keep the largest
 * 4-connected component, then expand patch cells to pixels).
 */

import { existsSync } from 'node:fs'
import { join, parse } from 'node:path'
import { loadImage, resizeNearestMask } from './image.js'

/** Otsu's threshold over arbitrary nonnegative values (256-bin histogram). */
export function otsuThreshold(values: Float64Array): number {
  let min = Infinity
  let max = -Infinity
  for (const v of values) {
    if (v < min) min = v
    if (v > max) max = v
  }
  if (!(max > min)) return min // constant map: threshold degenerate
  const bins = 256
  const hist = new Array<number>(bins).fill(0)
  const scale = (bins - 1) / (max - min)
  for (const v of values) hist[Math.min(bins - 1, Math.floor((v - min) * scale))]++

  const total = values.length
  let sumAll = 0
  for (let i = 0; i < bins; i++) sumAll += i * hist[i]
  let wB = 0
  let sumB = 0
  let bestVar = -1
  let bestBin = 0
  for (let i = 0; i < bins; i++) {
    wB += hist[i]
    if (wB === 0) continue
    const wF = total - wB
    if (wF === 0) break
    sumB += i * hist[i]
    const mB = sumB / wB
    const mF = (sumAll - sumB) / wF
    const between = wB * wF * (mB - mF) * (mB - mF)
    if (between > bestVar) {
      bestVar = between
      bestBin = i
    }
  }
  // The cut separates bins <= bestBin from the rest; values below the
  // returned threshold (right bin edge) belong to the background class.
  return min + (bestBin + 1) / scale
}

/** Keep only the largest 4-connected component of a binary grid. */
export function largestComponent(mask: Uint8Array, h: number, w: number): Uint8Array {
  const labels = new Int32Array(h * w).fill(-1)
  let best: number[] = []
  let nextLabel = 0
  for (let start = 0; start < h * w; start++) {
    if (mask[start] !== 1 || labels[start] !== -1) continue
    const stack = [start]
    const members: number[] = []
    labels[start] = nextLabel
    while (stack.length > 0) {
      const idx = stack.pop()!
      members.push(idx)
      const y = Math.floor(idx / w)
      const x = idx % w
      const neighbors = [
        y > 0 ? idx - w : -1,
        y < h - 1 ? idx + w : -1,
        x > 0 ? idx - 1 : -1,
        x < w - 1 ? idx + 1 : -1,
      ]
      for (const n of neighbors) {
        if (n >= 0 && mask[n] === 1 && labels[n] === -1) {
          labels[n] = nextLabel
          stack.push(n)
        }
      }
    }
    if (members.length > best.length) best = members
    nextLabel++
  }
  const out = new Uint8Array(h * w)
  for (const idx of best) out[idx] = 1
  return out
}

/**
 * Attention-style fallback: threshold saliency at Otsu, keep the largest
 * component, expand each patch cell to patchSize x patchSize pixels.
 * Always nonempty: a degenerate threshold falls back to the most salient
 * patch.
 */
export function saliencyMask(
  saliency: Float64Array,
  gridH: number,
  gridW: number,
  patchSize: number,
): Uint8Array {
  const t = otsuThreshold(saliency)
  let tokenMask: Uint8Array = new Uint8Array(gridH * gridW)
  let count = 0
  for (let i = 0; i < saliency.length; i++) {
    if (saliency[i] > t) {
      tokenMask[i] = 1
      count++
    }
  }
  if (count === 0) {
    let bestIdx = 0
    for (let i = 1; i < saliency.length; i++) {
      if (saliency[i] > saliency[bestIdx]) bestIdx = i
    }
    tokenMask[bestIdx] = 1
  }
  tokenMask = largestComponent(tokenMask, gridH, gridW)

  const outH = gridH * patchSize
  const outW = gridW * patchSize
  const out = new Uint8Array(outH * outW)
  for (let y = 0; y < outH; y++) {
    const gy = Math.floor(y / patchSize)
    for (let x = 0; x < outW; x++) {
      out[y * outW + x] = tokenMask[gy * gridW + Math.floor(x / patchSize)]
    }
  }
  return out
}

const MASK_EXTENSIONS = ['.png', '.pgm', '.ppm']

/** Locate and binarize a provided mask file for `imageRelPath`, if any. */
export function loadProvidedMask(
  maskDir: string,
  imageRelPath: string,
  outH: number,
  outW: number,
): Uint8Array | null {
  const parsed = parse(imageRelPath)
  const stem = join(parsed.dir, parsed.name)
  for (const ext of MASK_EXTENSIONS) {
    const candidate = join(maskDir, stem + ext)
    if (!existsSync(candidate)) continue
    const img = loadImage(candidate)
    const binary = new Uint8Array(img.width * img.height)
    for (let i = 0; i < binary.length; i++) {
      const lum = img.data[i * 3] + img.data[i * 3 + 1] + img.data[i * 3 + 2]
      binary[i] = lum > 3 * 127 ? 1 : 0
    }
    if (img.height === outH && img.width === outW) return binary
    return resizeNearestMask(binary, img.height, img.width, outH, outW)
  }
  return null
}
