/**
 * Image loading (PNG via pngjs, binary PPM/PGM natively) and resizing.
 * Pixels are kept as flat RGB uint8, row-major.
 */

import { readFileSync } from 'node:fs'
import { PNG } from 'pngjs'

export interface RgbImage {
  width: number
  height: number
  data: Uint8Array // length width*height*3
}

function decodePng(bytes: Buffer): RgbImage {
  const png = PNG.sync.read(bytes)
  const out = new Uint8Array(png.width * png.height * 3)
  for (let i = 0; i < png.width * png.height; i++) {
    out[i * 3] = png.data[i * 4]
    out[i * 3 + 1] = png.data[i * 4 + 1]
    out[i * 3 + 2] = png.data[i * 4 + 2]
  }
  return { width: png.width, height: png.height, data: out }
}

/** Binary netpbm: P6 (RGB) and P5 (gray), 8-bit maxval only. */
function decodeNetpbm(bytes: Buffer): RgbImage {
  const magic = bytes.toString('ascii', 0, 2)
  if (magic !== 'P6' && magic !== 'P5') throw new Error(`unsupported netpbm ${magic}`)
  let pos = 2
  const fields: number[] = []
  while (fields.length < 3) {
    while (pos < bytes.length && /\s/.test(String.fromCharCode(bytes[pos]))) pos++
    if (bytes[pos] === 0x23) { // '#' comment
      while (pos < bytes.length && bytes[pos] !== 0x0a) pos++
      continue
    }
    let start = pos
    while (pos < bytes.length && !/\s/.test(String.fromCharCode(bytes[pos]))) pos++
    fields.push(parseInt(bytes.toString('ascii', start, pos), 10))
  }
  pos++ // single whitespace after maxval
  const [width, height, maxval] = fields
  if (maxval !== 255) throw new Error('only 8-bit netpbm supported')
  const out = new Uint8Array(width * height * 3)
  if (magic === 'P6') {
    out.set(bytes.subarray(pos, pos + width * height * 3))
  } else {
    for (let i = 0; i < width * height; i++) {
      const v = bytes[pos + i]
      out[i * 3] = out[i * 3 + 1] = out[i * 3 + 2] = v
    }
  }
  return { width, height, data: out }
}

export function loadImage(path: string): RgbImage {
  const bytes = readFileSync(path)
  if (bytes.length >= 8 && bytes[0] === 0x89 && bytes.toString('ascii', 1, 4) === 'PNG') {
    return decodePng(bytes)
  }
  if (bytes[0] === 0x50) return decodeNetpbm(bytes) // 'P'
  throw new Error(`${path}: unsupported image format`)
}

/** Bilinear resize (align-corners) to an exact target size. */
export function resizeBilinear(img: RgbImage, outH: number, outW: number): RgbImage {
  const { width: inW, height: inH, data } = img
  const out = new Uint8Array(outW * outH * 3)
  const coord = (i: number, nOut: number, nIn: number) =>
    nOut === 1 ? (nIn - 1) / 2 : (i * (nIn - 1)) / (nOut - 1)
  for (let y = 0; y < outH; y++) {
    const fy = coord(y, outH, inH)
    const y0 = Math.floor(fy)
    const y1 = Math.min(y0 + 1, inH - 1)
    const wy = fy - y0
    for (let x = 0; x < outW; x++) {
      const fx = coord(x, outW, inW)
      const x0 = Math.floor(fx)
      const x1 = Math.min(x0 + 1, inW - 1)
      const wx = fx - x0
      for (let c = 0; c < 3; c++) {
        const v00 = data[(y0 * inW + x0) * 3 + c]
        const v01 = data[(y0 * inW + x1) * 3 + c]
        const v10 = data[(y1 * inW + x0) * 3 + c]
        const v11 = data[(y1 * inW + x1) * 3 + c]
        const top = v00 * (1 - wx) + v01 * wx
        const bot = v10 * (1 - wx) + v11 * wx
        out[(y * outW + x) * 3 + c] = Math.round(top * (1 - wy) + bot * wy)
      }
    }
  }
  return { width: outW, height: outH, data: out }
}

/** Nearest-neighbor resize of a single-channel binary map. */
export function resizeNearestMask(
  values: Uint8Array, inH: number, inW: number, outH: number, outW: number,
): Uint8Array {
  const out = new Uint8Array(outH * outW)
  const coord = (i: number, nOut: number, nIn: number) =>
    nOut === 1 ? (nIn - 1) / 2 : (i * (nIn - 1)) / (nOut - 1)
  for (let y = 0; y < outH; y++) {
    const sy = Math.min(inH - 1, Math.round(coord(y, outH, inH)))
    for (let x = 0; x < outW; x++) {
      const sx = Math.min(inW - 1, Math.round(coord(x, outW, inW)))
      out[y * outW + x] = values[sy * inW + sx]
    }
  }
  return out
}

export function encodePng(img: RgbImage): Buffer {
  const png = new PNG({ width: img.width, height: img.height })
  for (let i = 0; i < img.width * img.height; i++) {
    png.data[i * 4] = img.data[i * 3]
    png.data[i * 4 + 1] = img.data[i * 3 + 1]
    png.data[i * 4 + 2] = img.data[i * 3 + 2]
    png.data[i * 4 + 3] = 255
  }
  return PNG.sync.write(png)
}
