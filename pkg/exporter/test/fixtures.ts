/** Deterministic toy image folders for exporter tests. */

import { mkdirSync, writeFileSync } from 'node:fs'
import { join } from 'node:path'
import { encodePng, RgbImage } from '../src/image.js'

function blobImage(
  size: number,
  cx: number,
  cy: number,
  r: number,
  color: [number, number, number],
): RgbImage {
  const data = new Uint8Array(size * size * 3)
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const inside = (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r
      const base = (y * size + x) * 3
      if (inside) {
        data[base] = color[0]
        data[base + 1] = color[1]
        data[base + 2] = color[2]
      } else {
        data[base] = data[base + 1] = data[base + 2] = 30
      }
    }
  }
  return { width: size, height: size, data }
}

function blobMask(size: number, cx: number, cy: number, r: number): RgbImage {
  const data = new Uint8Array(size * size * 3)
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const inside = (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r
      const v = inside ? 255 : 0
      const base = (y * size + x) * 3
      data[base] = data[base + 1] = data[base + 2] = v
    }
  }
  return { width: size, height: size, data }
}

export interface ToyFolder {
  imageRoot: string
  maskRoot: string
  files: string[]
}

/** 10 images in 2 class subfolders, with matching mask files. */
export function makeToyFolder(base: string, size = 96): ToyFolder {
  const imageRoot = join(base, 'images')
  const maskRoot = join(base, 'masks')
  const classes: Array<[string, [number, number, number]]> = [
    ['finch', [200, 80, 60]],
    ['wren', [60, 120, 210]],
  ]
  const files: string[] = []
  for (const [className, color] of classes) {
    mkdirSync(join(imageRoot, className), { recursive: true })
    mkdirSync(join(maskRoot, className), { recursive: true })
    for (let i = 0; i < 5; i++) {
      const cx = size / 2 + (i - 2) * 6
      const cy = size / 2 + (i % 2 === 0 ? -5 : 5)
      const r = size / 4 + i
      const rel = join(className, `img${i}.png`)
      writeFileSync(join(imageRoot, rel), encodePng(blobImage(size, cx, cy, r, color)))
      writeFileSync(join(maskRoot, rel), encodePng(blobMask(size, cx, cy, r)))
      files.push(rel)
    }
  }
  return { imageRoot, maskRoot, files }
}
