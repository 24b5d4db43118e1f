/**
 * Export orchestration: walk an image folder, encode every image, attach
 * masks (provided directory or saliency fallback), and write one KCC1
 * container.  Class ids come from sorted subfolder names or an explicit
 * listing file; unreadable images are logged, skipped, and recorded in the
 * container's metadata.
 */

import { readFileSync, readdirSync, statSync, writeFileSync } from 'node:fs'
import { join, relative, sep } from 'node:path'
import { MaskData, TokenGridData, writeContainer } from './container.js'
import { Encoder } from './encoder.js'
import { loadImage, resizeBilinear } from './image.js'
import { loadProvidedMask, saliencyMask } from './mask.js'

export interface ExportJob {
  imageRoot: string
  encoder: Encoder
  targetSize: number // images are resized to targetSize x targetSize
  maskSource: 'auto' | string // 'auto' = saliency fallback, else mask directory
  classListing?: string // optional JSON file {relativePath: className}
  outPath: string
}

export interface ExportResult {
  written: number
  skipped: { file: string; reason: string }[]
  classNames: string[]
  encoderId: string
}

const IMAGE_EXTENSIONS = new Set(['.png', '.ppm', '.pgm'])

function listImages(root: string): string[] {
  const out: string[] = []
  const walk = (dir: string) => {
    for (const name of readdirSync(dir).sort()) {
      const full = join(dir, name)
      if (statSync(full).isDirectory()) {
        walk(full)
      } else {
        const dot = name.lastIndexOf('.')
        if (dot >= 0 && IMAGE_EXTENSIONS.has(name.slice(dot).toLowerCase())) {
          out.push(relative(root, full))
        }
      }
    }
  }
  walk(root)
  return out.sort()
}

function classOf(relPath: string, listing?: Record<string, string>): string | null {
  if (listing) return listing[relPath] ?? null
  const parts = relPath.split(sep)
  return parts.length > 1 ? parts[0] : null
}

export function runExport(job: ExportJob): ExportResult {
  const files = listImages(job.imageRoot)
  if (files.length === 0) throw new Error(`no images found under ${job.imageRoot}`)

  let listing: Record<string, string> | undefined
  if (job.classListing) {
    listing = JSON.parse(readFileSync(job.classListing, 'utf-8'))
  }

  // Deterministic dense ids from sorted class names.
  const classSet = new Set<string>()
  for (const f of files) {
    const c = classOf(f, listing)
    if (c !== null) classSet.add(c)
  }
  const classNames = [...classSet].sort()
  const classId = new Map(classNames.map((name, i) => [name, i]))

  const grids: TokenGridData[] = []
  const masks: MaskData[] = []
  const imageClasses: Record<string, number> = {}
  const imagePaths: Record<string, string> = {}
  const skipped: { file: string; reason: string }[] = []

  for (const file of files) {
    const imageId = file.split(sep).join('/').replace(/\.[^.]+$/, '')
    try {
      const raw = loadImage(join(job.imageRoot, file))
      const resized = resizeBilinear(raw, job.targetSize, job.targetSize)
      const enc = job.encoder.encode(resized)

      let maskValues: Uint8Array
      if (job.maskSource === 'auto') {
        maskValues = saliencyMask(
          enc.saliency, enc.gridH, enc.gridW, job.encoder.patchSize,
        )
      } else {
        const provided = loadProvidedMask(
          job.maskSource, file, job.targetSize, job.targetSize,
        )
        if (provided === null) {
          throw new Error('no mask file found')
        }
        maskValues = provided
      }

      grids.push({
        imageId,
        gridH: enc.gridH,
        gridW: enc.gridW,
        dim: enc.dim,
        tokens: enc.tokens,
        cls: enc.cls,
        origH: job.targetSize,
        origW: job.targetSize,
        patchSize: job.encoder.patchSize,
      })
      masks.push({
        imageId,
        height: job.targetSize,
        width: job.targetSize,
        values: maskValues,
      })
      const c = classOf(file, listing)
      if (c !== null) imageClasses[imageId] = classId.get(c)!
      imagePaths[imageId] = file.split(sep).join('/')
    } catch (err) {
      const reason = err instanceof Error ? err.message : String(err)
      console.error(`skip ${file}: ${reason}`)
      skipped.push({ file: file.split(sep).join('/'), reason })
    }
  }

  if (grids.length === 0) throw new Error('every image failed to export')

  const container = writeContainer(grids, masks, {
    classNames,
    imageClasses,
    imagePaths,
    extra: {
      encoder_id: job.encoder.id,
      target_size: job.targetSize,
      mask_source: job.maskSource === 'auto' ? 'attention-fallback' : 'provided',
      skips: skipped,
    },
  })
  writeFileSync(job.outPath, container)
  return { written: grids.length, skipped, classNames, encoderId: job.encoder.id }
}
