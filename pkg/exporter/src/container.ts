/**
 * KCC1 container writer (plus a reader used by the test suite).
 *
 * Layout, all integers little-endian:
 *   bytes 0..3   magic "KCC1"
 *   bytes 4..7   uint32 manifest byte length
 *   bytes 8..11  uint32 CRC-32 of the manifest bytes
 *   bytes 12..   UTF-8 JSON manifest (keys sorted recursively)
 *   afterwards   payload: raw float32 (row-major) and uint8 entries,
 *                offsets relative to the payload start, CRC-32 per entry.
 */

import { crc32 } from 'node:zlib'

export const MAGIC = 'KCC1'
export const FORMAT_VERSION = 1

export interface TokenGridData {
  imageId: string
  gridH: number
  gridW: number
  dim: number
  tokens: Float32Array // length gridH*gridW*dim, row-major
  cls?: Float32Array // length dim
  origH: number
  origW: number
  patchSize: number
}

export interface MaskData {
  imageId: string
  height: number
  width: number
  values: Uint8Array // length height*width, strictly 0/1
}

export interface DatasetMeta {
  classNames?: string[]
  imageClasses?: Record<string, number>
  imagePaths?: Record<string, string>
  extra?: Record<string, unknown>
}

interface Entry {
  name: string
  shape: number[]
  element_type: 'f32' | 'u8'
  byte_offset: number
  byte_length: number
  crc32: number
}

/** JSON.stringify with object keys sorted at every depth. */
export function canonicalJson(value: unknown): string {
  const normalize = (v: unknown): unknown => {
    if (Array.isArray(v)) return v.map(normalize)
    if (v !== null && typeof v === 'object') {
      const out: Record<string, unknown> = {}
      for (const key of Object.keys(v as Record<string, unknown>).sort()) {
        out[key] = normalize((v as Record<string, unknown>)[key])
      }
      return out
    }
    return v
  }
  return JSON.stringify(normalize(value))
}

function float32Bytes(arr: Float32Array): Buffer {
  const buf = Buffer.alloc(arr.length * 4)
  for (let i = 0; i < arr.length; i++) buf.writeFloatLE(arr[i], i * 4)
  return buf
}

export function writeContainer(
  grids: TokenGridData[],
  masks: MaskData[],
  meta: DatasetMeta = {},
): Buffer {
  if (grids.length === 0) throw new Error('empty dataset: need at least one token grid')
  const gridIds = new Set<string>()
  for (const g of grids) {
    if (gridIds.has(g.imageId)) throw new Error(`duplicate image id ${g.imageId}`)
    gridIds.add(g.imageId)
    if (g.tokens.length !== g.gridH * g.gridW * g.dim) {
      throw new Error(`${g.imageId}: token array length does not match grid shape`)
    }
    for (const v of g.tokens) {
      if (!Number.isFinite(v)) throw new Error(`${g.imageId}: non-finite token`)
    }
  }
  for (const m of masks) {
    if (!gridIds.has(m.imageId)) {
      throw new Error(`mask ${m.imageId} has no matching token grid`)
    }
    if (m.values.length !== m.height * m.width) {
      throw new Error(`${m.imageId}: mask length does not match its shape`)
    }
    for (const v of m.values) {
      if (v !== 0 && v !== 1) throw new Error(`${m.imageId}: mask values must be 0 or 1`)
    }
  }

  const entries: Entry[] = []
  const blobs: Buffer[] = []
  let offset = 0
  const push = (name: string, shape: number[], type: 'f32' | 'u8', bytes: Buffer) => {
    entries.push({
      name,
      shape,
      element_type: type,
      byte_offset: offset,
      byte_length: bytes.length,
      crc32: crc32(bytes) >>> 0,
    })
    blobs.push(bytes)
    offset += bytes.length
  }

  const gridMeta = []
  for (const g of grids) {
    push(`tokens:${g.imageId}`, [g.gridH, g.gridW, g.dim], 'f32', float32Bytes(g.tokens))
    if (g.cls) push(`cls:${g.imageId}`, [g.dim], 'f32', float32Bytes(g.cls))
    gridMeta.push({
      image_id: g.imageId,
      grid_h: g.gridH,
      grid_w: g.gridW,
      dim: g.dim,
      orig_h: g.origH,
      orig_w: g.origW,
      patch_size: g.patchSize,
      has_cls: Boolean(g.cls),
    })
  }
  const maskMeta = []
  for (const m of masks) {
    push(`mask:${m.imageId}`, [m.height, m.width], 'u8', Buffer.from(m.values))
    maskMeta.push({ image_id: m.imageId, height: m.height, width: m.width })
  }

  const manifest = {
    kind: 'dataset',
    format_version: FORMAT_VERSION,
    entries,
    grids: gridMeta,
    masks: maskMeta,
    class_names: meta.classNames ?? [],
    image_classes: meta.imageClasses ?? {},
    image_paths: meta.imagePaths ?? {},
    extra: meta.extra ?? {},
  }
  const manifestBytes = Buffer.from(canonicalJson(manifest), 'utf-8')

  const header = Buffer.alloc(12)
  header.write(MAGIC, 0, 'ascii')
  header.writeUInt32LE(manifestBytes.length, 4)
  header.writeUInt32LE(crc32(manifestBytes) >>> 0, 8)
  return Buffer.concat([header, manifestBytes, ...blobs])
}

export interface ReadResult {
  manifest: Record<string, any>
  arrays: Map<string, Float32Array | Uint8Array>
}

/** Verify and parse a container produced by writeContainer (test support). */
export function readContainer(data: Buffer): ReadResult {
  if (data.length < 12) throw new Error('file shorter than header')
  if (data.toString('ascii', 0, 4) !== MAGIC) throw new Error('bad magic bytes')
  const manifestLen = data.readUInt32LE(4)
  const manifestCrc = data.readUInt32LE(8)
  const manifestBytes = data.subarray(12, 12 + manifestLen)
  if (manifestBytes.length !== manifestLen) throw new Error('file ends inside manifest')
  if ((crc32(manifestBytes) >>> 0) !== manifestCrc) {
    throw new Error('manifest checksum mismatch')
  }
  const manifest = JSON.parse(manifestBytes.toString('utf-8'))
  if (manifest.format_version !== FORMAT_VERSION) {
    throw new Error(`unknown format_version ${manifest.format_version}`)
  }
  const payload = data.subarray(12 + manifestLen)
  const arrays = new Map<string, Float32Array | Uint8Array>()
  for (const ent of manifest.entries as Entry[]) {
    const blob = payload.subarray(ent.byte_offset, ent.byte_offset + ent.byte_length)
    if (blob.length !== ent.byte_length) {
      throw new Error(`entry ${ent.name} extends past end of file`)
    }
    if ((crc32(blob) >>> 0) !== ent.crc32) {
      throw new Error(`checksum mismatch in entry ${ent.name}`)
    }
    if (ent.element_type === 'f32') {
      const out = new Float32Array(ent.byte_length / 4)
      for (let i = 0; i < out.length; i++) out[i] = blob.readFloatLE(i * 4)
      arrays.set(ent.name, out)
    } else {
      arrays.set(ent.name, new Uint8Array(blob))
    }
  }
  return { manifest, arrays }
}
