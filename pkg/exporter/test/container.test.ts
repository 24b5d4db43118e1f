import { describe, expect, it } from 'vitest'
import {
  canonicalJson,
  readContainer,
  writeContainer,
  TokenGridData,
} from '../src/container.js'

function tinyGrid(id = 'a'): TokenGridData {
  return {
    imageId: id,
    gridH: 2,
    gridW: 2,
    dim: 3,
    tokens: new Float32Array(12).fill(0.5),
    cls: new Float32Array([1, 2, 3]),
    origH: 16,
    origW: 16,
    patchSize: 8,
  }
}

describe('canonicalJson', () => {
  it('sorts keys at every depth', () => {
    expect(canonicalJson({ b: 1, a: { d: 2, c: [{ z: 1, y: 2 }] } })).toBe(
      '{"a":{"c":[{"y":2,"z":1}],"d":2},"b":1}',
    )
  })
})

describe('writeContainer', () => {
  it('round-trips through the reader', () => {
    const mask = {
      imageId: 'a',
      height: 16,
      width: 16,
      values: new Uint8Array(256).fill(1),
    }
    const buf = writeContainer([tinyGrid()], [mask], {
      classNames: ['finch'],
      imageClasses: { a: 0 },
    })
    const { manifest, arrays } = readContainer(buf)
    expect(manifest.format_version).toBe(1)
    expect(manifest.class_names).toEqual(['finch'])
    expect(manifest.grids).toHaveLength(1)
    expect(Array.from(arrays.get('cls:a') as Float32Array)).toEqual([1, 2, 3])
    expect((arrays.get('mask:a') as Uint8Array).every((v) => v === 1)).toBe(true)
  })

  it('rejects empty datasets and bad masks', () => {
    expect(() => writeContainer([], [])).toThrow(/empty dataset/)
    const badMask = {
      imageId: 'a',
      height: 16,
      width: 16,
      values: new Uint8Array(256).fill(2),
    }
    expect(() => writeContainer([tinyGrid()], [badMask])).toThrow(/0 or 1/)
    const orphan = { ...badMask, imageId: 'zzz', values: new Uint8Array(256) }
    expect(() => writeContainer([tinyGrid()], [orphan])).toThrow(/no matching/)
  })

  it('rejects non-finite tokens', () => {
    const grid = tinyGrid()
    grid.tokens[5] = Number.NaN
    expect(() => writeContainer([grid], [])).toThrow(/non-finite/)
  })

  it('detects payload corruption through entry checksums', () => {
    const buf = writeContainer([tinyGrid()], [])
    const manifestLen = buf.readUInt32LE(4)
    const corrupted = Buffer.from(buf)
    corrupted[12 + manifestLen + 3] ^= 0xff
    expect(() => readContainer(corrupted)).toThrow(/checksum mismatch in entry/)
  })
})
