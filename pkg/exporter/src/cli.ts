#!/usr/bin/env node
/**
 * kcc-export: encode an image folder into a KCC1 container.
 *
 *   kcc-export --images DIR --out FILE [--encoder toy-vit]
 *              [--masks auto|DIR] [--size 112] [--patch 8] [--dim 32]
 *              [--classes listing.json]
 */

import { parseArgs } from 'node:util'
import { makeEncoder } from './encoder.js'
import { runExport } from './export.js'

function main(): number {
  const { values } = parseArgs({
    options: {
      images: { type: 'string' },
      out: { type: 'string' },
      encoder: { type: 'string', default: 'toy-vit' },
      masks: { type: 'string', default: 'auto' },
      size: { type: 'string', default: '112' },
      patch: { type: 'string', default: '8' },
      dim: { type: 'string', default: '32' },
      classes: { type: 'string' },
      help: { type: 'boolean', default: false },
    },
  })

  if (values.help || !values.images || !values.out) {
    console.log(
      'usage: kcc-export --images DIR --out FILE [--encoder toy-vit] ' +
        '[--masks auto|DIR] [--size 112] [--patch 8] [--dim 32] ' +
        '[--classes listing.json]',
    )
    return values.help ? 0 : 2
  }

  const size = parseInt(values.size!, 10)
  const patch = parseInt(values.patch!, 10)
  const dim = parseInt(values.dim!, 10)
  if (size % patch !== 0) {
    console.error(`error: --size ${size} must be divisible by --patch ${patch}`)
    return 2
  }

  try {
    const result = runExport({
      imageRoot: values.images!,
      encoder: makeEncoder(values.encoder!, patch, dim),
      targetSize: size,
      maskSource: values.masks!,
      classListing: values.classes,
      outPath: values.out!,
    })
    console.log(
      `wrote ${values.out}: ${result.written} images, ` +
        `${result.classNames.length} classes, encoder ${result.encoderId}` +
        (result.skipped.length > 0 ? `, ${result.skipped.length} skipped` : ''),
    )
    return 0
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`)
    return 1
  }
}

process.exitCode = main()
