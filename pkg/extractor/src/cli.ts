#!/usr/bin/env node
/**
 * featmap-extract <command> [flags]
 *
 * Commands:
 *   make-backbone  --out DIR [--resolution 380] [--seed 7]
 *       Build and save the deterministic test backbone artifact.
 *   extract        --input DIR --out DIR --model DIR
 *                  [--resolution 380] [--crop N] [--category NAME]
 *       Run the backbone over every PNG under --input and write one
 *       interchange archive.
 *   export-fixture --model DIR --out DIR [--staging DIR]
 *       Generate the five bundled test cards and extract them into a
 *       small fixture archive.
 */
import { mkdtempSync } from 'node:fs'
import { tmpdir } from 'node:os'
import { join } from 'node:path'

import { DEFAULT_SPEC, buildTestBackbone, saveModelArtifact } from './backbone.js'
import { extractDirectory } from './extract.js'
import { exportFixture } from './fixture.js'

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>()
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i]
    if (!arg.startsWith('--')) throw new Error(`unexpected argument ${arg}`)
    const value = argv[i + 1]
    if (value === undefined || value.startsWith('--')) throw new Error(`flag ${arg} needs a value`)
    flags.set(arg.slice(2), value)
    i++
  }
  return flags
}

function required(flags: Map<string, string>, name: string): string {
  const value = flags.get(name)
  if (!value) throw new Error(`--${name} is required`)
  return value
}

async function main(): Promise<number> {
  const [command, ...rest] = process.argv.slice(2)
  if (!command) {
    console.error('usage: featmap-extract <make-backbone|extract|export-fixture> [flags]')
    return 1
  }
  const flags = parseFlags(rest)
  const resolution = Number(flags.get('resolution') ?? DEFAULT_SPEC.inputResolution)
  const spec = { ...DEFAULT_SPEC, inputResolution: resolution }

  if (command === 'make-backbone') {
    const out = required(flags, 'out')
    const seed = Number(flags.get('seed') ?? 7)
    spec.backbone = 'test-backbone'
    const model = buildTestBackbone(resolution, seed)
    await saveModelArtifact(model, out)
    console.log(`saved test backbone (seed ${seed}, input ${resolution}) to ${out}`)
    return 0
  }
  if (command === 'extract') {
    if (flags.has('backbone')) spec.backbone = flags.get('backbone')!
    const result = await extractDirectory({
      inputDir: required(flags, 'input'),
      outDir: required(flags, 'out'),
      modelDir: required(flags, 'model'),
      spec,
      crop: flags.has('crop') ? Number(flags.get('crop')) : undefined,
      category: flags.get('category'),
    })
    console.log(
      `extracted ${result.count} images; tap shapes ${JSON.stringify(result.shapes)}; ` +
        `weights ${result.weightsFingerprint.slice(0, 12)}`,
    )
    return 0
  }
  if (command === 'export-fixture') {
    spec.backbone = 'test-backbone'
    const staging = flags.get('staging') ?? mkdtempSync(join(tmpdir(), 'featmap-cards-'))
    const result = await exportFixture(required(flags, 'model'), required(flags, 'out'), spec, staging)
    console.log(`fixture: ${result.count} images, shapes ${JSON.stringify(result.shapes)}`)
    return 0
  }
  console.error(`unknown command ${command}`)
  return 1
}

main().then(
  (code) => process.exit(code),
  (error) => {
    console.error(`error: ${error instanceof Error ? error.message : error}`)
    process.exit(1)
  },
)
