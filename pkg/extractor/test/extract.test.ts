import { createHash } from 'node:crypto'
import { mkdirSync, mkdtempSync, readFileSync, statSync, writeFileSync } from 'node:fs'
import { tmpdir } from 'node:os'
import { join } from 'node:path'
import { beforeAll, describe, expect, it } from 'vitest'

import { readArchive, validateArchive } from '../src/archive'
import { DEFAULT_SPEC, buildTestBackbone, saveModelArtifact } from '../src/backbone'
import { extractDirectory, imageIdFor, labelFor } from '../src/extract'
import { exportFixture, writeTestCards } from '../src/fixture'
import { encodePng } from '../src/image'

const SMALL_SPEC = { ...DEFAULT_SPEC, backbone: 'test-backbone', inputResolution: 96 }

let modelDir: string

function tmp(prefix: string): string {
  return mkdtempSync(join(tmpdir(), prefix))
}

function sha256(path: string): string {
  return createHash('sha256').update(readFileSync(path)).digest('hex')
}

beforeAll(async () => {
  modelDir = tmp('featmap-model-')
  await saveModelArtifact(buildTestBackbone(SMALL_SPEC.inputResolution, 7), modelDir)
})

describe('labels and ids', () => {
  it('derives labels from the parent directory', () => {
    expect(labelFor('train/good/000')).toEqual({ label: 'normal', defectType: 'good' })
    expect(labelFor('test/crack/003')).toEqual({ label: 'anomalous', defectType: 'crack' })
    expect(labelFor('000__aug2')).toEqual({ label: 'normal', defectType: 'good' })
  })

  it('image ids are extension-stripped posix relative paths', () => {
    expect(imageIdFor('/data/cat/train/good/7.png', '/data/cat')).toBe('train/good/7')
  })
})

describe('extraction', () => {
  it('writes a valid archive with tree-derived labels and tap shapes', async () => {
    const input = tmp('featmap-tree-')
    mkdirSync(join(input, 'train', 'good'), { recursive: true })
    mkdirSync(join(input, 'test', 'dent'), { recursive: true })
    const cards = tmp('featmap-cards-')
    const names = writeTestCards(cards, 3)
    writeFileSync(join(input, 'train', 'good', '0.png'), readFileSync(join(cards, names[0])))
    writeFileSync(join(input, 'train', 'good', '1.png'), readFileSync(join(cards, names[1])))
    writeFileSync(join(input, 'test', 'dent', '0.png'), readFileSync(join(cards, names[2])))

    const out = tmp('featmap-out-')
    const result = await extractDirectory({
      inputDir: input,
      outDir: out,
      modelDir,
      spec: SMALL_SPEC,
      category: 'widget',
    })
    expect(result.count).toBe(3)
    expect(result.shapes.block4).toEqual([112, 6, 6]) // 96 / 16
    expect(result.shapes.block6).toEqual([272, 3, 3]) // 96 / 32
    expect(result.shapes.block7).toEqual([448, 3, 3])

    validateArchive(out)
    const { manifest } = readArchive(out)
    const byId = new Map(manifest.samples.map((s) => [s.image_id, s]))
    expect(byId.get('train/good/0')!.label).toBe('normal')
    expect(byId.get('test/dent/0')!.label).toBe('anomalous')
    expect(byId.get('test/dent/0')!.defect_type).toBe('dent')
    const extractor = manifest.metadata.extractor as Record<string, unknown>
    expect(extractor.weights_sha256).toMatch(/^[0-9a-f]{64}$/)
    expect(extractor.taps).toEqual(['block4', 'block6', 'block7'])
  })

  it('is bit-identical across two runs', async () => {
    const input = tmp('featmap-rep-')
    writeTestCards(input, 2)
    const out1 = tmp('featmap-rep-out1-')
    const out2 = tmp('featmap-rep-out2-')
    await extractDirectory({ inputDir: input, outDir: out1, modelDir, spec: SMALL_SPEC })
    await extractDirectory({ inputDir: input, outDir: out2, modelDir, spec: SMALL_SPEC })
    expect(sha256(join(out1, 'tensors.bin'))).toBe(sha256(join(out2, 'tensors.bin')))
    expect(readFileSync(join(out1, 'manifest.json'), 'utf-8')).toBe(readFileSync(join(out2, 'manifest.json'), 'utf-8'))
  })

  it('optional center crop changes the features', async () => {
    const input = tmp('featmap-crop-')
    writeTestCards(input, 1)
    const plain = tmp('featmap-crop-out1-')
    const cropped = tmp('featmap-crop-out2-')
    await extractDirectory({ inputDir: input, outDir: plain, modelDir, spec: SMALL_SPEC })
    await extractDirectory({ inputDir: input, outDir: cropped, modelDir, spec: SMALL_SPEC, crop: 64 })
    expect(sha256(join(plain, 'tensors.bin'))).not.toBe(sha256(join(cropped, 'tensors.bin')))
  })

  it('fails cleanly on an imageless directory', async () => {
    const input = tmp('featmap-empty-')
    await expect(
      extractDirectory({ inputDir: input, outDir: tmp('featmap-empty-out-'), modelDir, spec: SMALL_SPEC }),
    ).rejects.toThrow(/no PNG images/)
  })

  it('rejects a corrupt PNG', async () => {
    const input = tmp('featmap-bad-')
    writeFileSync(join(input, 'bad.png'), Buffer.from('not a png'))
    await expect(
      extractDirectory({ inputDir: input, outDir: tmp('featmap-bad-out-'), modelDir, spec: SMALL_SPEC }),
    ).rejects.toThrow()
  })
})

describe('fixture export', () => {
  it('produces five samples, validates, and stays small', async () => {
    const out = tmp('featmap-fixture-')
    const result = await exportFixture(modelDir, out, SMALL_SPEC, tmp('featmap-fixture-cards-'))
    expect(result.count).toBe(5)
    validateArchive(out)
    const size = statSync(join(out, 'tensors.bin')).size + statSync(join(out, 'manifest.json')).size
    expect(size).toBeLessThan(5 * 1024 * 1024)
  })

  it('test cards are deterministic', () => {
    const a = tmp('featmap-cards-a-')
    const b = tmp('featmap-cards-b-')
    writeTestCards(a, 5)
    writeTestCards(b, 5)
    for (let i = 0; i < 5; i++) {
      expect(sha256(join(a, `card${i}.png`))).toBe(sha256(join(b, `card${i}.png`)))
    }
  })
})
