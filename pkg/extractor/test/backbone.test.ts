import * as tf from '@tensorflow/tfjs'
import { mkdtempSync, readFileSync } from 'node:fs'
import { tmpdir } from 'node:os'
import { join } from 'node:path'
import { describe, expect, it } from 'vitest'

import {
  DEFAULT_SPEC,
  buildTestBackbone,
  fingerprintArtifact,
  loadModelArtifact,
  saveModelArtifact,
  tapModel,
} from '../src/backbone'

function tmp(): string {
  return mkdtempSync(join(tmpdir(), 'featmap-backbone-'))
}

describe('test backbone', () => {
  it('exposes the reference tap interface at 380x380', async () => {
    await tf.setBackend('cpu')
    const model = buildTestBackbone(380, 7)
    const taps = tapModel(model, DEFAULT_SPEC.taps)
    const outputs = taps.predict(tf.zeros([1, 380, 380, 3])) as tf.Tensor[]
    expect(outputs[0].shape).toEqual([1, 24, 24, 112]) // stride 16, 112 channels
    expect(outputs[1].shape).toEqual([1, 12, 12, 272]) // stride 32
    expect(outputs[2].shape).toEqual([1, 12, 12, 448])
    outputs.forEach((t) => t.dispose())
  })

  it('is deterministic for a fixed seed', async () => {
    const dirA = tmp()
    const dirB = tmp()
    await saveModelArtifact(buildTestBackbone(96, 7), dirA)
    await saveModelArtifact(buildTestBackbone(96, 7), dirB)
    expect(readFileSync(join(dirA, 'weights.bin')).equals(readFileSync(join(dirB, 'weights.bin')))).toBe(true)
    expect(fingerprintArtifact(dirA)).toBe(fingerprintArtifact(dirB))

    const dirC = tmp()
    await saveModelArtifact(buildTestBackbone(96, 8), dirC)
    expect(fingerprintArtifact(dirC)).not.toBe(fingerprintArtifact(dirA))
  })

  it('save/load round-trips the forward pass', async () => {
    await tf.setBackend('cpu')
    const dir = tmp()
    const model = buildTestBackbone(96, 3)
    await saveModelArtifact(model, dir)
    const loaded = await loadModelArtifact(dir)

    const input = tf.randomUniform([1, 96, 96, 3], 0, 1, 'float32', 11)
    const a = (tapModel(model, ['block7']).predict(input) as tf.Tensor).dataSync()
    const b = (tapModel(loaded, ['block7']).predict(input) as tf.Tensor).dataSync()
    expect(b.length).toBe(a.length)
    for (let i = 0; i < a.length; i++) {
      if (a[i] !== b[i]) throw new Error(`forward pass differs at ${i}: ${a[i]} vs ${b[i]}`)
    }
  })

  it('rejects unknown tap names', () => {
    const model = buildTestBackbone(96, 7)
    expect(() => tapModel(model, ['nope'])).toThrow()
  })
})
