/**
 * Backbone handling: loading a saved model artifact, building the
 * bundled test backbone, and wiring a multi-output "tap" model that
 * exposes the intermediate feature maps by layer name.
 *
 * The tap interface mirrors a 380-input EfficientNet-B4: at the default
 * resolution the `block4` tap has 112 channels at stride 16 and the
 * `block6` / `block7` taps have 272 / 448 channels at stride 32. Any
 * artifact whose graph exposes the configured tap names can be used;
 * the weights fingerprint recorded in every archive makes it explicit
 * which weights produced a dataset, so mixed-weights archives can be
 * rejected downstream.
 */
import * as tf from '@tensorflow/tfjs'
import { mkdirSync, readFileSync, writeFileSync } from 'node:fs'
import { join } from 'node:path'

import { sha256Hex } from './hash.js'

export interface ExtractorSpec {
  backbone: string
  inputResolution: number
  taps: string[]
  normalization: { mean: number[]; std: number[] }
}

export const DEFAULT_SPEC: ExtractorSpec = {
  backbone: 'efficientnet-b4',
  inputResolution: 380,
  taps: ['block4', 'block6', 'block7'],
  normalization: { mean: [0.485, 0.456, 0.406], std: [0.229, 0.224, 0.225] },
}

export const MODEL_JSON = 'model.json'
export const WEIGHTS_BIN = 'weights.bin'

/**
 * A compact convolutional stack with the same tap names, channel counts
 * and strides as the reference backbone, deterministically initialized
 * from a seed. It stands in where pretrained weights are not available
 * (tests, fixtures, offline environments); real weights are supplied as
 * a saved artifact instead.
 */
export function buildTestBackbone(resolution = DEFAULT_SPEC.inputResolution, seed = 7): tf.LayersModel {
  const input = tf.input({ shape: [resolution, resolution, 3], name: 'image' })
  const conv = (
    x: tf.SymbolicTensor,
    filters: number,
    kernel: number,
    stride: number,
    name: string,
  ): tf.SymbolicTensor =>
    tf.layers
      .conv2d({
        filters,
        kernelSize: kernel,
        strides: stride,
        padding: 'same',
        activation: 'relu',
        name,
        kernelInitializer: tf.initializers.glorotUniform({ seed: seed + filters }),
        biasInitializer: 'zeros',
      })
      .apply(x) as tf.SymbolicTensor

  let x = conv(input, 24, 3, 2, 'stem1') // /2
  x = conv(x, 32, 3, 2, 'stem2') // /4
  x = conv(x, 48, 3, 2, 'stem3') // /8
  const block4 = conv(x, 112, 3, 2, 'block4') // /16
  const block6 = conv(block4, 272, 3, 2, 'block6') // /32
  const block7 = conv(block6, 448, 1, 1, 'block7') // /32

  return tf.model({ inputs: input, outputs: block7, name: 'test-backbone' })
}

export async function saveModelArtifact(model: tf.LayersModel, dir: string): Promise<void> {
  mkdirSync(dir, { recursive: true })
  await model.save(
    tf.io.withSaveHandler(async (artifacts) => {
      const weightData = artifacts.weightData as ArrayBuffer
      writeFileSync(join(dir, WEIGHTS_BIN), Buffer.from(weightData))
      const header = {
        format: 'layers-model',
        modelTopology: artifacts.modelTopology,
        weightSpecs: artifacts.weightSpecs,
      }
      writeFileSync(join(dir, MODEL_JSON), JSON.stringify(header) + '\n')
      return {
        modelArtifactsInfo: {
          dateSaved: new Date(0),
          modelTopologyType: 'JSON',
        },
      }
    }),
  )
}

export async function loadModelArtifact(dir: string): Promise<tf.LayersModel> {
  const header = JSON.parse(readFileSync(join(dir, MODEL_JSON), 'utf-8'))
  const weights = readFileSync(join(dir, WEIGHTS_BIN))
  const weightData = weights.buffer.slice(weights.byteOffset, weights.byteOffset + weights.byteLength)
  return tf.loadLayersModel(
    tf.io.fromMemory({
      modelTopology: header.modelTopology,
      weightSpecs: header.weightSpecs,
      weightData,
    }),
  )
}

/** sha256 over weights and topology; recorded in every archive manifest. */
export function fingerprintArtifact(dir: string): string {
  return sha256Hex(readFileSync(join(dir, WEIGHTS_BIN)), readFileSync(join(dir, MODEL_JSON)))
}

/** Functional model returning the named intermediate outputs. */
export function tapModel(model: tf.LayersModel, taps: string[]): tf.LayersModel {
  const outputs = taps.map((name) => {
    const layer = model.getLayer(name)
    return layer.output as tf.SymbolicTensor
  })
  return tf.model({ inputs: model.inputs, outputs })
}
