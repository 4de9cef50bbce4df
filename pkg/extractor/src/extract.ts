/**
 * Directory extraction: walk the input tree, decode each PNG, resize to
 * the backbone's input resolution (with an optional centered crop
 * first), run the tap model, and write one archive in the interchange
 * format. Inference runs single-threaded on the pure-JS CPU backend so
 * two runs over the same inputs produce bit-identical tensors.
 *
 * Labels follow the directory convention: a parent folder named "good"
 * (or no defect folder at all, e.g. a flat staging directory of
 * augmented normals) means normal; any other parent folder is the
 * defect type and the sample is anomalous.
 */
import * as tf from '@tensorflow/tfjs'
import { readFileSync, readdirSync, statSync } from 'node:fs'
import { join, relative, sep } from 'node:path'

import { Sample, writeArchive } from './archive.js'
import { ExtractorSpec, fingerprintArtifact, loadModelArtifact, tapModel } from './backbone.js'
import { centerCrop, decodePng, normalize, resizeBilinear } from './image.js'

export interface ExtractOptions {
  inputDir: string
  outDir: string
  modelDir: string
  spec: ExtractorSpec
  /** optional centered crop applied before the resize */
  crop?: number
  category?: string
}

export function listPngs(dir: string): string[] {
  const found: string[] = []
  const walk = (current: string) => {
    for (const entry of readdirSync(current).sort()) {
      const path = join(current, entry)
      if (statSync(path).isDirectory()) walk(path)
      else if (entry.toLowerCase().endsWith('.png')) found.push(path)
    }
  }
  walk(dir)
  return found
}

export function labelFor(relPath: string): { label: 'normal' | 'anomalous'; defectType: string } {
  const parts = relPath.split('/')
  const parent = parts.length >= 2 ? parts[parts.length - 2] : 'good'
  if (parent === 'good') return { label: 'normal', defectType: 'good' }
  return { label: 'anomalous', defectType: parent }
}

export function imageIdFor(path: string, root: string): string {
  const rel = relative(root, path).split(sep).join('/')
  return rel.replace(/\.png$/i, '')
}

/** channel-major (C, H, W) from a [1, H, W, C] tap output */
function toChw(values: Float32Array, h: number, w: number, c: number): Float32Array {
  const out = new Float32Array(c * h * w)
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      const base = (y * w + x) * c
      for (let ch = 0; ch < c; ch++) {
        out[ch * h * w + y * w + x] = values[base + ch]
      }
    }
  }
  return out
}

export interface ExtractResult {
  count: number
  shapes: Record<string, number[]>
  weightsFingerprint: string
}

export async function extractDirectory(options: ExtractOptions): Promise<ExtractResult> {
  const { spec } = options
  await tf.setBackend('cpu')
  const backbone = await loadModelArtifact(options.modelDir)
  const model = tapModel(backbone, spec.taps)
  const fingerprint = fingerprintArtifact(options.modelDir)

  const files = listPngs(options.inputDir)
  if (files.length === 0) throw new Error(`no PNG images under ${options.inputDir}`)

  const samples: Sample[] = []
  const shapes: Record<string, number[]> = {}
  for (const file of files) {
    let image = decodePng(readFileSync(file))
    if (options.crop) image = centerCrop(image, options.crop)
    const hwc = normalize(
      resizeBilinear(image, spec.inputResolution),
      spec.normalization.mean,
      spec.normalization.std,
    )

    const levels = tf.tidy(() => {
      const input = tf.tensor4d(hwc, [1, spec.inputResolution, spec.inputResolution, 3])
      const outputs = model.predict(input)
      return (Array.isArray(outputs) ? outputs : [outputs]).map((t) => {
        const [, h, w, c] = t.shape as [number, number, number, number]
        const data = t.dataSync() as Float32Array
        return { h, w, c, data: data.slice() }
      })
    })

    const relPath = imageIdFor(file, options.inputDir)
    const { label, defectType } = labelFor(relPath)
    samples.push({
      imageId: relPath,
      label,
      defectType,
      category: options.category ?? '',
      levels: spec.taps.map((name, i) => {
        const { h, w, c, data } = levels[i]
        shapes[name] = [c, h, w]
        return { name, shape: [c, h, w] as [number, number, number], data: toChw(data, h, w, c) }
      }),
    })
  }

  writeArchive(options.outDir, samples, {
    category: options.category ?? '',
    extractor: {
      backbone: spec.backbone,
      input_resolution: spec.inputResolution,
      taps: spec.taps,
      normalization: spec.normalization,
      weights_sha256: fingerprint,
    },
    input_resolution: spec.inputResolution,
  })
  return { count: samples.length, shapes, weightsFingerprint: fingerprint }
}
