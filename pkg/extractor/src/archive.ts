/**
 * The interchange archive consumed by the featanom package: a directory
 * holding `manifest.json` (format_version 1, dataset metadata, one record
 * per sample with per-level shapes and byte offsets) and `tensors.bin`
 * (raw little-endian float32, channel-major then row-major H, W).
 */
import { mkdirSync, readFileSync, writeFileSync } from 'node:fs'
import { join } from 'node:path'

export const FORMAT_VERSION = 1
export const MANIFEST_NAME = 'manifest.json'
export const TENSORS_NAME = 'tensors.bin'

export interface LevelTensor {
  name: string
  /** [channels, height, width] */
  shape: [number, number, number]
  /** channel-major, then row-major over height and width */
  data: Float32Array
}

export interface Sample {
  imageId: string
  label: 'normal' | 'anomalous'
  defectType: string
  category: string
  levels: LevelTensor[]
}

interface LevelRecord {
  name: string
  shape: number[]
  offset: number
  nbytes: number
}

export interface Manifest {
  format_version: number
  metadata: Record<string, unknown>
  levels: { name: string; shape: number[] }[]
  samples: {
    image_id: string
    label: string
    defect_type: string
    category: string
    levels: LevelRecord[]
  }[]
}

function littleEndianBytes(data: Float32Array): Buffer {
  const probe = new Uint8Array(new Float32Array([1]).buffer)
  if (probe[3] === 0) {
    // platform is little-endian: the typed array's backing buffer is already on-disk order
    return Buffer.from(data.buffer, data.byteOffset, data.byteLength)
  }
  const out = Buffer.allocUnsafe(data.length * 4)
  for (let i = 0; i < data.length; i++) out.writeFloatLE(data[i], i * 4)
  return out
}

export function writeArchive(dir: string, samples: Sample[], metadata: Record<string, unknown>): void {
  mkdirSync(dir, { recursive: true })
  const chunks: Buffer[] = []
  let offset = 0
  const records: Manifest['samples'] = []

  for (const sample of samples) {
    const levelRecords: LevelRecord[] = []
    for (const level of sample.levels) {
      const [c, h, w] = level.shape
      if (level.data.length !== c * h * w) {
        throw new Error(`sample ${sample.imageId} level ${level.name}: ${level.data.length} values vs shape ${level.shape}`)
      }
      for (let i = 0; i < level.data.length; i++) {
        if (!Number.isFinite(level.data[i])) {
          throw new Error(`sample ${sample.imageId} level ${level.name}: non-finite value at index ${i}`)
        }
      }
      const bytes = littleEndianBytes(level.data)
      chunks.push(bytes)
      levelRecords.push({ name: level.name, shape: [c, h, w], offset, nbytes: bytes.length })
      offset += bytes.length
    }
    records.push({
      image_id: sample.imageId,
      label: sample.label,
      defect_type: sample.defectType,
      category: sample.category,
      levels: levelRecords,
    })
  }

  const levelDecl =
    samples.length > 0
      ? samples[0].levels.map((l) => ({ name: l.name, shape: [...l.shape] }))
      : []
  const manifest: Manifest = {
    format_version: FORMAT_VERSION,
    metadata,
    levels: levelDecl,
    samples: records,
  }
  writeFileSync(join(dir, TENSORS_NAME), Buffer.concat(chunks))
  writeFileSync(join(dir, MANIFEST_NAME), JSON.stringify(manifest, null, 2) + '\n')
}

export interface LoadedArchive {
  manifest: Manifest
  tensors: Map<string, Map<string, { shape: number[]; data: Float32Array }>>
}

/** Reader used for validation and tests; the Python package is the
 * production consumer. */
export function readArchive(dir: string): LoadedArchive {
  const manifest = JSON.parse(readFileSync(join(dir, MANIFEST_NAME), 'utf-8')) as Manifest
  if (manifest.format_version !== FORMAT_VERSION) {
    throw new Error(`unsupported format_version ${manifest.format_version}`)
  }
  const blob = readFileSync(join(dir, TENSORS_NAME))
  const tensors = new Map<string, Map<string, { shape: number[]; data: Float32Array }>>()
  for (const sample of manifest.samples) {
    const levels = new Map<string, { shape: number[]; data: Float32Array }>()
    for (const level of sample.levels) {
      const count = level.nbytes / 4
      const data = new Float32Array(count)
      for (let i = 0; i < count; i++) data[i] = blob.readFloatLE(level.offset + i * 4)
      levels.set(level.name, { shape: level.shape, data })
    }
    tensors.set(sample.image_id, levels)
  }
  return { manifest, tensors }
}

/** Checks the invariants the consumer will enforce: declared shapes match
 * every sample, byte ranges are consistent, all values finite. */
export function validateArchive(dir: string): void {
  const { manifest, tensors } = readArchive(dir)
  const declared = new Map(manifest.levels.map((l) => [l.name, l.shape.join('x')]))
  for (const sample of manifest.samples) {
    for (const level of sample.levels) {
      const key = level.shape.join('x')
      if (declared.size > 0 && declared.get(level.name) !== key) {
        throw new Error(`sample ${sample.image_id} level ${level.name} shape ${key} vs declared ${declared.get(level.name)}`)
      }
      const expected = level.shape.reduce((a, b) => a * b, 1) * 4
      if (level.nbytes !== expected) {
        throw new Error(`sample ${sample.image_id} level ${level.name}: ${level.nbytes} bytes vs shape needs ${expected}`)
      }
      const tensor = tensors.get(sample.image_id)?.get(level.name)
      if (!tensor) throw new Error(`missing tensor for ${sample.image_id}/${level.name}`)
      for (const v of tensor.data) {
        if (!Number.isFinite(v)) throw new Error(`non-finite value in ${sample.image_id}/${level.name}`)
      }
    }
  }
}
