/**
 * Fixture export: five small deterministic test-card images pushed
 * through the backbone into one archive, so the consuming package can
 * pin a feature fixture without having this extractor installed. The
 * images are generated in code (gradients, rings, checkerboards, bars
 * and hash noise) rather than bundled as binaries.
 */
import { mkdirSync, writeFileSync } from 'node:fs'
import { join } from 'node:path'

import { ExtractorSpec } from './backbone.js'
import { ExtractResult, extractDirectory } from './extract.js'
import { RgbImage, encodePng } from './image.js'

function testCard(index: number, size = 96): RgbImage {
  const data = new Uint8Array(size * size * 3)
  // xorshift-style mixing keeps card 4 reproducible everywhere
  let state = 0x9e3779b9 ^ (index * 0x85ebca6b)
  const next = () => {
    state ^= state << 13
    state ^= state >>> 17
    state ^= state << 5
    state >>>= 0
    return state / 0xffffffff
  }
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const i = (y * size + x) * 3
      switch (index) {
        case 0: // diagonal gradients
          data[i] = Math.round((x / (size - 1)) * 255)
          data[i + 1] = Math.round((y / (size - 1)) * 255)
          data[i + 2] = Math.round(((x + y) / (2 * size - 2)) * 255)
          break
        case 1: {
          // concentric rings
          const r = Math.hypot(x - size / 2, y - size / 2)
          const v = Math.round(127.5 * (1 + Math.sin(r / 3)))
          data[i] = v
          data[i + 1] = 255 - v
          data[i + 2] = Math.round((r / (size * 0.75)) * 255) & 255
          break
        }
        case 2: {
          // checkerboard
          const on = (Math.floor(x / 8) + Math.floor(y / 8)) % 2 === 0
          data[i] = on ? 230 : 25
          data[i + 1] = on ? 60 : 200
          data[i + 2] = on ? 40 : 120
          break
        }
        case 3: // vertical bars
          data[i] = x % 16 < 8 ? 250 : 10
          data[i + 1] = Math.round((x / (size - 1)) * 255)
          data[i + 2] = y % 12 < 6 ? 220 : 35
          break
        default: // seeded noise
          data[i] = Math.floor(next() * 256)
          data[i + 1] = Math.floor(next() * 256)
          data[i + 2] = Math.floor(next() * 256)
      }
    }
  }
  return { width: size, height: size, data }
}

export function writeTestCards(dir: string, count = 5): string[] {
  mkdirSync(dir, { recursive: true })
  const names: string[] = []
  for (let i = 0; i < count; i++) {
    const name = `card${i}.png`
    writeFileSync(join(dir, name), encodePng(testCard(i)))
    names.push(name)
  }
  return names
}

export async function exportFixture(
  modelDir: string,
  outDir: string,
  spec: ExtractorSpec,
  stagingDir: string,
): Promise<ExtractResult> {
  writeTestCards(stagingDir)
  return extractDirectory({
    inputDir: stagingDir,
    outDir,
    modelDir,
    spec,
    category: 'fixture',
  })
}
