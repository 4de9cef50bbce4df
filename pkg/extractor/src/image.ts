/**
 * PNG decoding and the minimal image ops the extractor needs: center
 * crop, bilinear resize (half-pixel centers) and channel normalization.
 * No external image runtime; pngjs is pure JS so results are identical
 * on every platform.
 */
import { PNG } from 'pngjs'

export interface RgbImage {
  width: number
  height: number
  /** interleaved RGB, length = width * height * 3 */
  data: Uint8Array
}

export function decodePng(buffer: Buffer): RgbImage {
  const png = PNG.sync.read(buffer)
  const out = new Uint8Array(png.width * png.height * 3)
  for (let i = 0; i < png.width * png.height; i++) {
    out[i * 3] = png.data[i * 4]
    out[i * 3 + 1] = png.data[i * 4 + 1]
    out[i * 3 + 2] = png.data[i * 4 + 2]
  }
  return { width: png.width, height: png.height, data: out }
}

export function encodePng(img: RgbImage): Buffer {
  const png = new PNG({ width: img.width, height: img.height })
  for (let i = 0; i < img.width * img.height; i++) {
    png.data[i * 4] = img.data[i * 3]
    png.data[i * 4 + 1] = img.data[i * 3 + 1]
    png.data[i * 4 + 2] = img.data[i * 3 + 2]
    png.data[i * 4 + 3] = 255
  }
  return PNG.sync.write(png)
}

export function centerCrop(img: RgbImage, size: number): RgbImage {
  if (size > img.width || size > img.height) {
    throw new Error(`crop ${size} larger than image ${img.width}x${img.height}`)
  }
  const left = Math.floor((img.width - size) / 2)
  const top = Math.floor((img.height - size) / 2)
  const out = new Uint8Array(size * size * 3)
  for (let y = 0; y < size; y++) {
    const src = ((top + y) * img.width + left) * 3
    out.set(img.data.subarray(src, src + size * 3), y * size * 3)
  }
  return { width: size, height: size, data: out }
}

/** Bilinear resample to size x size; returns HWC float32 in [0, 255].
 * Sample positions use half-pixel centers: src = (dst + 0.5) * scale - 0.5. */
export function resizeBilinear(img: RgbImage, size: number): Float32Array {
  const out = new Float32Array(size * size * 3)
  const scaleX = img.width / size
  const scaleY = img.height / size
  for (let y = 0; y < size; y++) {
    const sy = Math.min(Math.max((y + 0.5) * scaleY - 0.5, 0), img.height - 1)
    const y0 = Math.floor(sy)
    const y1 = Math.min(y0 + 1, img.height - 1)
    const fy = sy - y0
    for (let x = 0; x < size; x++) {
      const sx = Math.min(Math.max((x + 0.5) * scaleX - 0.5, 0), img.width - 1)
      const x0 = Math.floor(sx)
      const x1 = Math.min(x0 + 1, img.width - 1)
      const fx = sx - x0
      for (let c = 0; c < 3; c++) {
        const p00 = img.data[(y0 * img.width + x0) * 3 + c]
        const p01 = img.data[(y0 * img.width + x1) * 3 + c]
        const p10 = img.data[(y1 * img.width + x0) * 3 + c]
        const p11 = img.data[(y1 * img.width + x1) * 3 + c]
        const top = p00 + (p01 - p00) * fx
        const bottom = p10 + (p11 - p10) * fx
        out[(y * size + x) * 3 + c] = top + (bottom - top) * fy
      }
    }
  }
  return out
}

/** Scale to [0, 1] then standardize per channel. In place; returns input. */
export function normalize(hwc: Float32Array, mean: number[], std: number[]): Float32Array {
  for (let i = 0; i < hwc.length; i += 3) {
    for (let c = 0; c < 3; c++) {
      hwc[i + c] = (hwc[i + c] / 255 - mean[c]) / std[c]
    }
  }
  return hwc
}
