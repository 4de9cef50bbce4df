import { describe, expect, it } from 'vitest'

import { centerCrop, decodePng, encodePng, normalize, resizeBilinear, RgbImage } from '../src/image'

function solid(value: number, size = 8): RgbImage {
  return { width: size, height: size, data: new Uint8Array(size * size * 3).fill(value) }
}

describe('image ops', () => {
  it('png encode/decode round-trips pixels', () => {
    const img: RgbImage = { width: 3, height: 2, data: Uint8Array.from({ length: 18 }, (_, i) => (i * 13) % 256) }
    const back = decodePng(encodePng(img))
    expect(back.width).toBe(3)
    expect(back.height).toBe(2)
    expect(Array.from(back.data)).toEqual(Array.from(img.data))
  })

  it('center crop picks the middle window', () => {
    const img: RgbImage = { width: 4, height: 4, data: new Uint8Array(48) }
    // mark pixel (1,1) which the centered 2x2 crop must include at (0,0)
    img.data[(1 * 4 + 1) * 3] = 200
    const crop = centerCrop(img, 2)
    expect(crop.width).toBe(2)
    expect(crop.data[0]).toBe(200)
  })

  it('center crop larger than the image throws', () => {
    expect(() => centerCrop(solid(5, 8), 16)).toThrow(/crop 16 larger/)
  })

  it('bilinear resize of a constant image is constant', () => {
    const out = resizeBilinear(solid(77, 5), 13)
    expect(out.length).toBe(13 * 13 * 3)
    for (const v of out) expect(v).toBe(77)
  })

  it('bilinear resize midpoint interpolates neighbors', () => {
    // 1x2 image [0, 100] doubled to 1x4: centers land at 0, 0.25, 0.75, 1 of the source span
    const img: RgbImage = { width: 2, height: 1, data: Uint8Array.from([0, 0, 0, 100, 100, 100]) }
    const out = resizeBilinear(img, 4)
    // output rows 0..3 all identical; check the red channel of row 1
    const reds = [out[0], out[3], out[6], out[9]]
    expect(reds[0]).toBe(0)
    expect(reds[1]).toBeCloseTo(25, 5)
    expect(reds[2]).toBeCloseTo(75, 5)
    expect(reds[3]).toBe(100)
  })

  it('normalize scales to unit range then standardizes per channel', () => {
    const hwc = Float32Array.from([255, 0, 127.5])
    normalize(hwc, [0.5, 0.5, 0.5], [0.25, 0.5, 1.0])
    expect(hwc[0]).toBeCloseTo((1.0 - 0.5) / 0.25, 6)
    expect(hwc[1]).toBeCloseTo((0.0 - 0.5) / 0.5, 6)
    expect(hwc[2]).toBeCloseTo(0.0, 6)
  })
})
