import { createHash } from 'node:crypto'

export function sha256Hex(...chunks: Uint8Array[]): string {
  const h = createHash('sha256')
  for (const chunk of chunks) h.update(chunk)
  return h.digest('hex')
}
