/**
 * Wire protocol v1 framing.
 *
 * Frame = u32 little-endian byte length, then a UTF-8 JSON header
 * terminated by a single newline, then a raw little-endian float32
 * payload. The length covers header + newline + payload.
 */

export const PROTOCOL_VERSION = 1;

export interface Frame {
  header: Record<string, unknown>;
  payload: Buffer;
}

export function packFrame(header: Record<string, unknown>, payload: Buffer = Buffer.alloc(0)): Buffer {
  const head = Buffer.from(JSON.stringify(header) + "\n", "utf-8");
  const out = Buffer.alloc(4 + head.length + payload.length);
  out.writeUInt32LE(head.length + payload.length, 0);
  head.copy(out, 4);
  payload.copy(out, 4 + head.length);
  return out;
}

export function unpackBody(body: Buffer): Frame {
  const sep = body.indexOf(0x0a);
  if (sep < 0) throw new Error("malformed frame: missing header terminator");
  const header = JSON.parse(body.toString("utf-8", 0, sep));
  return { header, payload: body.subarray(sep + 1) };
}

/**
 * Incremental frame splitter for a byte stream. Feed arbitrary chunks;
 * complete frame bodies come back in order. Length-prefixed framing keeps
 * the stream aligned even when a frame's content turns out malformed.
 */
export class FrameParser {
  private buf: Buffer = Buffer.alloc(0);

  push(chunk: Buffer): Buffer[] {
    this.buf = this.buf.length ? Buffer.concat([this.buf, chunk]) : chunk;
    const bodies: Buffer[] = [];
    while (this.buf.length >= 4) {
      const length = this.buf.readUInt32LE(0);
      if (this.buf.length < 4 + length) break;
      bodies.push(this.buf.subarray(4, 4 + length));
      this.buf = this.buf.subarray(4 + length);
    }
    return bodies;
  }
}

export function errorFrame(code: string, message: string): Buffer {
  return packFrame({ v: PROTOCOL_VERSION, error: { code, message } });
}
