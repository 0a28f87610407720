/**
 * Loss/embedding service over the v1 wire protocol.
 *
 * Stateless per request (the comparison target is static serve-time
 * configuration). One request in flight per connection; multiple
 * connections are fine. Malformed frames get an error response and never
 * desynchronize the stream (framing is length-prefixed).
 */

import * as net from "net";

import { RasterImage } from "./png";
import { lossGrad, embedImage, embedText, LOSS_MODEL, EMBED_MODEL } from "./loss";
import { FrameParser, packFrame, unpackBody, errorFrame, PROTOCOL_VERSION } from "./protocol";

export interface ServerOptions {
  target?: RasterImage;        // required for loss_grad requests
  host?: string;
  port?: number;               // TCP endpoint...
  socketPath?: string;         // ...or a unix socket
}

function imageFromPayload(header: Record<string, unknown>, payload: Buffer): RasterImage {
  const w = Number(header.w);
  const h = Number(header.h);
  const c = Number(header.c);
  if (!Number.isInteger(w) || !Number.isInteger(h) || (c !== 3 && c !== 4)) {
    throw new Error(`bad image header w=${header.w} h=${header.h} c=${header.c}`);
  }
  const n = w * h * c;
  if (payload.length !== n * 4) {
    throw new Error(`payload has ${payload.length} bytes, want ${n * 4}`);
  }
  const data = new Float32Array(n);
  for (let i = 0; i < n; i++) data[i] = payload.readFloatLE(i * 4);
  return { width: w, height: h, channels: c as 3 | 4, data };
}

export function handleFrame(body: Buffer, options: ServerOptions): Buffer {
  let frame;
  try {
    frame = unpackBody(body);
  } catch (err) {
    return errorFrame("malformed-frame", String((err as Error).message));
  }
  const { header, payload } = frame;
  try {
    if (header.v !== PROTOCOL_VERSION) {
      return errorFrame("bad-version", `expected v=${PROTOCOL_VERSION}, got ${header.v}`);
    }
    if (header.op === "loss_grad") {
      if (!options.target) {
        return errorFrame("no-target", "server started without a target image");
      }
      const rendered = imageFromPayload(header, payload);
      const { loss, grad } = lossGrad(rendered, options.target);
      return packFrame(
        { v: PROTOCOL_VERSION, loss, model: LOSS_MODEL },
        Buffer.from(grad.buffer, grad.byteOffset, grad.byteLength));
    }
    if (header.op === "embed") {
      let vec: Float32Array;
      if (typeof header.text === "string") {
        vec = embedText(header.text);
      } else {
        vec = embedImage(imageFromPayload(header, payload));
      }
      return packFrame(
        { v: PROTOCOL_VERSION, dim: vec.length, model: EMBED_MODEL },
        Buffer.from(vec.buffer, vec.byteOffset, vec.byteLength));
    }
    return errorFrame("bad-op", `unknown op '${header.op}'`);
  } catch (err) {
    return errorFrame("request-failed", String((err as Error).message));
  }
}

export function startServer(options: ServerOptions): Promise<net.Server> {
  const server = net.createServer((conn) => {
    const parser = new FrameParser();
    conn.on("data", (chunk: Buffer | string) => {
      const buf = typeof chunk === "string" ? Buffer.from(chunk) : chunk;
      for (const body of parser.push(buf)) {
        conn.write(handleFrame(body, options));
      }
    });
    conn.on("error", () => conn.destroy());
  });
  return new Promise((resolve, reject) => {
    server.once("error", reject);
    const done = () => resolve(server);
    if (options.socketPath) {
      server.listen(options.socketPath, done);
    } else {
      server.listen(options.port ?? 0, options.host ?? "127.0.0.1", done);
    }
  });
}
