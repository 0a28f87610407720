#!/usr/bin/env node
/**
 * svgretarget-bridge CLI.
 *
 *   export-features --image in.png --output out.fgrd [--patch 8] [--model structural-v1]
 *   serve --target target.png [--port 7701] [--host 127.0.0.1] [--socket /path.sock]
 *
 * Exit codes: 0 ok, 2 input error, 4 backend/model failure.
 */

import * as fs from "fs";
import type * as net from "net";

import { decodePng } from "./png";
import { encodeFgrd } from "./fgrd";
import { getEncoder, DEFAULT_MODEL } from "./features";
import { startServer } from "./server";

function parseArgs(argv: string[]): { cmd: string; opts: Record<string, string> } {
  const [cmd, ...rest] = argv;
  const opts: Record<string, string> = {};
  for (let i = 0; i < rest.length; i++) {
    const arg = rest[i];
    if (!arg.startsWith("--")) throw new Error(`unexpected argument '${arg}'`);
    const key = arg.slice(2);
    const next = rest[i + 1];
    if (next !== undefined && !next.startsWith("--")) {
      opts[key] = next;
      i++;
    } else {
      opts[key] = "true";
    }
  }
  return { cmd: cmd ?? "", opts };
}

function fail(code: number, message: string): never {
  process.stderr.write(`error: ${message}\n`);
  process.exit(code);
}

async function main(): Promise<void> {
  const { cmd, opts } = parseArgs(process.argv.slice(2));
  if (cmd === "export-features") {
    const imagePath = opts.image ?? fail(2, "export-features needs --image");
    const outPath = opts.output ?? fail(2, "export-features needs --output");
    const patch = Number(opts.patch ?? "8");
    const model = opts.model ?? DEFAULT_MODEL;
    let encoder;
    try {
      encoder = getEncoder(model);
    } catch (err) {
      fail(4, String((err as Error).message));
    }
    let img;
    try {
      img = decodePng(fs.readFileSync(imagePath));
    } catch (err) {
      fail(2, `cannot read ${imagePath}: ${(err as Error).message}`);
    }
    const grid = encoder(img, patch);
    fs.writeFileSync(outPath, encodeFgrd(grid));
    process.stdout.write(
      `wrote ${outPath}: ${grid.gw}x${grid.gh} cells, ${grid.channels} ` +
      `channels, patch ${grid.patch}, model ${model}\n`);
    return;
  }
  if (cmd === "serve") {
    let target;
    if (opts.target) {
      try {
        target = decodePng(fs.readFileSync(opts.target));
      } catch (err) {
        fail(2, `cannot read ${opts.target}: ${(err as Error).message}`);
      }
    }
    let server: net.Server;
    try {
      server = await startServer({
        target,
        host: opts.host,
        port: opts.port ? Number(opts.port) : 0,
        socketPath: opts.socket,
      });
    } catch (err) {
      fail(4, `cannot listen: ${(err as Error).message}`);
    }
    const addr = server.address();
    if (typeof addr === "object" && addr) {
      process.stdout.write(`listening tcp:${addr.address}:${addr.port}\n`);
    } else {
      process.stdout.write(`listening unix:${addr}\n`);
    }
    return; // keep serving until killed
  }
  fail(2, `unknown command '${cmd}' (use export-features or serve)`);
}

main().catch((err) => fail(4, String(err?.message ?? err)));
