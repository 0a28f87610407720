/**
 * Cross-implementation interop: the primary pipeline's Python client talks
 * to this bridge's server over the real wire protocol (spawned via the
 * CLIs on both sides).
 */

import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { ChildProcess, execFileSync, spawn } from "child_process";
import * as fs from "fs";
import * as os from "os";
import * as path from "path";

const TMP = fs.mkdtempSync(path.join(os.tmpdir(), "interop-"));
const REPO = path.resolve(__dirname, "..", "..");
const BRIDGE_CLI = path.join(REPO, "bridge", "dist", "cli.js");

describe("primary <-> bridge interop", () => {
  let server: ChildProcess;
  let port = 0;

  beforeAll(async () => {
    const png = path.join(TMP, "scene.png");
    const script = `
import sys
sys.path.insert(0, ${JSON.stringify(path.join(REPO, "tests"))})
from scenes import multi_shape_exemplar
from svgretarget import raster
from svgretarget.svgcore import serialize_svg
doc = multi_shape_exemplar(128)
img, _ = raster.render(doc, 128, 128)
raster.write_png(${JSON.stringify(png)}, img)
open(${JSON.stringify(path.join(TMP, "scene.svg"))}, "w").write(serialize_svg(doc))
`;
    execFileSync("python3", ["-c", script], { cwd: REPO });
    server = spawn("node", [BRIDGE_CLI, "serve", "--target", png,
                            "--port", "0"]);
    port = await new Promise<number>((resolve, reject) => {
      let out = "";
      server.stdout!.on("data", (chunk) => {
        out += chunk.toString();
        const m = out.match(/listening tcp:[^:]+:(\d+)/);
        if (m) resolve(Number(m[1]));
      });
      server.once("exit", (code) => reject(new Error(`server died: ${code}`)));
    });
  }, 60_000);

  afterAll(() => {
    server.kill();
  });

  it("primary loss client gets zero loss and gradient for the target", () => {
    const script = `
import numpy as np
from svgretarget.backend import RemoteLossBackend
from svgretarget import raster
b = RemoteLossBackend("tcp:127.0.0.1:${port}")
target = raster.read_png(${JSON.stringify(path.join(TMP, "scene.png"))})[:, :, :3]
loss, grad = b.loss_grad(target)
assert loss == 0.0, loss
assert abs(grad).max() == 0.0
e1 = b.embed(target)
e2 = b.embed("some prompt")
assert e1.shape == e2.shape
b.close()
print("ok")
`;
    const out = execFileSync("python3", ["-c", script],
                             { encoding: "utf-8", cwd: REPO });
    expect(out.trim()).toBe("ok");
  }, 60_000);

  it("primary eval CLI reports embedding metrics through the bridge", () => {
    const metricsPath = path.join(TMP, "metrics.json");
    execFileSync("python3", ["-m", "svgretarget.cli", "eval",
                             "--exemplar", path.join(TMP, "scene.svg"),
                             "--customized", path.join(TMP, "scene.svg"),
                             "--target", path.join(TMP, "scene.png"),
                             "--backend", `tcp:127.0.0.1:${port}`,
                             "--size", "128",
                             "--text", "a colorful test scene",
                             "--output", metricsPath], { cwd: REPO });
    const rep = JSON.parse(fs.readFileSync(metricsPath, "utf-8"));
    expect(rep.sim_exp).toBeGreaterThan(0.999);   // identical renders
    expect(typeof rep.sim_clip).toBe("number");
    expect(rep.sim_cus).toBeGreaterThan(0.999);
  }, 120_000);
});
