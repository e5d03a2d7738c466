import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import * as tf from "@tensorflow/tfjs";
import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { RecorderSession, flattenActivations } from "../src/session.js";

function tmpdir(): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), "recorder-"));
}

function tinyModel(): tf.LayersModel {
  const model = tf.sequential();
  model.add(tf.layers.dense({ units: 3, activation: "tanh", inputShape: [4], name: "h0" }));
  model.add(tf.layers.dense({ units: 2, activation: "tanh", name: "h1" }));
  model.add(tf.layers.dense({ units: 2, activation: "softmax", name: "head" }));
  // deterministic weights, no RNG involvement
  for (const layer of model.layers) {
    const weights = layer.getWeights().map((w, i) =>
      tf.tidy(() => {
        const flat = Array.from({ length: w.size }, (_, k) => ((k % 7) - 3) / 5);
        return tf.tensor(flat, w.shape);
      }),
    );
    layer.setWeights(weights);
  }
  return model;
}

describe("flattenActivations", () => {
  it("keeps dense outputs row-major", () => {
    const t = tf.tensor2d([[1, 2, 3], [4, 5, 6]]);
    const flat = flattenActivations(t);
    expect(flat.nExamples).toBe(2);
    expect(flat.nFeatures).toBe(3);
    expect(Array.from(flat.values)).toEqual([1, 2, 3, 4, 5, 6]);
  });

  it("flattens NHWC conv outputs channel-major (the hand 2x2x2 fixture)", () => {
    // one example, H=W=C=2; value encodes its (c, h, w) digits as c*100+h*10+w
    // NHWC layout: [h][w][c]
    const nhwc = tf.tensor4d(
      [[
        [[111, 211], [112, 212]],
        [[121, 221], [122, 222]],
      ]],
      [1, 2, 2, 2],
    );
    const flat = flattenActivations(nhwc);
    expect(flat.nFeatures).toBe(8);
    expect(Array.from(flat.values)).toEqual([111, 112, 121, 122, 211, 212, 221, 222]);
  });
});

describe("RecorderSession", () => {
  let dir: string;
  beforeEach(() => {
    dir = tmpdir();
  });
  afterEach(() => {
    fs.rmSync(dir, { recursive: true, force: true });
  });

  function makeSession(model = tinyModel()) {
    return new RecorderSession({
      model,
      layers: ["h0", "h1"],
      sourceBatch: tf.ones([5, 4]),
      targetBatch: tf.mul(tf.ones([2, 4]), 0.5),
      outDir: dir,
      runId: "unit-test",
      meta: { origin: "vitest" },
    });
  }

  it("writes snapshots, manifest, and curves per checkpoint", () => {
    const session = makeSession();
    session.recordCheckpoint(1, { validAccuracy: 0.5, targetAccuracy: 0.25 });
    session.recordCheckpoint(2, { validAccuracy: 0.75 });
    expect(session.checkpoints).toEqual([1, 2]);

    const manifest = JSON.parse(fs.readFileSync(path.join(dir, "manifest.json"), "utf8"));
    expect(manifest.run_id).toBe("unit-test");
    expect(manifest.checkpoints).toEqual([1, 2]);
    expect(manifest.layers).toEqual([
      { id: 0, features: 3 },
      { id: 1, features: 2 },
    ]);
    expect(manifest.populations.map((p: { tag: string }) => p.tag)).toEqual([
      "source_valid",
      "target",
    ]);
    for (const population of manifest.populations) {
      for (const file of population.files) {
        expect(fs.existsSync(path.join(dir, file.path))).toBe(true);
      }
    }
    const curve = fs.readFileSync(path.join(dir, "valid_curve.csv"), "utf8");
    expect(curve).toBe("checkpoint,value\n1,0.5\n2,0.75\n");
    const target = fs.readFileSync(path.join(dir, "target_curve.csv"), "utf8");
    expect(target).toBe("checkpoint,value\n1,0.25\n");
  });

  it("rejects recording the same checkpoint twice", () => {
    const session = makeSession();
    session.recordCheckpoint(3);
    expect(() => session.recordCheckpoint(3)).toThrow(/already recorded/);
  });

  it("captures are deterministic for fixed weights and batches", () => {
    const a = makeSession();
    a.recordCheckpoint(1);
    const first = fs.readFileSync(path.join(dir, "snapshots", "target_0001.asnap"));
    fs.rmSync(dir, { recursive: true, force: true });
    dir = tmpdir();
    const b = makeSession();
    b.recordCheckpoint(1);
    const second = fs.readFileSync(path.join(dir, "snapshots", "target_0001.asnap"));
    expect(first.equals(second)).toBe(true);
  });

  it("propagates non-finite activations instead of sanitizing", () => {
    const model = tinyModel();
    const bad = model.getLayer("h0").getWeights();
    bad[1] = tf.tensor1d([Infinity, 0, 0]);
    // Infinity * tanh saturates to +/-1, so poison the input instead
    const session = new RecorderSession({
      model,
      layers: ["h0"],
      sourceBatch: tf.tensor2d([[NaN, 1, 1, 1]]),
      targetBatch: tf.ones([1, 4]),
      outDir: dir,
      runId: "nan-run",
    });
    expect(() => session.recordCheckpoint(0)).toThrow(/non-finite/);
  });
});
