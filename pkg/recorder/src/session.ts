import * as fs from "node:fs";
import * as path from "node:path";
import * as tf from "@tensorflow/tfjs";

import { writeSnapshot, type LayerDump } from "./asnap.js";
import { writeCurveCsv, writeManifest, type ManifestDoc } from "./manifest.js";

export const SOURCE_VALID = "source_valid";
export const TARGET = "target";

export interface RecorderOptions {
  model: tf.LayersModel;
  /** names of the layers whose (post-activation) outputs are captured, in depth order */
  layers: string[];
  /** fixed held-out source batch; must not change over the session */
  sourceBatch: tf.Tensor;
  /** fixed unlabelled target inputs; must not change over the session */
  targetBatch: tf.Tensor;
  outDir: string;
  runId: string;
  meta?: Record<string, unknown>;
}

export interface CheckpointAccuracies {
  validAccuracy?: number;
  targetAccuracy?: number;
}

/**
 * Flatten one captured activation tensor to (nExamples, nFeatures) rows.
 *
 * Convolutional outputs arrive from tfjs as NHWC and are rearranged so the
 * flat feature index runs channel-major: index = c*H*W + h*W + w. This
 * order is part of the snapshot contract with the analysis engine.
 */
export function flattenActivations(activations: tf.Tensor): {
  nExamples: number;
  nFeatures: number;
  values: Float32Array;
} {
  let prepared = activations;
  if (activations.rank === 4) {
    prepared = tf.transpose(activations, [0, 3, 1, 2]);
  } else if (activations.rank < 2) {
    throw new Error(`cannot capture a rank-${activations.rank} layer output`);
  }
  const nExamples = prepared.shape[0] as number;
  const nFeatures = prepared.size / nExamples;
  const flat = tf.reshape(prepared, [nExamples, nFeatures]);
  const values = flat.dataSync() as Float32Array;
  if (prepared !== activations) prepared.dispose();
  flat.dispose();
  return { nExamples, nFeatures, values: Float32Array.from(values) };
}

export class RecorderSession {
  private readonly options: RecorderOptions;
  private readonly probe: tf.LayersModel;
  private readonly recorded: number[] = [];
  private readonly files: Record<string, { checkpoint: number; path: string }[]> = {
    [SOURCE_VALID]: [],
    [TARGET]: [],
  };
  private readonly validCurve: { checkpoint: number; value: number }[] = [];
  private readonly targetCurve: { checkpoint: number; value: number }[] = [];
  private layerDims: number[] | null = null;

  constructor(options: RecorderOptions) {
    if (options.layers.length === 0) {
      throw new Error("at least one layer must be captured");
    }
    this.options = options;
    const outputs = options.layers.map(
      (name) => options.model.getLayer(name).output as tf.SymbolicTensor,
    );
    this.probe = tf.model({ inputs: options.model.inputs, outputs });
    fs.mkdirSync(path.join(options.outDir, "snapshots"), { recursive: true });
  }

  /** Checkpoints recorded so far, in call order. */
  get checkpoints(): number[] {
    return [...this.recorded];
  }

  private capture(batch: tf.Tensor): LayerDump[] {
    const raw = this.probe.predict(batch);
    const tensors = Array.isArray(raw) ? raw : [raw];
    const layers = tensors.map((tensor, layerId) => {
      const { nExamples, nFeatures, values } = flattenActivations(tensor);
      tensor.dispose();
      return { layerId, nExamples, nFeatures, values };
    });
    return layers;
  }

  /**
   * Capture both populations at one checkpoint and update all run files.
   * Model stochasticity (dropout, batch norm) is inactive because capture
   * runs in inference mode.
   */
  recordCheckpoint(checkpoint: number, accuracies: CheckpointAccuracies = {}): void {
    if (this.recorded.includes(checkpoint)) {
      throw new Error(`checkpoint ${checkpoint} was already recorded`);
    }
    const batches: [string, tf.Tensor][] = [
      [SOURCE_VALID, this.options.sourceBatch],
      [TARGET, this.options.targetBatch],
    ];
    const dumps = batches.map(([tag, batch]) => {
      const layers = this.capture(batch);
      const dims = layers.map((layer) => layer.nFeatures);
      if (this.layerDims === null) {
        this.layerDims = dims;
      } else if (dims.join() !== this.layerDims.join()) {
        throw new Error(
          `layer output shape drift at checkpoint ${checkpoint}: ` +
            `(${dims.join(", ")}) vs (${this.layerDims.join(", ")})`,
        );
      }
      return [tag, layers] as const;
    });

    for (const [tag, layers] of dumps) {
      const rel = path.join("snapshots", `${tag}_${String(checkpoint).padStart(4, "0")}.asnap`);
      writeSnapshot(path.join(this.options.outDir, rel), {
        checkpoint,
        tag,
        layers,
      });
      this.files[tag].push({ checkpoint, path: rel });
    }
    this.recorded.push(checkpoint);
    if (accuracies.validAccuracy !== undefined) {
      this.validCurve.push({ checkpoint, value: accuracies.validAccuracy });
    }
    if (accuracies.targetAccuracy !== undefined) {
      this.targetCurve.push({ checkpoint, value: accuracies.targetAccuracy });
    }
    this.writeRunFiles();
  }

  private writeRunFiles(): void {
    const sorted = [...this.recorded].sort((a, b) => a - b);
    const doc: ManifestDoc = {
      run_id: this.options.runId,
      checkpoints: sorted,
      layers: (this.layerDims ?? []).map((features, id) => ({ id, features })),
      populations: [SOURCE_VALID, TARGET].map((tag) => ({
        tag,
        files: [...this.files[tag]].sort((a, b) => a.checkpoint - b.checkpoint),
      })),
    };
    if (this.options.meta) doc.meta = this.options.meta;
    writeManifest(path.join(this.options.outDir, "manifest.json"), doc);
    const byCheckpoint = (a: { checkpoint: number }, b: { checkpoint: number }) =>
      a.checkpoint - b.checkpoint;
    if (this.validCurve.length > 0) {
      writeCurveCsv(
        path.join(this.options.outDir, "valid_curve.csv"),
        [...this.validCurve].sort(byCheckpoint),
      );
    }
    if (this.targetCurve.length > 0) {
      writeCurveCsv(
        path.join(this.options.outDir, "target_curve.csv"),
        [...this.targetCurve].sort(byCheckpoint),
      );
    }
  }
}
