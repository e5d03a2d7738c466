import * as fs from "node:fs";
import * as path from "node:path";

export const MAGIC = "ABES";
export const FORMAT_VERSION = 1;

export const TAG_CODES: Record<string, number> = {
  source_valid: 0,
  target: 1,
};

export interface LayerDump {
  layerId: number;
  nExamples: number;
  nFeatures: number;
  /** row-major, example-major activation values */
  values: Float32Array;
}

export interface SnapshotDump {
  checkpoint: number;
  tag: string;
  layers: LayerDump[];
}

export function tagCode(tag: string): number {
  return TAG_CODES[tag] ?? 2;
}

function validate(snapshot: SnapshotDump): void {
  if (!Number.isInteger(snapshot.checkpoint) || snapshot.checkpoint < 0) {
    throw new Error(`checkpoint must be a non-negative integer, got ${snapshot.checkpoint}`);
  }
  if (snapshot.layers.length === 0) {
    throw new Error("snapshot has no layers");
  }
  const n0 = snapshot.layers[0].nExamples;
  snapshot.layers.forEach((layer, position) => {
    if (layer.layerId !== position) {
      throw new Error(
        `layer ids must be contiguous from 0: position ${position} has id ${layer.layerId}`,
      );
    }
    if (layer.nExamples < 1 || layer.nFeatures < 1) {
      throw new Error(`layer ${layer.layerId}: empty shape (${layer.nExamples}, ${layer.nFeatures})`);
    }
    if (layer.nExamples !== n0) {
      throw new Error(
        `layer ${layer.layerId} has ${layer.nExamples} examples, layer 0 has ${n0}`,
      );
    }
    if (layer.values.length !== layer.nExamples * layer.nFeatures) {
      throw new Error(
        `layer ${layer.layerId}: ${layer.values.length} values for shape ` +
          `(${layer.nExamples}, ${layer.nFeatures})`,
      );
    }
    for (let i = 0; i < layer.values.length; i++) {
      if (!Number.isFinite(layer.values[i])) {
        const row = Math.floor(i / layer.nFeatures);
        const col = i % layer.nFeatures;
        throw new Error(
          `non-finite activation at (layer ${layer.layerId}, row ${row}, col ${col})`,
        );
      }
    }
  });
}

export function serializeSnapshot(snapshot: SnapshotDump): Buffer {
  validate(snapshot);
  const headerSize = 4 + 4 + 8 + 1 + 4;
  let total = headerSize;
  for (const layer of snapshot.layers) {
    total += 12 + 4 * layer.values.length;
  }
  const buf = Buffer.alloc(total);
  let offset = 0;
  buf.write(MAGIC, offset, "ascii");
  offset += 4;
  buf.writeUInt32LE(FORMAT_VERSION, offset);
  offset += 4;
  buf.writeBigUInt64LE(BigInt(snapshot.checkpoint), offset);
  offset += 8;
  buf.writeUInt8(tagCode(snapshot.tag), offset);
  offset += 1;
  buf.writeUInt32LE(snapshot.layers.length, offset);
  offset += 4;
  for (const layer of snapshot.layers) {
    buf.writeUInt32LE(layer.layerId, offset);
    buf.writeUInt32LE(layer.nExamples, offset + 4);
    buf.writeUInt32LE(layer.nFeatures, offset + 8);
    offset += 12;
    for (let i = 0; i < layer.values.length; i++) {
      buf.writeFloatLE(layer.values[i], offset);
      offset += 4;
    }
  }
  return buf;
}

export function atomicWrite(filePath: string, data: Buffer | string): void {
  const tmp = path.join(
    path.dirname(filePath),
    `.${path.basename(filePath)}.${process.pid}.tmp`,
  );
  fs.writeFileSync(tmp, data);
  fs.renameSync(tmp, filePath);
}

export function writeSnapshot(filePath: string, snapshot: SnapshotDump): void {
  atomicWrite(filePath, serializeSnapshot(snapshot));
}
