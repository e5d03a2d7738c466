import { atomicWrite } from "./asnap.js";

export interface ManifestFileEntry {
  checkpoint: number;
  path: string;
}

export interface ManifestDoc {
  run_id: string;
  checkpoints: number[];
  layers: { id: number; features: number }[];
  populations: { tag: string; files: ManifestFileEntry[] }[];
  meta?: Record<string, unknown>;
}

export function writeManifest(filePath: string, doc: ManifestDoc): void {
  atomicWrite(filePath, JSON.stringify(doc, null, 2) + "\n");
}

export function writeCurveCsv(
  filePath: string,
  points: { checkpoint: number; value: number }[],
): void {
  const lines = ["checkpoint,value"];
  for (const point of points) {
    lines.push(`${point.checkpoint},${String(point.value)}`);
  }
  atomicWrite(filePath, lines.join("\n") + "\n");
}
