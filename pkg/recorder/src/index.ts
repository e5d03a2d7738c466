export {
  FORMAT_VERSION,
  MAGIC,
  serializeSnapshot,
  tagCode,
  writeSnapshot,
  type LayerDump,
  type SnapshotDump,
} from "./asnap.js";
export { writeCurveCsv, writeManifest, type ManifestDoc } from "./manifest.js";
export {
  RecorderSession,
  SOURCE_VALID,
  TARGET,
  flattenActivations,
  type CheckpointAccuracies,
  type RecorderOptions,
} from "./session.js";
