export { EmptyExportError, ConfigError, MissingParentError, LoadError } from "./errors.js";
export {
  DEFAULT_CONFIG,
  exportDigest,
  readItExport,
  readKtoExport,
  readTrainingConfig,
  withDefaults,
} from "./data.js";
export type { ItPair, KtoPair, TrainingConfig } from "./data.js";
export {
  CharLm,
  TINY_BASE,
  baseSpecFromId,
  buildBase,
  cloneLora,
  effectiveRank,
  initLora,
  makeBaseSpec,
} from "./model.js";
export type { BaseSpec, BaseWeights, DecodeOptions, DecodeResult, LoraDelta } from "./model.js";
export { loadArtifact, saveArtifact } from "./artifact.js";
export type { AdapterArtifact, LoadedAdapter, ParentRef, Stage } from "./artifact.js";
export { toolKey, trainIt, trainKto } from "./train.js";
export type { ClassMass, EpochLog, RunLog, TrainItOptions, TrainKtoOptions, TrainResult } from "./train.js";
export { createApp, listen, registryFromArtifacts, registryOf } from "./serve.js";
export type { ModelRegistry, ServableModel } from "./serve.js";
export { runCli } from "./cli.js";
