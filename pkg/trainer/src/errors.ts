/** Typed failures surfaced by the training and serving entry points. */

/** An export file exists but contains no training pairs. */
export class EmptyExportError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "EmptyExportError";
  }
}

/** Malformed export lines, bad hyperparameters, or mixed-tool files. */
export class ConfigError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ConfigError";
  }
}

/** Preference training was asked to continue from an absent or wrong-stage parent. */
export class MissingParentError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "MissingParentError";
  }
}

/** An adapter artifact on disk cannot be read back into a runnable model. */
export class LoadError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "LoadError";
  }
}
