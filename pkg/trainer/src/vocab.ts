/**
 * Fixed character vocabulary.
 *
 * The alphabet is input-independent (printable ASCII plus newline and tab)
 * so any prompt the chat endpoint receives can be encoded without growing
 * the model: characters outside the alphabet map to a single UNK id. A BOS
 * id pads context windows that reach past the start of the text.
 */

const PRINTABLE_START = 32; // space
const PRINTABLE_END = 126; // tilde
const PRINTABLE_COUNT = PRINTABLE_END - PRINTABLE_START + 1;

export const NEWLINE_ID = PRINTABLE_COUNT;
export const TAB_ID = PRINTABLE_COUNT + 1;
export const UNK_ID = PRINTABLE_COUNT + 2;
export const BOS_ID = PRINTABLE_COUNT + 3;

/** Total number of ids, including UNK and BOS. */
export const VOCAB_SIZE = PRINTABLE_COUNT + 4;

/** Ids the decoder is allowed to emit (everything except UNK and BOS). */
export const GENERATABLE_IDS = PRINTABLE_COUNT + 2;

export function encodeChar(ch: string): number {
  const code = ch.charCodeAt(0);
  if (code >= PRINTABLE_START && code <= PRINTABLE_END) return code - PRINTABLE_START;
  if (ch === "\n") return NEWLINE_ID;
  if (ch === "\t") return TAB_ID;
  return UNK_ID;
}

export function decodeId(id: number): string {
  if (id < PRINTABLE_COUNT) return String.fromCharCode(PRINTABLE_START + id);
  if (id === NEWLINE_ID) return "\n";
  if (id === TAB_ID) return "\t";
  return ""; // UNK and BOS never appear in generated text
}

export function encode(text: string): Int32Array {
  const out = new Int32Array(text.length);
  for (let i = 0; i < text.length; i++) out[i] = encodeChar(text[i]);
  return out;
}
