/** Advance-button state for a description draft. */
export interface GateState {
  /** Raw length in UTF-16 code units; whitespace counts. */
  count: number;
  /** Characters still needed, never negative. */
  remaining: number;
  enabled: boolean;
}

/**
 * The description gate counts raw code units (string length), not
 * graphemes or trimmed words, so the counter in the UI and the server's
 * own check agree exactly.
 */
export function descriptionGate(draft: string, minChars: number): GateState {
  const count = draft.length;
  return {
    count,
    remaining: Math.max(0, minChars - count),
    enabled: count >= minChars,
  };
}
