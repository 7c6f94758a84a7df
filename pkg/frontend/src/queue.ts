/** Queue view state and its transitions.
 *
 * The server is the source of truth; this state only tracks what the
 * analyst has done since the last refresh so the view stays stable
 * while labels are in flight. A 409 means someone else labeled the
 * record first: the entry leaves the queue and the stored answer
 * stands, so the console drops it and says so.
 */

import type { QueueEntry } from "./model.js";

export interface QueueState {
  entries: QueueEntry[];
  /** record ids with a POST in flight */
  inFlight: Set<string>;
  /** record id -> note shown next to the queue (conflicts, errors) */
  notices: Map<string, string>;
}

export function emptyQueue(): QueueState {
  return { entries: [], inFlight: new Set(), notices: new Map() };
}

/** Server refresh wins, but entries with an unresolved POST stay hidden. */
export function applyRefresh(state: QueueState, served: QueueEntry[]): QueueState {
  return {
    entries: served.filter((e) => !state.inFlight.has(e.record_id)),
    inFlight: state.inFlight,
    notices: state.notices,
  };
}

export function markInFlight(state: QueueState, recordId: string): QueueState {
  const inFlight = new Set(state.inFlight);
  inFlight.add(recordId);
  return {
    entries: state.entries.filter((e) => e.record_id !== recordId),
    inFlight,
    notices: state.notices,
  };
}

export function resolveLabeled(state: QueueState, recordId: string): QueueState {
  const inFlight = new Set(state.inFlight);
  inFlight.delete(recordId);
  return { entries: state.entries, inFlight, notices: state.notices };
}

/** First write won elsewhere: drop the entry, keep a note for the analyst. */
export function resolveConflict(state: QueueState, recordId: string): QueueState {
  const inFlight = new Set(state.inFlight);
  inFlight.delete(recordId);
  const notices = new Map(state.notices);
  notices.set(recordId, "already labeled by another analyst");
  return {
    entries: state.entries.filter((e) => e.record_id !== recordId),
    inFlight,
    notices,
  };
}

/** Transient failure: the entry returns to the queue for another try. */
export function resolveFailed(
  state: QueueState,
  entry: QueueEntry,
  message: string,
): QueueState {
  const inFlight = new Set(state.inFlight);
  inFlight.delete(entry.record_id);
  const notices = new Map(state.notices);
  notices.set(entry.record_id, message);
  const entries = state.entries.some((e) => e.record_id === entry.record_id)
    ? state.entries
    : [...state.entries, entry];
  return { entries, inFlight, notices };
}
