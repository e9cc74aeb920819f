/**
 * Session-local persistence for the refinement history.
 *
 * History lives in browser sessionStorage (per-tab, cleared when the tab
 * closes); the service itself stays stateless. Outside a browser — or when
 * storage is unavailable — an in-memory store keeps the same interface.
 */

import { z } from "zod";

export interface KeyValueStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

export class MemoryStore implements KeyValueStore {
  private readonly items = new Map<string, string>();

  getItem(key: string): string | null {
    return this.items.get(key) ?? null;
  }

  setItem(key: string, value: string): void {
    this.items.set(key, value);
  }
}

/** sessionStorage when running in a browser, otherwise an in-memory store. */
export function defaultStore(): KeyValueStore {
  const globals = globalThis as { sessionStorage?: KeyValueStore };
  try {
    const storage = globals.sessionStorage;
    if (storage) {
      // probe: some environments expose a storage object that throws on use
      storage.setItem("attriq:probe", "1");
      return storage;
    }
  } catch {
    // fall through to memory
  }
  return new MemoryStore();
}

/** One issued retrieval, recorded for inspection and byte-exact replay. */
export const historyEntrySchema = z.object({
  /** 1-based append position within the session. */
  id: z.number().int(),
  createdAt: z.string(),
  /** Attribute names that were positive / negative when the request was sent. */
  positives: z.array(z.string()),
  negatives: z.array(z.string()),
  /** The service-produced prompt preview at send time. */
  previewPositive: z.string().nullable(),
  previewNegative: z.string().nullable(),
  /** The exact body string POSTed to /api/retrieve; replay re-sends it verbatim. */
  requestBody: z.string(),
  /** doc_ids of the returned ranking, best first. */
  topDocIds: z.array(z.string()),
});
export type HistoryEntry = z.infer<typeof historyEntrySchema>;

const HISTORY_KEY = "attriq:history";

export function loadHistory(store: KeyValueStore): HistoryEntry[] {
  const raw = store.getItem(HISTORY_KEY);
  if (raw === null) return [];
  try {
    return z.array(historyEntrySchema).parse(JSON.parse(raw));
  } catch {
    return [];
  }
}

export function saveHistory(store: KeyValueStore, entries: readonly HistoryEntry[]): void {
  store.setItem(HISTORY_KEY, JSON.stringify(entries));
}
