/**
 * Session state for the query-composition and retrieval workflow.
 *
 * The state machine owns: tri-state attribute toggles, the service-fetched
 * prompt preview, the generated candidate gallery with selection flags, the
 * last retrieval result, and the append-only refinement history.
 *
 * It deliberately contains no retrieval math: prompts are previewed via
 * POST /api/prompt, scores come back from POST /api/retrieve, and results
 * are kept in payload order. At most one generation and one retrieval are
 * in flight at a time; starting a new one cancels its predecessor.
 */

import {
  ApiClient,
  ApiError,
  AttributeInfo,
  AttributeSelection,
  CandidateRef,
  PromptPreview,
  RetrieveResult,
  ServiceUnreachable,
  isAbortError,
} from "./api.js";
import {
  HistoryEntry,
  KeyValueStore,
  defaultStore,
  loadHistory,
  saveHistory,
} from "./storage.js";

export type ToggleState = "off" | "positive" | "negative";

const CYCLE: Record<ToggleState, ToggleState> = {
  off: "positive",
  positive: "negative",
  negative: "off",
};

export interface CandidateSlot {
  ref: CandidateRef;
  selected: boolean;
}

export interface UiFailure {
  code: string;
  message: string;
  step?: string;
}

export const MAX_CANDIDATES = 16;

export class SessionState {
  readonly api: ApiClient;

  attributes: AttributeInfo[] = [];
  preamble = "";
  measures: string[] = [];

  /** Tri-state per attribute: an attribute is never both positive and negative. */
  private readonly toggles = new Map<string, ToggleState>();

  preview: PromptPreview | null = null;
  candidates: CandidateSlot[] = [];
  lastResult: RetrieveResult | null = null;
  /** Append-only within the session. */
  private entries: HistoryEntry[] = [];

  measure = "l2";
  k = 10;
  numCandidates = 3;
  aggregation: "mean" | "min" = "mean";
  seed: number | null = 0;

  serviceDown = false;
  lastError: UiFailure | null = null;
  generating = false;
  retrieving = false;

  /** The generation settings the current candidate gallery was made with. */
  private generatedWith: { numCandidates: number; seed: number | null } | null = null;

  private previewAbort: AbortController | null = null;
  private generateAbort: AbortController | null = null;
  private retrieveAbort: AbortController | null = null;

  private readonly store: KeyValueStore;
  private readonly listeners = new Set<() => void>();

  constructor(api: ApiClient, store: KeyValueStore = defaultStore()) {
    this.api = api;
    this.store = store;
  }

  // --- wiring -----------------------------------------------------------

  onChange(listener: () => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  async init(): Promise<void> {
    this.entries = loadHistory(this.store);
    try {
      const vocabulary = await this.api.vocabulary();
      this.attributes = vocabulary.attributes;
      this.preamble = vocabulary.preamble;
      this.measures = vocabulary.measures;
      if (this.measures.length > 0 && !this.measures.includes(this.measure)) {
        this.measure = this.measures[0];
      }
      for (const attribute of this.attributes) {
        if (!this.toggles.has(attribute.name)) {
          this.toggles.set(attribute.name, "off");
        }
      }
      this.serviceDown = false;
    } catch (failure) {
      if (failure instanceof ServiceUnreachable) {
        this.serviceDown = true;
      } else {
        this.recordFailure(failure);
      }
    }
    this.notify();
  }

  // --- attribute toggles ------------------------------------------------

  toggleState(name: string): ToggleState {
    return this.toggles.get(name) ?? "off";
  }

  /** off -> positive -> negative -> off. Invalidates stale candidates. */
  cycleToggle(name: string): void {
    if (!this.toggles.has(name)) return;
    this.toggles.set(name, CYCLE[this.toggleState(name)]);
    this.invalidateCandidates();
    this.notify();
    void this.refreshPreview();
  }

  setToggle(name: string, state: ToggleState): void {
    if (!this.toggles.has(name)) return;
    if (this.toggleState(name) === state) return;
    this.toggles.set(name, state);
    this.invalidateCandidates();
    this.notify();
  }

  selection(): AttributeSelection {
    const positives: string[] = [];
    const negatives: string[] = [];
    for (const [name, state] of this.toggles) {
      if (state === "positive") positives.push(name);
      else if (state === "negative") negatives.push(name);
    }
    positives.sort();
    negatives.sort();
    return { positives, negatives };
  }

  get hasSelection(): boolean {
    for (const state of this.toggles.values()) {
      if (state !== "off") return true;
    }
    return false;
  }

  private invalidateCandidates(): void {
    this.candidates = [];
    this.generatedWith = null;
  }

  // --- prompt preview (always fetched, never assembled locally) ---------

  async refreshPreview(): Promise<void> {
    this.previewAbort?.abort();
    if (!this.hasSelection) {
      this.previewAbort = null;
      this.preview = null;
      this.notify();
      return;
    }
    const controller = new AbortController();
    this.previewAbort = controller;
    try {
      const preview = await this.api.promptPreview(this.selection(), controller.signal);
      if (this.previewAbort !== controller) return; // superseded
      this.preview = preview;
      this.serviceDown = false;
      this.lastError = null;
    } catch (failure) {
      if (this.previewAbort !== controller || isAbort(failure)) return;
      this.recordFailure(failure);
    }
    this.notify();
  }

  // --- candidate generation ---------------------------------------------

  get canGenerate(): boolean {
    return this.hasSelection;
  }

  async generate(): Promise<void> {
    if (!this.canGenerate) return;
    this.generateAbort?.abort();
    const controller = new AbortController();
    this.generateAbort = controller;
    this.generating = true;
    this.notify();
    const spec = {
      selection: this.selection(),
      numCandidates: this.numCandidates,
      seed: this.seed,
    };
    try {
      const result = await this.api.generate(spec, controller.signal);
      if (this.generateAbort !== controller) return; // superseded
      // Select-all is the default; deselection is an explicit user act.
      this.candidates = result.candidates.map((ref) => ({ ref, selected: true }));
      this.generatedWith = { numCandidates: spec.numCandidates, seed: spec.seed };
      this.preview = result.prompt;
      this.lastError = null;
      this.serviceDown = false;
    } catch (failure) {
      if (this.generateAbort !== controller || isAbort(failure)) return;
      this.recordFailure(failure);
    } finally {
      if (this.generateAbort === controller) {
        this.generating = false;
        this.generateAbort = null;
      }
      this.notify();
    }
  }

  toggleCandidate(position: number): void {
    const slot = this.candidates[position];
    if (!slot) return;
    slot.selected = !slot.selected;
    this.notify();
  }

  selectedPositions(): number[] {
    const positions: number[] = [];
    this.candidates.forEach((slot, position) => {
      if (slot.selected) positions.push(position);
    });
    return positions;
  }

  // --- retrieval --------------------------------------------------------

  get canRetrieve(): boolean {
    return (
      this.hasSelection &&
      this.candidates.length > 0 &&
      this.selectedPositions().length > 0
    );
  }

  /**
   * The exact body the next retrieve() will POST. Exposed so views and
   * tests can compare it against what actually goes over the wire.
   */
  nextRequestBody(): string {
    const generated = this.generatedWith ?? {
      numCandidates: this.numCandidates,
      seed: this.seed,
    };
    return this.api.buildRetrieveBody({
      selection: this.selection(),
      measure: this.measure,
      k: this.k,
      numCandidates: generated.numCandidates,
      candidateSelection: this.selectedPositions(),
      aggregation: this.aggregation,
      seed: generated.seed,
    });
  }

  async retrieve(): Promise<void> {
    if (!this.canRetrieve) return;
    const body = this.nextRequestBody();
    const result = await this.issueRetrieve(body);
    if (result === null) return;
    const selection = this.selection();
    this.appendHistory({
      id: this.entries.length + 1,
      createdAt: new Date().toISOString(),
      positives: selection.positives,
      negatives: selection.negatives,
      previewPositive: this.preview?.positive_text ?? null,
      previewNegative: this.preview?.negative_text ?? null,
      requestBody: body,
      topDocIds: result.parsed.results.map((tile) => tile.doc_id),
    });
    this.notify();
  }

  private async issueRetrieve(body: string): Promise<RetrieveResult | null> {
    this.retrieveAbort?.abort();
    const controller = new AbortController();
    this.retrieveAbort = controller;
    this.retrieving = true;
    this.notify();
    try {
      const result = await this.api.retrieveRaw(body, controller.signal);
      if (this.retrieveAbort !== controller) return null; // superseded
      this.lastResult = result;
      this.lastError = null;
      this.serviceDown = false;
      return result;
    } catch (failure) {
      if (this.retrieveAbort !== controller || isAbort(failure)) return null;
      this.recordFailure(failure);
      return null;
    } finally {
      if (this.retrieveAbort === controller) {
        this.retrieving = false;
        this.retrieveAbort = null;
      }
      this.notify();
    }
  }

  // --- refinement history -----------------------------------------------

  get history(): readonly HistoryEntry[] {
    return this.entries;
  }

  private appendHistory(entry: HistoryEntry): void {
    this.entries.push(entry);
    saveHistory(this.store, this.entries);
  }

  /**
   * Re-issue a recorded retrieval. The stored body string goes over the
   * wire verbatim, so the replayed request is byte-identical to the
   * original. History itself is not modified.
   */
  async replay(entryId: number): Promise<void> {
    const entry = this.entries.find((candidate) => candidate.id === entryId);
    if (!entry) return;
    await this.issueRetrieve(entry.requestBody);
  }

  /** Restore an entry's attribute selections and re-fetch the preview. */
  async restoreSelections(entryId: number): Promise<void> {
    const entry = this.entries.find((candidate) => candidate.id === entryId);
    if (!entry) return;
    for (const name of this.toggles.keys()) this.toggles.set(name, "off");
    for (const name of entry.positives) {
      if (this.toggles.has(name)) this.toggles.set(name, "positive");
    }
    for (const name of entry.negatives) {
      if (this.toggles.has(name)) this.toggles.set(name, "negative");
    }
    this.invalidateCandidates();
    this.notify();
    await this.refreshPreview();
  }

  // --- shared -----------------------------------------------------------

  cancelAll(): void {
    this.previewAbort?.abort();
    this.generateAbort?.abort();
    this.retrieveAbort?.abort();
    this.previewAbort = null;
    this.generateAbort = null;
    this.retrieveAbort = null;
    this.generating = false;
    this.retrieving = false;
    this.notify();
  }

  private recordFailure(failure: unknown): void {
    if (failure instanceof ApiError) {
      this.lastError = {
        code: failure.code,
        message: failure.message,
        step: failure.step,
      };
    } else if (failure instanceof ServiceUnreachable) {
      this.serviceDown = true;
    } else {
      this.lastError = { code: "CLIENT_ERROR", message: String(failure) };
    }
  }
}

function isAbort(failure: unknown): boolean {
  return isAbortError(failure);
}
