/**
 * DOM view layer. Renders SessionState into plain elements; no framework.
 *
 * Display rules enforced here:
 *  - prompt preview text is whatever the service returned, verbatim;
 *  - result tiles appear in payload order, and each dissimilarity is the
 *    literal substring from the raw /api/retrieve payload;
 *  - no ranking, scoring, or prompt-assembly math anywhere in this layer.
 */

import { ResultTile } from "./api.js";
import { SessionState, ToggleState } from "./state.js";

const TOGGLE_GLYPH: Record<ToggleState, string> = {
  off: "",
  positive: "+",
  negative: "−",
};

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderBanner(doc: Document, state: SessionState): HTMLElement {
  const banner = el(doc, "div", "banner");
  if (state.serviceDown) {
    banner.classList.add("banner-error");
    banner.setAttribute("data-kind", "unreachable");
    banner.textContent =
      "Service unreachable — check that the retrieval server is running.";
  } else if (state.lastError) {
    banner.classList.add("banner-error");
    banner.setAttribute("data-kind", "api-error");
    banner.setAttribute("data-code", state.lastError.code);
    const step = state.lastError.step ? ` (step: ${state.lastError.step})` : "";
    banner.textContent = `${state.lastError.code}: ${state.lastError.message}${step}`;
  } else {
    banner.classList.add("banner-idle");
    banner.textContent = "";
  }
  return banner;
}

export function renderAttributeToggles(doc: Document, state: SessionState): HTMLElement {
  const container = el(doc, "div", "attribute-picker");
  for (const attribute of state.attributes) {
    const toggleState = state.toggleState(attribute.name);
    const button = el(doc, "button", `toggle toggle-${toggleState}`);
    button.setAttribute("data-name", attribute.name);
    button.setAttribute("data-state", toggleState);
    button.title = attribute.phrase;
    const glyph = TOGGLE_GLYPH[toggleState];
    button.textContent = glyph ? `${glyph} ${attribute.name}` : attribute.name;
    button.addEventListener("click", () => state.cycleToggle(attribute.name));
    container.appendChild(button);
  }
  return container;
}

export function renderPromptPreview(doc: Document, state: SessionState): HTMLElement {
  const container = el(doc, "div", "prompt-preview");
  if (!state.preview) {
    const empty = el(doc, "p", "preview-empty");
    empty.setAttribute("data-role", "empty");
    empty.textContent = "Select attributes to preview the generation prompt.";
    container.appendChild(empty);
    return container;
  }
  const positive = el(doc, "p", "preview-positive");
  positive.setAttribute("data-role", "positive");
  positive.textContent = state.preview.positive_text;
  container.appendChild(positive);

  const negative = el(doc, "p", "preview-negative");
  negative.setAttribute("data-role", "negative");
  negative.textContent = state.preview.negative_text ?? "";
  container.appendChild(negative);
  return container;
}

export function renderControls(doc: Document, state: SessionState): HTMLElement {
  const controls = el(doc, "div", "controls");

  const measure = el(doc, "select", "measure-select");
  measure.setAttribute("data-role", "measure");
  for (const value of state.measures) {
    const option = el(doc, "option", undefined, value);
    option.value = value;
    if (value === state.measure) option.selected = true;
    measure.appendChild(option);
  }
  measure.addEventListener("change", () => {
    state.measure = measure.value;
  });
  controls.appendChild(measure);

  const generateButton = el(doc, "button", "generate-button", "Generate candidates");
  generateButton.setAttribute("data-role", "generate");
  generateButton.disabled = !state.canGenerate || state.generating;
  generateButton.addEventListener("click", () => void state.generate());
  controls.appendChild(generateButton);

  const retrieveButton = el(doc, "button", "retrieve-button", "Retrieve");
  retrieveButton.setAttribute("data-role", "retrieve");
  retrieveButton.disabled = !state.canRetrieve || state.retrieving;
  retrieveButton.addEventListener("click", () => void state.retrieve());
  controls.appendChild(retrieveButton);

  const cancelButton = el(doc, "button", "cancel-button", "Cancel");
  cancelButton.setAttribute("data-role", "cancel");
  cancelButton.disabled = !(state.generating || state.retrieving);
  cancelButton.addEventListener("click", () => state.cancelAll());
  controls.appendChild(cancelButton);

  return controls;
}

export function renderCandidateGallery(doc: Document, state: SessionState): HTMLElement {
  const gallery = el(doc, "div", "candidate-gallery");
  state.candidates.forEach((slot, position) => {
    const figure = el(doc, "figure", "candidate");
    figure.setAttribute("data-position", String(position));
    figure.setAttribute("data-selected", slot.selected ? "true" : "false");
    if (slot.selected) figure.classList.add("candidate-selected");

    const image = el(doc, "img", "candidate-image");
    image.setAttribute("src", state.api.resolve(slot.ref.url));
    image.setAttribute("alt", `candidate ${position}`);
    attachBrokenImageFallback(doc, image);
    figure.appendChild(image);

    const caption = el(
      doc,
      "figcaption",
      "candidate-caption",
      slot.ref.seed !== null ? `seed ${slot.ref.seed}` : `candidate ${position}`,
    );
    figure.appendChild(caption);

    figure.addEventListener("click", () => state.toggleCandidate(position));
    gallery.appendChild(figure);
  });
  return gallery;
}

export interface ResultsGalleryHandlers {
  onTileClick?: (index: number) => void;
}

export function renderResultsGallery(
  doc: Document,
  state: SessionState,
  handlers: ResultsGalleryHandlers = {},
): HTMLElement {
  const container = el(doc, "div", "results");
  const result = state.lastResult;
  if (!result) {
    container.appendChild(el(doc, "p", "results-empty", "No retrieval yet."));
    return container;
  }

  const list = el(doc, "ol", "results-gallery");
  result.parsed.results.forEach((tile, index) => {
    const item = el(doc, "li", "result-tile");
    item.setAttribute("data-doc-id", tile.doc_id);
    item.setAttribute("data-rank", String(tile.rank));

    const image = el(doc, "img", "result-image");
    image.setAttribute("src", state.api.docImageUrl(tile.doc_id));
    image.setAttribute("alt", tile.doc_id);
    attachBrokenImageFallback(doc, image);
    item.appendChild(image);

    item.appendChild(el(doc, "span", "result-rank", String(tile.rank)));
    item.appendChild(el(doc, "span", "result-doc-id", tile.doc_id));
    // the literal from the raw payload, never a re-formatted float
    const dissimilarity = el(
      doc,
      "span",
      "result-dissimilarity",
      result.dissimilarityText[index],
    );
    dissimilarity.setAttribute("data-role", "dissimilarity");
    item.appendChild(dissimilarity);

    const attributes = el(doc, "span", "result-attributes", tile.attributes.join(", "));
    item.appendChild(attributes);

    item.addEventListener("click", () => handlers.onTileClick?.(index));
    list.appendChild(item);
  });
  container.appendChild(list);
  return container;
}

export function renderResultDetail(
  doc: Document,
  state: SessionState,
  index: number,
  onClose: () => void,
): HTMLElement {
  const overlay = el(doc, "div", "detail-overlay");
  const result = state.lastResult;
  const tile: ResultTile | undefined = result?.parsed.results[index];
  if (!result || !tile) return overlay;

  overlay.setAttribute("data-doc-id", tile.doc_id);
  const panel = el(doc, "div", "detail-panel");

  const image = el(doc, "img", "detail-image");
  image.setAttribute("src", state.api.docImageUrl(tile.doc_id));
  image.setAttribute("alt", tile.doc_id);
  attachBrokenImageFallback(doc, image);
  panel.appendChild(image);

  panel.appendChild(el(doc, "h3", "detail-doc-id", tile.doc_id));
  panel.appendChild(el(doc, "p", "detail-rank", `rank ${tile.rank}`));
  const dissimilarity = el(
    doc,
    "p",
    "detail-dissimilarity",
    `dissimilarity ${result.dissimilarityText[index]}`,
  );
  panel.appendChild(dissimilarity);
  panel.appendChild(
    el(doc, "p", "detail-attributes", tile.attributes.join(", ") || "unlabeled"),
  );

  const close = el(doc, "button", "detail-close", "Close");
  close.addEventListener("click", onClose);
  panel.appendChild(close);

  overlay.appendChild(panel);
  return overlay;
}

export interface HistoryHandlers {
  onReplay: (entryId: number) => void;
  onRestore: (entryId: number) => void;
}

export function renderHistory(
  doc: Document,
  state: SessionState,
  handlers: HistoryHandlers,
): HTMLElement {
  const container = el(doc, "div", "history");
  const list = el(doc, "ol", "history-list");
  for (const entry of state.history) {
    const item = el(doc, "li", "history-entry");
    item.setAttribute("data-entry-id", String(entry.id));

    const prompt = el(doc, "span", "history-prompt", entry.previewPositive ?? "(raw prompt)");
    item.appendChild(prompt);

    const top = el(
      doc,
      "span",
      "history-top-docs",
      entry.topDocIds.slice(0, 3).join(", "),
    );
    item.appendChild(top);

    const replay = el(doc, "button", "history-replay", "Replay");
    replay.setAttribute("data-role", "replay");
    replay.addEventListener("click", () => handlers.onReplay(entry.id));
    item.appendChild(replay);

    const restore = el(doc, "button", "history-restore", "Restore");
    restore.setAttribute("data-role", "restore");
    restore.addEventListener("click", () => handlers.onRestore(entry.id));
    item.appendChild(restore);

    list.appendChild(item);
  }
  container.appendChild(list);
  return container;
}

function attachBrokenImageFallback(doc: Document, image: HTMLImageElement): void {
  image.addEventListener("error", () => {
    const placeholder = el(doc, "div", "broken-image");
    placeholder.setAttribute("role", "img");
    placeholder.setAttribute("aria-label", image.getAttribute("alt") ?? "image");
    placeholder.textContent = "image unavailable";
    image.replaceWith(placeholder);
  });
}

/**
 * Whole-page controller: renders every section from the current state and
 * re-renders on change. Holds only view-local state (the open detail tile).
 */
export class App {
  readonly root: HTMLElement;
  private detailIndex: number | null = null;
  private readonly unsubscribe: () => void;

  constructor(private readonly doc: Document, private readonly state: SessionState) {
    this.root = el(doc, "div", "app");
    this.unsubscribe = state.onChange(() => this.render());
    this.render();
  }

  dispose(): void {
    this.unsubscribe();
  }

  private section(className: string, child: HTMLElement): HTMLElement {
    const section = el(this.doc, "section", className);
    section.appendChild(child);
    return section;
  }

  render(): void {
    const { doc, state } = this;
    this.root.textContent = "";
    this.root.appendChild(renderBanner(doc, state));
    this.root.appendChild(this.section("compose", renderAttributeToggles(doc, state)));
    this.root.appendChild(this.section("preview", renderPromptPreview(doc, state)));
    this.root.appendChild(this.section("actions", renderControls(doc, state)));
    this.root.appendChild(this.section("candidates", renderCandidateGallery(doc, state)));
    this.root.appendChild(
      this.section(
        "ranked",
        renderResultsGallery(doc, state, {
          onTileClick: (index) => {
            this.detailIndex = index;
            this.render();
          },
        }),
      ),
    );
    this.root.appendChild(
      this.section(
        "refinements",
        renderHistory(doc, state, {
          onReplay: (entryId) => void state.replay(entryId),
          onRestore: (entryId) => void state.restoreSelections(entryId),
        }),
      ),
    );
    if (this.detailIndex !== null && state.lastResult) {
      this.root.appendChild(
        renderResultDetail(doc, state, this.detailIndex, () => {
          this.detailIndex = null;
          this.render();
        }),
      );
    }
  }
}
