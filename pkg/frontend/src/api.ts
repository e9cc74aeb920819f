/**
 * Typed client for the retrieval service's HTTP JSON API.
 *
 * Two rules keep the UI honest:
 *
 * 1. Request bodies for /api/generate and /api/retrieve are built once as
 *    canonical JSON strings. History stores those exact strings, and replay
 *    re-sends them verbatim, so a replayed request is byte-identical.
 * 2. Retrieval responses keep the raw payload text alongside the parsed
 *    object, and the dissimilarity values are extracted from the raw text as
 *    string literals. The UI displays those literals unmodified — it never
 *    formats a float itself.
 */

import { z } from "zod";
import { rawNumberLiterals } from "./rawjson.js";

export const attributeInfoSchema = z.object({
  name: z.string(),
  phrase: z.string(),
});
export type AttributeInfo = z.infer<typeof attributeInfoSchema>;

export const vocabularySchema = z.object({
  attributes: z.array(attributeInfoSchema),
  preamble: z.string(),
  measures: z.array(z.string()),
});
export type Vocabulary = z.infer<typeof vocabularySchema>;

export const promptPreviewSchema = z.object({
  positive_text: z.string(),
  negative_text: z.string().nullable(),
  settings: z.record(z.string(), z.unknown()),
  fingerprint: z.string(),
});
export type PromptPreview = z.infer<typeof promptPreviewSchema>;

export const candidateRefSchema = z.object({
  prompt_fingerprint: z.string(),
  seed: z.number().int().nullable(),
  position: z.number().int(),
  provider_id: z.string(),
  url: z.string(),
});
export type CandidateRef = z.infer<typeof candidateRefSchema>;

export const generateResultSchema = z.object({
  prompt: promptPreviewSchema,
  candidates: z.array(candidateRefSchema),
});
export type GenerateResult = z.infer<typeof generateResultSchema>;

export const resultTileSchema = z.object({
  rank: z.number().int(),
  doc_id: z.string(),
  dissimilarity: z.number(),
  image_uri: z.string(),
  attributes: z.array(z.string()),
});
export type ResultTile = z.infer<typeof resultTileSchema>;

export const retrievePayloadSchema = z.object({
  measure: z.string(),
  k: z.number().int(),
  results: z.array(resultTileSchema),
  prompt: promptPreviewSchema.nullable(),
  candidates: z.array(candidateRefSchema),
  timings_ms: z.record(z.string(), z.number()),
});
export type RetrievePayload = z.infer<typeof retrievePayloadSchema>;

/** Parsed retrieval response plus the raw payload it came from. */
export interface RetrieveResult {
  /** The response body exactly as received. */
  raw: string;
  parsed: RetrievePayload;
  /**
   * The dissimilarity of results[i] as the literal substring of `raw`,
   * in payload order. Display these, never a re-formatted float.
   */
  dissimilarityText: string[];
}

const errorEnvelopeSchema = z.object({
  error: z.object({
    code: z.string(),
    type: z.string(),
    message: z.string(),
    step: z.string().optional(),
  }),
});

/** A structured failure from the service's error envelope. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    readonly errorType: string,
    message: string,
    readonly step?: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

/** The service could not be reached at all (network-level failure). */
export class ServiceUnreachable extends Error {
  constructor(readonly baseUrl: string, cause: unknown) {
    super(`service unreachable at ${baseUrl}: ${String(cause)}`);
    this.name = "ServiceUnreachable";
  }
}

export interface AttributeSelection {
  positives: string[];
  negatives: string[];
}

export interface RetrieveSpec {
  selection: AttributeSelection;
  measure: string;
  k: number;
  numCandidates: number;
  /** Candidate positions to aggregate over; null means all. */
  candidateSelection: number[] | null;
  aggregation: "mean" | "min";
  seed: number | null;
}

export interface GenerateSpec {
  selection: AttributeSelection;
  numCandidates: number;
  seed: number | null;
}

export interface ApiClientOptions {
  apiToken?: string;
  fetchImpl?: typeof fetch;
}

export class ApiClient {
  readonly baseUrl: string;
  private readonly apiToken?: string;
  private readonly fetchImpl: typeof fetch;

  constructor(baseUrl: string, options: ApiClientOptions = {}) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.apiToken = options.apiToken;
    // bind through globalThis: browsers require fetch to be invoked on the
    // global object, not as a detached function
    this.fetchImpl =
      options.fetchImpl ?? ((input, init) => globalThis.fetch(input, init));
  }

  /** Absolute URL for a service-relative path like /api/doc/x/image. */
  resolve(path: string): string {
    return path.startsWith("http") ? path : this.baseUrl + path;
  }

  docImageUrl(docId: string): string {
    return this.resolve(`/api/doc/${encodeURIComponent(docId)}/image`);
  }

  private headers(json: boolean): Record<string, string> {
    const headers: Record<string, string> = {};
    if (json) headers["Content-Type"] = "application/json";
    if (this.apiToken) headers["X-API-Token"] = this.apiToken;
    return headers;
  }

  private async request(
    method: "GET" | "POST",
    path: string,
    body?: string,
    signal?: AbortSignal,
  ): Promise<{ status: number; text: string }> {
    let response: Response;
    try {
      response = await this.fetchImpl(this.resolve(path), {
        method,
        headers: this.headers(body !== undefined),
        body,
        signal,
      });
    } catch (cause) {
      if (isAbortError(cause)) throw cause;
      throw new ServiceUnreachable(this.baseUrl, cause);
    }
    const text = await response.text();
    if (!response.ok) {
      const envelope = errorEnvelopeSchema.safeParse(safeJson(text));
      if (envelope.success) {
        const e = envelope.data.error;
        throw new ApiError(response.status, e.code, e.type, e.message, e.step);
      }
      throw new ApiError(response.status, "HTTP_ERROR", "HttpError", text || response.statusText);
    }
    return { status: response.status, text };
  }

  async health(): Promise<{ status: string; index_docs: number }> {
    const { text } = await this.request("GET", "/api/health");
    return z
      .object({ status: z.string(), index_docs: z.number().int() })
      .parse(JSON.parse(text));
  }

  async vocabulary(): Promise<Vocabulary> {
    const { text } = await this.request("GET", "/api/attributes");
    return vocabularySchema.parse(JSON.parse(text));
  }

  async promptPreview(
    selection: AttributeSelection,
    signal?: AbortSignal,
  ): Promise<PromptPreview> {
    const body = JSON.stringify({
      positives: selection.positives,
      negatives: selection.negatives,
    });
    const { text } = await this.request("POST", "/api/prompt", body, signal);
    return promptPreviewSchema.parse(JSON.parse(text));
  }

  /**
   * Canonical body for POST /api/generate. Key order and whitespace are
   * fixed so equal specs serialize to equal bytes.
   */
  buildGenerateBody(spec: GenerateSpec): string {
    return JSON.stringify({
      attribute_query: {
        positives: [...spec.selection.positives].sort(),
        negatives: [...spec.selection.negatives].sort(),
      },
      num_candidates: spec.numCandidates,
      seed: spec.seed,
    });
  }

  async generateRaw(body: string, signal?: AbortSignal): Promise<GenerateResult> {
    const { text } = await this.request("POST", "/api/generate", body, signal);
    return generateResultSchema.parse(JSON.parse(text));
  }

  async generate(spec: GenerateSpec, signal?: AbortSignal): Promise<GenerateResult> {
    return this.generateRaw(this.buildGenerateBody(spec), signal);
  }

  /**
   * Canonical body for POST /api/retrieve, same determinism contract as
   * buildGenerateBody. History stores this exact string for replay.
   */
  buildRetrieveBody(spec: RetrieveSpec): string {
    return JSON.stringify({
      attribute_query: {
        positives: [...spec.selection.positives].sort(),
        negatives: [...spec.selection.negatives].sort(),
      },
      measure: spec.measure,
      k: spec.k,
      num_candidates: spec.numCandidates,
      candidate_selection: spec.candidateSelection,
      aggregation: spec.aggregation,
      seed: spec.seed,
    });
  }

  async retrieveRaw(body: string, signal?: AbortSignal): Promise<RetrieveResult> {
    const { text } = await this.request("POST", "/api/retrieve", body, signal);
    const parsed = retrievePayloadSchema.parse(JSON.parse(text));
    const dissimilarityText = rawNumberLiterals(text, "dissimilarity");
    if (dissimilarityText.length !== parsed.results.length) {
      throw new Error(
        `payload carries ${parsed.results.length} results but ` +
          `${dissimilarityText.length} dissimilarity literals`,
      );
    }
    return { raw: text, parsed, dissimilarityText };
  }

  async retrieve(spec: RetrieveSpec, signal?: AbortSignal): Promise<RetrieveResult> {
    return this.retrieveRaw(this.buildRetrieveBody(spec), signal);
  }
}

function safeJson(text: string): unknown {
  try {
    return JSON.parse(text);
  } catch {
    return undefined;
  }
}

/** True for a cancelled fetch, whichever environment produced it. */
export function isAbortError(failure: unknown): boolean {
  return (
    failure instanceof Error && failure.name === "AbortError"
  ) || (failure instanceof DOMException && failure.name === "AbortError");
}
