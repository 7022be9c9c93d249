/**
 * Thin fetch-based client for the questionnaire service.
 *
 * Every call is a single stateless HTTP exchange; errors are normalized
 * into typed exceptions so the UI can distinguish "the service rejected
 * this history" from "the service is unreachable".
 */

import type {
  AnswerItem,
  ConflictingAnswer,
  HealthResponse,
  NextResponse,
  TaxonomyEntry,
} from "./protocol.js";

/** The service answered with an error status, or could not be reached. */
export class ServiceError extends Error {
  constructor(
    message: string,
    /** HTTP status, or null when the request never reached the service. */
    readonly status: number | null,
    /** Parsed response body, when one was readable. */
    readonly detail: unknown = null,
  ) {
    super(message);
    this.name = "ServiceError";
  }
}

/** 422: the posted history contradicts itself. */
export class ConflictError extends ServiceError {
  constructor(
    message: string,
    readonly conflictingAnswers: ConflictingAnswer[],
  ) {
    super(message, 422);
    this.name = "ConflictError";
  }
}

function conflictFromDetail(detail: unknown): ConflictError | null {
  if (typeof detail !== "object" || detail === null) return null;
  const body = detail as { message?: unknown; conflictingAnswers?: unknown };
  if (typeof body.message !== "string" || !Array.isArray(body.conflictingAnswers)) {
    return null;
  }
  return new ConflictError(body.message, body.conflictingAnswers as ConflictingAnswer[]);
}

export class ServiceClient {
  readonly baseUrl: string;
  private readonly fetchFn: typeof fetch;

  constructor(baseUrl: string, fetchFn: typeof fetch = globalThis.fetch) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchFn = fetchFn;
  }

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    } catch (cause) {
      throw new ServiceError(
        `service unreachable at ${this.baseUrl || "this origin"}`,
        null,
        cause,
      );
    }
    let body: unknown = null;
    try {
      body = await response.json();
    } catch {
      // Non-JSON bodies fall through with the status alone.
    }
    if (!response.ok) {
      const detail = (body as { detail?: unknown } | null)?.detail;
      if (response.status === 422) {
        const conflict = conflictFromDetail(detail);
        if (conflict !== null) throw conflict;
      }
      const message = typeof detail === "string" ? detail : `request failed (${response.status})`;
      throw new ServiceError(message, response.status, detail ?? body);
    }
    return body;
  }

  health(): Promise<HealthResponse> {
    return this.request("/api/v1/health") as Promise<HealthResponse>;
  }

  diagnoses(): Promise<TaxonomyEntry[]> {
    return this.request("/api/v1/diagnoses") as Promise<TaxonomyEntry[]>;
  }

  next(answers: readonly AnswerItem[]): Promise<NextResponse> {
    return this.request("/api/v1/next", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ answers }),
    }) as Promise<NextResponse>;
  }
}
