/**
 * Client-side session state machine.
 *
 * The ordered answer list is the single source of truth: every state
 * change (answering, undoing, importing a transcript) re-posts the full
 * list to the stateless service and adopts whatever comes back.  No
 * inference happens here.
 */

import { ConflictError, ServiceClient, ServiceError } from "./api.js";
import type {
  AnswerItem,
  ConflictingAnswer,
  NextResponse,
} from "./protocol.js";

export type Phase = "inProgress" | "completed" | "stuck" | "error";

export interface ConflictInfo {
  message: string;
  answers: ConflictingAnswer[];
}

export interface SessionState {
  answers: readonly AnswerItem[];
  lastResponse: NextResponse | null;
  phase: Phase;
  /** True while a request is in flight; at most one at a time. */
  busy: boolean;
  /** Human-readable problem description; set only in the error phase. */
  error: string | null;
  /** Conflicting answers echoed by a 422 response, if that is the error. */
  conflict: ConflictInfo | null;
  /** Ids whose board state changed in the most recent response. */
  changed: ReadonlySet<string>;
}

type Listener = (state: SessionState) => void;

function changedIds(
  previous: NextResponse | null,
  next: NextResponse,
): Set<string> {
  const changed = new Set<string>();
  if (previous === null) return changed;
  const before = new Map(previous.diagnoses.map((d) => [d.id, d.state]));
  for (const entry of next.diagnoses) {
    if (before.get(entry.id) !== entry.state) changed.add(entry.id);
  }
  return changed;
}

/** Parse transcript text, throwing a descriptive error on any bad shape. */
export function parseTranscript(text: string): AnswerItem[] {
  let data: unknown;
  try {
    data = JSON.parse(text);
  } catch {
    throw new Error("not a transcript: file is not valid JSON");
  }
  if (typeof data !== "object" || data === null || !Array.isArray((data as { answers?: unknown }).answers)) {
    throw new Error('not a transcript: expected {"answers": [...]}');
  }
  const answers = (data as { answers: unknown[] }).answers;
  return answers.map((item, index) => {
    const entry = item as Partial<AnswerItem>;
    if (
      typeof entry !== "object" ||
      entry === null ||
      typeof entry.subject !== "string" ||
      typeof entry.topic !== "string" ||
      !(typeof entry.value === "string" || typeof entry.value === "number") ||
      typeof entry.answer !== "boolean"
    ) {
      throw new Error(`not a transcript: answers[${index}] is malformed`);
    }
    return {
      subject: entry.subject,
      value: entry.value,
      topic: entry.topic,
      answer: entry.answer,
    };
  });
}

export class Session {
  private answers: AnswerItem[] = [];
  private lastResponse: NextResponse | null = null;
  private phase: Phase = "inProgress";
  private busy = false;
  private error: string | null = null;
  private conflict: ConflictInfo | null = null;
  private changed: Set<string> = new Set();
  private readonly listeners = new Set<Listener>();

  constructor(private readonly client: ServiceClient) {}

  get state(): SessionState {
    return {
      answers: [...this.answers],
      lastResponse: this.lastResponse,
      phase: this.phase,
      busy: this.busy,
      error: this.error,
      conflict: this.conflict,
      changed: this.changed,
    };
  }

  subscribe(listener: Listener): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private emit(): void {
    const snapshot = this.state;
    for (const listener of this.listeners) listener(snapshot);
  }

  /** Begin (or restart) a session by posting an empty history. */
  start(): Promise<void> {
    if (this.busy) return Promise.resolve();
    this.answers = [];
    this.lastResponse = null;
    return this.post();
  }

  /** Answer the currently shown question; ignored unless one is shown. */
  submitAnswer(answer: boolean): Promise<void> {
    const question = this.lastResponse?.nextQuestion;
    if (this.busy || this.phase !== "inProgress" || question === undefined) {
      return Promise.resolve();
    }
    this.answers.push({
      subject: question.subject,
      value: question.value,
      topic: question.topic,
      answer,
    });
    return this.post();
  }

  /** Remove the most recent answer and replay the shortened history. */
  undoLast(): Promise<void> {
    if (this.busy || this.answers.length === 0) return Promise.resolve();
    this.answers.pop();
    return this.post();
  }

  /** Re-post the current history unchanged (connectivity retry). */
  retry(): Promise<void> {
    if (this.busy) return Promise.resolve();
    return this.post();
  }

  /** The current history as the exact body POST /api/v1/next accepts. */
  exportTranscript(): string {
    return JSON.stringify({ answers: this.answers }, null, 2);
  }

  /**
   * Replace the history with a previously exported transcript and replay
   * it.  Throws without touching the session if the text is not a
   * transcript.
   */
  importTranscript(text: string): Promise<void> {
    const answers = parseTranscript(text);
    if (this.busy) return Promise.resolve();
    this.answers = answers;
    return this.post();
  }

  private async post(): Promise<void> {
    this.busy = true;
    this.error = null;
    this.conflict = null;
    this.emit();
    try {
      const response = await this.client.next(this.answers);
      this.changed = changedIds(this.lastResponse, response);
      this.lastResponse = response;
      this.phase =
        response.status === "COMPLETED"
          ? "completed"
          : response.status === "STUCK"
            ? "stuck"
            : "inProgress";
    } catch (err) {
      if (err instanceof ConflictError) {
        this.conflict = {
          message: err.message,
          answers: err.conflictingAnswers,
        };
        this.error = err.message;
      } else if (err instanceof ServiceError) {
        this.error = err.message;
      } else {
        this.error = String(err);
      }
      this.phase = "error";
    } finally {
      this.busy = false;
      this.emit();
    }
  }
}
