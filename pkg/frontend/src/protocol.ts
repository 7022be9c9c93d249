/**
 * Wire types for the questionnaire service's JSON protocol.
 *
 * These mirror the service's request and response bodies verbatim; the
 * client performs no inference of its own, so these shapes are the whole
 * vocabulary it speaks.
 */

/** One answered question, exactly as posted to the service. */
export interface AnswerItem {
  subject: string;
  value: string | number;
  topic: string;
  answer: boolean;
}

/** Body of POST /api/v1/next: the full answer history. */
export interface NextRequest {
  answers: AnswerItem[];
}

export type DiagnosisState = "compatible" | "notCompatible" | "undetermined";

export interface BoardEntry {
  id: string;
  name: string;
  state: DiagnosisState;
}

export interface QuestionPayload {
  subject: string;
  value: string | number;
  topic: string;
  text: string;
}

export interface QuestionCount {
  answered: number;
  candidatesRemaining: number;
}

export type ServiceStatus = "IN_PROGRESS" | "COMPLETED" | "STUCK";

export interface NextResponse {
  status: ServiceStatus;
  diagnoses: BoardEntry[];
  /** Present only while the status is IN_PROGRESS. */
  nextQuestion?: QuestionPayload;
  questionCount: QuestionCount;
}

/** One row of GET /api/v1/diagnoses; parent is null for chapter roots. */
export interface TaxonomyEntry {
  id: string;
  name: string;
  parent: string | null;
}

export interface HealthResponse {
  status: string;
  kbVersion: string;
}

/** Echo of one offending answer inside a 422 conflict response. */
export interface ConflictingAnswer extends AnswerItem {
  index: number;
}
