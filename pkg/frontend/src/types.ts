/** Wire types mirroring the service's published response bodies. */

export interface Citation {
  doc_id: string;
  span_id: number;
  title: string;
  similarity: number;
}

export interface SupportSpan {
  doc_id: string;
  span_id: number;
  offsets: [number, number];
}

export interface ClaimEvidenceRow {
  claim_id: number;
  claim_text: string;
  supports: SupportSpan[];
}

export interface TraceStep {
  from: string;
  to: string;
  event: string;
  timestamp: number;
  iteration_i: number;
}

export type Outcome = "answered" | "irrelevant" | "abstained";

export interface AskResponse {
  session_id: string;
  answer: string;
  abstained: boolean;
  confidence: number;
  citations: Citation[];
  disclaimer: string | null;
  outcome: Outcome;
  iteration_i: number;
  trace: TraceStep[];
  claim_evidence: ClaimEvidenceRow[];
}

export interface MissingEntry {
  canonical: string;
  title: string;
  tier: number;
  first_seen: string;
}

export interface MissingListResponse {
  entries: MissingEntry[];
}

export interface UploadResponse {
  status: "requeued" | "needs-manual-fix";
  document_status: string;
  canonical: string;
}

export interface SessionSummary {
  session_id: string;
  title: string;
  created_at: string;
  message_count: number;
}

export interface SessionsResponse {
  sessions: SessionSummary[];
}

export interface HealthResponse {
  status: string;
  stores: { index: number; sessions: number; missing_list: number };
}
