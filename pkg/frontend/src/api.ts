// Typed client for the leafrx HTTP API. The console consumes these payloads
// verbatim: all ordering, severity and grounding decisions are the server's.

export interface HealthPayload {
  status: string;
  store_records: number;
}

export interface GroundedAnswerPayload {
  text: string;
  citations: string[];
  grounding_score: number;
  grounded: boolean;
  model_id: string;
}

export interface SearchHitPayload {
  record_id: number;
  chunk_id: string;
  score: number;
  text: string;
}

export interface RetrievalPayload {
  query_text: string;
  hits: SearchHitPayload[];
}

export interface DiseaseSectionPayload {
  label: string;
  max_confidence: number;
  finding_count: number;
  severity: string;
  answer: GroundedAnswerPayload;
}

export interface RecommendationReportPayload {
  image_id: string;
  generated_at: string;
  overall_status: string;
  sections: DiseaseSectionPayload[];
}

export interface AskResponsePayload {
  session_id: string;
  answer: GroundedAnswerPayload;
  retrieval: RetrievalPayload;
}

export interface TranscriptTurnPayload {
  question: string;
  answer: GroundedAnswerPayload;
  retrieval: RetrievalPayload;
}

export interface TranscriptPayload {
  session_id: string;
  turns: TranscriptTurnPayload[];
}

export interface IngestSummaryPayload {
  added: number;
  chunks: number;
  failed: number;
  failures: { source: string; reason: string }[];
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
    this.name = 'ApiError';
  }
}

async function errorDetail(response: Response): Promise<string> {
  try {
    const body = await response.json();
    if (body && typeof body.detail === 'string') return body.detail;
  } catch {
    // non-JSON error body; fall through to the status line
  }
  return `HTTP ${response.status}`;
}

export class LeafrxApi {
  private fetchFn: FetchLike;

  constructor(
    private baseUrl: string,
    fetchFn?: FetchLike,
    private apiKey?: string,
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, '');
    this.fetchFn = fetchFn ?? ((input, init) => globalThis.fetch(input, init));
  }

  private headers(): Record<string, string> {
    const headers: Record<string, string> = { 'Content-Type': 'application/json' };
    if (this.apiKey) headers['x-api-key'] = this.apiKey;
    return headers;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, {
      ...init,
      headers: { ...this.headers(), ...(init?.headers ?? {}) },
    });
    if (!response.ok) {
      throw new ApiError(response.status, await errorDetail(response));
    }
    if (response.status === 204) return undefined as T;
    return response.json() as Promise<T>;
  }

  health(): Promise<HealthPayload> {
    return this.request('/healthz');
  }

  /** POST the raw DetectionReport JSON; returns the fused recommendation. */
  diagnose(detectionReportJson: string): Promise<RecommendationReportPayload> {
    return this.request('/diagnose', { method: 'POST', body: detectionReportJson });
  }

  async createSession(): Promise<string> {
    const body = await this.request<{ session_id: string }>('/sessions', { method: 'POST' });
    return body.session_id;
  }

  ask(sessionId: string, question: string): Promise<AskResponsePayload> {
    return this.request(`/sessions/${sessionId}/ask`, {
      method: 'POST',
      body: JSON.stringify({ question }),
    });
  }

  transcript(sessionId: string): Promise<TranscriptPayload> {
    return this.request(`/sessions/${sessionId}`);
  }

  feedback(text: string): Promise<void> {
    return this.request('/feedback', { method: 'POST', body: JSON.stringify({ text }) });
  }
}
