/** Typed client for the session HTTP API (see docs/api.md in the repo root). */

export interface StepPayload {
  text?: string;
  tier?: string;
  strategy?: string;
  top_k?: number;
  [key: string]: unknown;
}

export interface StepRecord {
  id: string;
  kind: 'search' | 'action' | 'write';
  description: string;
  payload?: StepPayload | null;
  depends_on?: string[];
}

export interface PlanRecord {
  id: string;
  query: string;
  status: string;
  steps: StepRecord[];
}

export interface EventRecord {
  seq: number;
  kind: string;
  payload: Record<string, unknown>;
}

export interface ClarificationRecord {
  question: string;
  missing: string[];
}

export interface SessionRecord {
  session_id: string;
  query: string;
  state: string;
  plan: PlanRecord | null;
  clarification: ClarificationRecord | null;
  report: ReportRecord | null;
  events: EventRecord[];
  failure: string | null;
}

export interface CitationRecord {
  marker: number;
  pid: string;
  ref: string;
}

export interface ReportRecord {
  title: string;
  mode: string;
  sections: { heading: string; body: string }[];
  citations: CitationRecord[];
  check_log: { claim: string; status: string; evidence: string[] }[];
}

export interface ObjectRecord {
  pid: string;
  kind: string;
  explicit_meta: {
    title: string;
    source: string;
    timestamp: string;
    media_type: string;
    domain: string;
    labels: string[];
  };
  [key: string]: unknown;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function parseDetail(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { detail?: string };
    return body.detail ?? response.statusText;
  } catch {
    return response.statusText;
  }
}

export class ApiClient {
  constructor(readonly base: string = '') {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(`${this.base}${path}`, {
      headers: { 'Content-Type': 'application/json' },
      ...init,
    });
    if (!response.ok) {
      throw new ApiError(response.status, await parseDetail(response));
    }
    return (await response.json()) as T;
  }

  createSession(query: string): Promise<{ session_id: string; state: string }> {
    return this.request('/sessions', { method: 'POST', body: JSON.stringify({ query }) });
  }

  getSession(sessionId: string): Promise<SessionRecord> {
    return this.request(`/sessions/${sessionId}`);
  }

  clarify(sessionId: string, answer: string): Promise<{ session_id: string; state: string }> {
    return this.request(`/sessions/${sessionId}/clarify`, {
      method: 'POST',
      body: JSON.stringify({ answer }),
    });
  }

  confirm(
    sessionId: string,
    steps?: StepRecord[],
  ): Promise<{ session_id: string; state: string }> {
    const body = steps === undefined ? {} : { steps };
    return this.request(`/sessions/${sessionId}/confirm`, {
      method: 'POST',
      body: JSON.stringify(body),
    });
  }

  getObject(pid: string): Promise<ObjectRecord> {
    return this.request<{ object: ObjectRecord }>(`/objects/${pid}`).then((r) => r.object);
  }

  async reportMarkdown(sessionId: string): Promise<string> {
    const response = await fetch(`${this.base}/reports/${sessionId}`);
    if (!response.ok) {
      throw new ApiError(response.status, await parseDetail(response));
    }
    return response.text();
  }

  eventsUrl(sessionId: string): string {
    return `${this.base}/sessions/${sessionId}/events`;
  }
}
