/** Typed client for the judging-session HTTP API. */

export interface TripletItem {
  position: "A" | "B" | "C";
  token: string;
}

export interface TripletView {
  done: false;
  triplet_id: string;
  items: TripletItem[];
  judged: number;
  total: number;
}

export interface DoneView {
  done: true;
  judged: number;
  total: number;
}

export type NextResponse = TripletView | DoneView;

export interface ScoreResponse {
  score: number | null;
  ci95: [number, number] | null;
  judged: number;
}

export interface JudgmentPayload {
  evaluator_id: string;
  triplet_id: string;
  consistent: boolean;
  perceived_order?: string[];
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

export class ConflictError extends ApiError {
  constructor(message: string) {
    super(409, message);
  }
}

async function request<T>(input: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(input, {
    headers: { "content-type": "application/json" },
    ...init,
  });
  if (resp.status === 409) {
    throw new ConflictError(await resp.text());
  }
  if (!resp.ok) {
    throw new ApiError(resp.status, await resp.text());
  }
  return (await resp.json()) as T;
}

export class SessionApi {
  constructor(readonly baseUrl: string = "") {}

  fetchNext(sessionId: string, evaluatorId: string): Promise<NextResponse> {
    const q = new URLSearchParams({ evaluator: evaluatorId });
    return request<NextResponse>(
      `${this.baseUrl}/sessions/${encodeURIComponent(sessionId)}/next?${q}`,
    );
  }

  submitJudgment(sessionId: string, payload: JudgmentPayload): Promise<ScoreResponse> {
    return request<ScoreResponse>(
      `${this.baseUrl}/sessions/${encodeURIComponent(sessionId)}/judgments`,
      { method: "POST", body: JSON.stringify(payload) },
    );
  }

  fetchScore(sessionId: string): Promise<ScoreResponse> {
    return request<ScoreResponse>(
      `${this.baseUrl}/sessions/${encodeURIComponent(sessionId)}/score`,
    );
  }

  /** Streaming URL for one presented item; tokens are opaque by design. */
  audioUrl(token: string): string {
    return `${this.baseUrl}/audio/${encodeURIComponent(token)}`;
  }
}
