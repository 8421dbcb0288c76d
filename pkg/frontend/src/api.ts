/** Thin typed client over the v1 JSON API. The fetch implementation is
 * injected so tests drive the client with recorded payloads. */

import type { AnswerResult, ErrorBody, ModelList, NextPayload, SessionView } from "./types";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** A non-2xx response carrying the service's {code, message, field?} body. */
export class ApiError extends Error {
  readonly status: number;
  readonly body: ErrorBody;

  constructor(status: number, body: ErrorBody) {
    super(`${body.code}: ${body.message}`);
    this.status = status;
    this.body = body;
  }
}

async function parse<T>(response: Response): Promise<T> {
  if (response.ok) {
    return (await response.json()) as T;
  }
  let body: ErrorBody;
  try {
    body = (await response.json()) as ErrorBody;
  } catch {
    body = { code: "bad_response", message: `HTTP ${response.status}` };
  }
  throw new ApiError(response.status, body);
}

export class ApiClient {
  private readonly base: string;
  private readonly fetchImpl: FetchLike;

  constructor(base: string, fetchImpl: FetchLike) {
    this.base = base.replace(/\/$/, "");
    this.fetchImpl = fetchImpl;
  }

  private get(path: string): Promise<Response> {
    return this.fetchImpl(`${this.base}${path}`, { method: "GET" });
  }

  private post(path: string, payload: unknown): Promise<Response> {
    return this.fetchImpl(`${this.base}${path}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  async listModels(): Promise<ModelList> {
    return parse(await this.get("/v1/models"));
  }

  async createSession(modelId: string, seed: number): Promise<string> {
    const out = await parse<{ session_id: string }>(
      await this.post("/v1/sessions", { model_id: modelId, seed }),
    );
    return out.session_id;
  }

  async getSession(sessionId: string): Promise<SessionView> {
    return parse(await this.get(`/v1/sessions/${sessionId}`));
  }

  async getNext(sessionId: string): Promise<NextPayload> {
    return parse(await this.get(`/v1/sessions/${sessionId}/next`));
  }

  async submitAnswer(
    sessionId: string,
    variable: string,
    value: number,
    version: number,
  ): Promise<AnswerResult> {
    return parse(
      await this.post(`/v1/sessions/${sessionId}/answers`, { variable, value, version }),
    );
  }
}
