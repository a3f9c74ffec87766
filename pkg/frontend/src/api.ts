import type {
  AdvanceResult,
  ErrorBody,
  ExperimentInfo,
  MonitorPayload,
  PostEventsResult,
  SessionCreated,
  SessionState,
  WireEvent,
} from "./wire.js";

/** A non-2xx response, decoded into the server's machine-readable body. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly body: ErrorBody,
  ) {
    super(`${body.reason}: ${body.message}`);
    this.name = "ApiError";
  }

  get reason(): string {
    return this.body.reason;
  }
}

type FetchFn = typeof fetch;

/**
 * Thin client over the experiment service. One instance per page; the
 * session token or experimenter key is attached per call so a monitor
 * page can also fetch images without a session.
 */
export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: FetchFn = fetch,
  ) {}

  async getExperiment(experimentId: string): Promise<ExperimentInfo> {
    return this.request("GET", `/api/experiments/${experimentId}`);
  }

  async createSession(
    experimentId: string,
    participantId: string,
  ): Promise<SessionCreated> {
    return this.request("POST", "/api/sessions", {
      body: { experiment_id: experimentId, participant_id: participantId },
    });
  }

  async getSession(sessionId: string, token: string): Promise<SessionState> {
    return this.request("GET", `/api/sessions/${sessionId}`, { token });
  }

  /** URL for an image variant; auth rides on headers, not the URL. */
  imageUrl(imageId: string, variant: "blurred" | "original"): string {
    return `${this.base}/api/images/${imageId}?variant=${variant}`;
  }

  async fetchImage(
    imageId: string,
    variant: "blurred" | "original",
    auth: { token?: string; experimenterKey?: string },
  ): Promise<Blob> {
    const response = await this.fetchFn(this.imageUrl(imageId, variant), {
      headers: this.headers(auth.token, auth.experimenterKey),
    });
    if (!response.ok) {
      throw new ApiError(response.status, (await response.json()) as ErrorBody);
    }
    return response.blob();
  }

  async postEvents(
    sessionId: string,
    token: string,
    events: WireEvent[],
  ): Promise<PostEventsResult> {
    return this.request("POST", `/api/sessions/${sessionId}/events`, {
      token,
      body: { events },
    });
  }

  async advance(
    sessionId: string,
    token: string,
    imageId: string,
    description?: string,
  ): Promise<AdvanceResult> {
    const body: Record<string, unknown> = { image_id: imageId };
    if (description !== undefined) body.description = description;
    return this.request("POST", `/api/sessions/${sessionId}/advance`, {
      token,
      body,
    });
  }

  async monitor(
    experimentId: string,
    imageId: string,
    experimenterKey: string,
  ): Promise<MonitorPayload> {
    return this.request("GET", `/api/monitor/${experimentId}/${imageId}`, {
      experimenterKey,
    });
  }

  private headers(token?: string, experimenterKey?: string): Record<string, string> {
    const headers: Record<string, string> = {};
    if (token) headers["X-Session-Token"] = token;
    if (experimenterKey) headers["X-Experimenter-Key"] = experimenterKey;
    return headers;
  }

  private async request<T>(
    method: string,
    path: string,
    opts: {
      token?: string;
      experimenterKey?: string;
      body?: unknown;
    } = {},
  ): Promise<T> {
    const headers = this.headers(opts.token, opts.experimenterKey);
    const init: RequestInit = { method, headers };
    if (opts.body !== undefined) {
      headers["Content-Type"] = "application/json";
      init.body = JSON.stringify(opts.body);
    }
    const response = await this.fetchFn(this.base + path, init);
    if (!response.ok) {
      throw new ApiError(response.status, (await response.json()) as ErrorBody);
    }
    return (await response.json()) as T;
  }
}
