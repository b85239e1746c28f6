import {
  DecisionChoice,
  RunState,
  RunStateSchema,
  RunSummary,
  RunSummarySchema,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    message: string,
    public status: number,
    public details: string[] = []
  ) {
    super(message);
  }
}

async function errorOf(resp: Response): Promise<ApiError> {
  let message = `request failed (${resp.status})`;
  let details: string[] = [];
  try {
    const body = await resp.json();
    if (body.error) message = body.error;
    if (Array.isArray(body.details)) details = body.details;
  } catch {
    // non-JSON error body; keep the status message
  }
  if (resp.status === 409) message = "already decided";
  return new ApiError(message, resp.status, details);
}

export class ApiClient {
  constructor(private base: string, private token?: string) {}

  private postHeaders(): Record<string, string> {
    const h: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) h["Authorization"] = `Bearer ${this.token}`;
    return h;
  }

  async listRuns(): Promise<RunSummary[]> {
    const resp = await fetch(`${this.base}/runs`);
    if (!resp.ok) throw await errorOf(resp);
    return RunSummarySchema.array().parse(await resp.json());
  }

  async getRun(runId: string): Promise<RunState> {
    const resp = await fetch(`${this.base}/runs/${runId}`);
    if (!resp.ok) throw await errorOf(resp);
    return RunStateSchema.parse(await resp.json());
  }

  async createRun(body: {
    scenario: unknown;
    mode?: string;
    max_iterations?: number;
    qos_floor_mode?: boolean;
  }): Promise<RunSummary> {
    const resp = await fetch(`${this.base}/runs`, {
      method: "POST",
      headers: this.postHeaders(),
      body: JSON.stringify(body),
    });
    if (!resp.ok) throw await errorOf(resp);
    return RunSummarySchema.parse(await resp.json());
  }

  async decide(runId: string, choice: DecisionChoice): Promise<RunState> {
    const resp = await fetch(`${this.base}/runs/${runId}/decision`, {
      method: "POST",
      headers: this.postHeaders(),
      body: JSON.stringify({ choice }),
    });
    if (!resp.ok) throw await errorOf(resp);
    return RunStateSchema.parse(await resp.json());
  }

  async exportCsv(runId: string): Promise<string> {
    const resp = await fetch(`${this.base}/runs/${runId}/export?format=csv`);
    if (!resp.ok) throw await errorOf(resp);
    return resp.text();
  }
}
