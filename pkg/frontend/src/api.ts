import { extractScoreLiterals } from "./scores.js";
import type {
  DeDetail,
  DrsResponse,
  LakeSummary,
  Neighborhood,
  ProvenanceRecord,
} from "./types.js";

export type FetchLike = (
  url: string,
  init?: RequestInit,
) => Promise<Response>;

export class ApiRequestError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly ops?: string[],
  ) {
    super(message);
    this.name = "ApiRequestError";
  }
}

export interface QueryResult {
  drs: DrsResponse;
  rawBody: string;
  scoreLiterals: string[];
}

async function raise(status: number, rawBody: string): Promise<never> {
  let code = "unknown";
  let message = rawBody.slice(0, 200);
  let ops: string[] | undefined;
  try {
    const parsed = JSON.parse(rawBody);
    if (parsed.error) {
      code = parsed.error.code ?? code;
      message = parsed.error.message ?? message;
      ops = parsed.error.ops;
    }
  } catch {
    // non-JSON error body; keep the raw slice
  }
  throw new ApiRequestError(status, code, message, ops);
}

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`);
    const raw = await resp.text();
    if (!resp.ok) {
      await raise(resp.status, raw);
    }
    return JSON.parse(raw) as T;
  }

  private async postForDrs(path: string, body: unknown): Promise<QueryResult> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    const rawBody = await resp.text();
    if (!resp.ok) {
      await raise(resp.status, rawBody);
    }
    return {
      drs: JSON.parse(rawBody) as DrsResponse,
      rawBody,
      scoreLiterals: extractScoreLiterals(rawBody),
    };
  }

  query(op: string, params: Record<string, unknown>): Promise<QueryResult> {
    return this.postForDrs(`/query/${op}`, params);
  }

  replay(provenance: ProvenanceRecord[]): Promise<QueryResult> {
    return this.postForDrs("/replay", { provenance });
  }

  de(id: string): Promise<DeDetail> {
    return this.getJson<DeDetail>(`/de/${id}`);
  }

  neighborhood(id: string, depth: number): Promise<Neighborhood> {
    const q = new URLSearchParams({ id, depth: String(depth) });
    return this.getJson<Neighborhood>(`/graph/neighborhood?${q}`);
  }

  summary(): Promise<LakeSummary> {
    return this.getJson<LakeSummary>("/lake/summary");
  }

  health(): Promise<{ status: string }> {
    return this.getJson<{ status: string }>("/health");
  }
}
