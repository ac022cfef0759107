import type { ApiClient, QueryResult } from "./api.js";
import type { DrsItem, DrsResponse, LakeSummary } from "./types.js";

/** Which follow-up operations a selected element supports. */
export const OPS_BY_KIND: Record<string, string[]> = {
  document: ["crossModal_search", "neighbors"],
  table: ["pkfk", "unionable", "neighbors"],
  column: ["neighbors"],
};

export class IncompatibleSelection extends Error {
  constructor(kind: string, op: string) {
    super(`a ${kind} selection cannot feed ${op}`);
    this.name = "IncompatibleSelection";
  }
}

export function prefillParams(
  op: string,
  selected: DrsItem,
): Record<string, unknown> {
  switch (op) {
    case "crossModal_search":
      return { value: selected.id, topn: 3 };
    case "pkfk":
      return { value: selected.id, topn: 2 };
    case "unionable":
      return { value: selected.id, topn: 2 };
    case "neighbors":
      return { de: selected.id, relations: [], k: 10 };
    default:
      throw new Error(`no parameter prefill for ${op}`);
  }
}

export interface PipelineStep {
  index: number;
  op: string;
  params: Record<string, unknown>;
  drs: DrsResponse;
  rawBody: string;
  scoreLiterals: string[];
  selected?: { id: string; kind: string };
  parentStep?: number;
}

export interface ExportedSession {
  version: 1;
  summary: LakeSummary | null;
  steps: Array<{
    index: number;
    op: string;
    params: Record<string, unknown>;
    drs: DrsResponse;
    selected?: { id: string; kind: string };
    parentStep?: number;
  }>;
}

/** The analyst's chained exploration: every step derives from a prior
 * step's selection or fresh input, and the whole chain serializes for
 * replay. Purely client-side state; the engine is never mutated. */
export class SessionPipeline {
  steps: PipelineStep[] = [];
  summary: LakeSummary | null = null;

  constructor(private readonly client: ApiClient) {}

  async loadSummary(): Promise<LakeSummary> {
    this.summary = await this.client.summary();
    return this.summary;
  }

  /** Runs one discovery primitive; a failed call leaves the pipeline
   * unchanged so the caller can offer a retry. */
  async submitQuery(
    op: string,
    params: Record<string, unknown>,
    parentStep?: number,
  ): Promise<PipelineStep> {
    const result: QueryResult = await this.client.query(op, params);
    const step: PipelineStep = {
      index: this.steps.length,
      op,
      params,
      drs: result.drs,
      rawBody: result.rawBody,
      scoreLiterals: result.scoreLiterals,
      parentStep,
    };
    this.steps.push(step);
    return step;
  }

  selectItem(stepIndex: number, itemId: string): DrsItem {
    const step = this.steps[stepIndex];
    if (!step) {
      throw new Error(`no step ${stepIndex}`);
    }
    const item = step.drs.items.find((i) => i.id === itemId);
    if (!item) {
      throw new Error(`item ${itemId} not in step ${stepIndex}`);
    }
    step.selected = { id: item.id, kind: item.kind };
    return item;
  }

  opsForSelection(stepIndex: number, itemId: string): string[] {
    const step = this.steps[stepIndex];
    const item = step?.drs.items.find((i) => i.id === itemId);
    if (!item) {
      return [];
    }
    return OPS_BY_KIND[item.kind] ?? ["neighbors"];
  }

  /** Pre-fills the next operation's parameters from a selected result and
   * submits it, recording the lineage edge between the steps. */
  async chainFromResult(
    stepIndex: number,
    itemId: string,
    nextOp: string,
  ): Promise<PipelineStep> {
    const item = this.selectItem(stepIndex, itemId);
    const allowed = OPS_BY_KIND[item.kind] ?? ["neighbors"];
    if (!allowed.includes(nextOp)) {
      throw new IncompatibleSelection(item.kind, nextOp);
    }
    return this.submitQuery(nextOp, prefillParams(nextOp, item), stepIndex);
  }

  exportSession(): string {
    const payload: ExportedSession = {
      version: 1,
      summary: this.summary,
      steps: this.steps.map((s) => ({
        index: s.index,
        op: s.op,
        params: s.params,
        drs: s.drs,
        selected: s.selected,
        parentStep: s.parentStep,
      })),
    };
    return JSON.stringify(payload, null, 1);
  }

  static importSession(json: string): ExportedSession {
    const parsed = JSON.parse(json) as ExportedSession;
    if (parsed.version !== 1 || !Array.isArray(parsed.steps)) {
      throw new Error("not a crosslake session export");
    }
    return parsed;
  }

  /** Re-executes every exported step's recorded operation and returns the
   * fresh responses, in step order. */
  async replaySession(exported: ExportedSession): Promise<DrsResponse[]> {
    const out: DrsResponse[] = [];
    for (const step of exported.steps) {
      const result = await this.client.query(step.op, step.params);
      out.push(result.drs);
    }
    return out;
  }
}
