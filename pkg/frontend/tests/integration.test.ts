/** End-to-end acceptance against a live service built by global setup.
 * Covers the full exploration chain (keyword search -> cross-modal ->
 * joinable -> unionable) driven exclusively through chain_from_result,
 * with every step verified against a direct HTTP replay, plus the
 * byte-match guarantee for displayed scores. */

import { beforeAll, describe, expect, inject, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { renderResultPanel } from "../src/render.js";
import { SessionPipeline, type PipelineStep } from "../src/session.js";
import type { DrsItem } from "../src/types.js";

const serviceUrl = inject("serviceUrl");
const live = describe.skipIf(!serviceUrl);

function firstOfKind(step: PipelineStep, kind: string, skip = 0): DrsItem {
  const matches = step.drs.items.filter((i) => i.kind === kind);
  const item = matches[Math.min(skip, matches.length - 1)];
  expect(item, `no ${kind} in step ${step.index}`).toBeDefined();
  return item;
}

function preferCatalog(step: PipelineStep): DrsItem {
  const tables = step.drs.items.filter((i) => i.kind === "table");
  return tables.find((t) => t.name.endsWith("_catalog")) ?? tables[0];
}

live("full exploration pipeline", () => {
  let client: ApiClient;

  beforeAll(() => {
    client = new ApiClient(serviceUrl);
  });

  async function pickKeyword(): Promise<string> {
    // mouse-only analog: open any document from a catalog search and take
    // a word from its snippet
    const result = await client.query("catalog_search", { value: "notes", k: 20 });
    const doc = result.drs.items.find((i) => i.kind === "document");
    expect(doc).toBeDefined();
    const detail = await client.de(doc!.id);
    const word = (detail.snippet ?? "")
      .split(/[^A-Za-z]+/)
      .find((w) => w.length > 3);
    expect(word).toBeDefined();
    return word!.toLowerCase();
  }

  async function verifyAgainstReplay(step: PipelineStep): Promise<void> {
    const direct = await client.query(step.op, step.params);
    expect(direct.drs.items).toEqual(step.drs.items);
    const replayed = await client.replay(step.drs.provenance);
    expect(replayed.drs.items).toEqual(step.drs.items);
  }

  it("chains Q1..Q5 with every step matching a direct HTTP replay", async () => {
    const pipeline = new SessionPipeline(client);
    await pipeline.loadSummary();
    const keyword = await pickKeyword();

    // Q1: keyword search over the text modality
    const q1 = await pipeline.submitQuery("content_search", {
      value: keyword, mode: "Text", k: 10,
    });
    expect(q1.drs.items.length).toBeGreaterThan(0);

    // Q2: tables related to the first returned document
    const doc1 = firstOfKind(q1, "document");
    const q2 = await pipeline.chainFromResult(q1.index, doc1.id, "crossModal_search");
    expect(q2.drs.items.length).toBeGreaterThan(0);

    // Q3: tables related to another returned document
    const doc2 = firstOfKind(q1, "document", 1);
    const q3 = await pipeline.chainFromResult(q1.index, doc2.id, "crossModal_search");
    expect(q3.drs.items.length).toBeGreaterThan(0);

    // Q4: tables joinable with a table selected from Q3
    const table1 = preferCatalog(q3);
    const q4 = await pipeline.chainFromResult(q3.index, table1.id, "pkfk");
    expect(q4.drs.items.length).toBeGreaterThan(0);

    // Q5: tables unionable with a table selected from Q4
    const table2 = preferCatalog(q4);
    const q5 = await pipeline.chainFromResult(q4.index, table2.id, "unionable");
    expect(q5.drs.items.length).toBeGreaterThan(0);

    expect(pipeline.steps).toHaveLength(5);
    for (const step of pipeline.steps) {
      await verifyAgainstReplay(step);
    }
    // lineage is recorded end to end
    expect(pipeline.steps.map((s) => s.parentStep)).toEqual(
      [undefined, 0, 0, 2, 3],
    );

    // exported session replays to identical DRSs
    const exported = SessionPipeline.importSession(pipeline.exportSession());
    const replayed = await pipeline.replaySession(exported);
    expect(replayed.map((d) => d.items)).toEqual(
      exported.steps.map((s) => s.drs.items),
    );
  });

  it("displays scores byte-identical to the service responses (20 queries)", async () => {
    const pipeline = new SessionPipeline(client);
    const keyword = await pickKeyword();
    const summaryDocs = await client.query("catalog_search", { value: "notes", k: 30 });
    const docs = summaryDocs.drs.items.filter((i) => i.kind === "document");
    const cols = (await client.query("content_search", {
      value: keyword, mode: "Tabular", k: 10,
    })).drs.items;
    const tables = (await client.query("crossModal_search", {
      value: docs[0].id, topn: 5,
    })).drs.items.filter((i) => i.kind === "table");

    const queries: Array<[string, Record<string, unknown>]> = [
      ["content_search", { value: keyword, mode: "Text", k: 10 }],
      ["content_search", { value: keyword, mode: "Tabular", k: 10 }],
      ["content_search", { value: keyword, mode: "Both", k: 10 }],
      ["catalog_search", { value: "notes", k: 10 }],
      ["catalog_search", { value: "catalog", k: 10 }],
    ];
    for (const doc of docs.slice(0, 6)) {
      queries.push(["crossModal_search", { value: doc.id, topn: 4 }]);
    }
    for (const table of tables.slice(0, 3)) {
      queries.push(["pkfk", { value: table.id, topn: 3 }]);
      queries.push(["unionable", { value: table.id, topn: 3 }]);
    }
    for (const col of cols.slice(0, 3)) {
      queries.push(["neighbors", { de: col.id, relations: [], k: 5 }]);
    }
    expect(queries.length).toBeGreaterThanOrEqual(20);

    let displayed = 0;
    for (const [op, params] of queries.slice(0, 20)) {
      const step = await pipeline.submitQuery(op, params);
      const html = renderResultPanel(step);
      expect(step.scoreLiterals).toHaveLength(step.drs.items.length);
      step.drs.items.forEach((item, i) => {
        const literal = step.scoreLiterals[i];
        // the literal is the exact wire token for this item...
        const spaced = step.rawBody.includes(`"score": ${literal}`);
        const compact = step.rawBody.includes(`"score":${literal}`);
        expect(spaced || compact).toBe(true);
        expect(Number(literal)).toBe(item.score);
        // ...and the panel shows those bytes verbatim
        expect(html).toContain(`<span class="score">${literal}</span>`);
        displayed += 1;
      });
    }
    expect(displayed).toBeGreaterThan(20);
  });

  it("shows the persisted edge breakdown in the neighborhood view", async () => {
    const summary = await client.summary();
    expect(summary.edges_by_relation.PkFk ?? 0).toBeGreaterThan(0);
    const keyword = await pickKeyword();
    const cols = (await client.query("content_search", {
      value: keyword, mode: "Tabular", k: 5,
    })).drs.items;
    const hood = await client.neighborhood(cols[0].id, 1);
    expect(hood.center).toBe(cols[0].id);
    for (const edge of hood.edges) {
      expect(Object.keys(edge.breakdown).length).toBeGreaterThan(0);
    }
  });
});
