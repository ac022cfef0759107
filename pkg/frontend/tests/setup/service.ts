/** Global setup: builds a small planted lake with the Python pipeline and
 * serves it, so the integration suite exercises the real HTTP surface.
 * Set CROSSLAKE_SKIP_INTEGRATION=1 to run only the unit tests. */

import { execFileSync, spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";
import type { GlobalSetupContext } from "vitest/node";

const REPO_ROOT = resolve(__dirname, "..", "..", "..");

const LAKE_SPEC = {
  seed: 2,
  n_base_tables: 6,
  rows_per_table: 50,
  n_docs: 36,
  doc_words: 30,
  doc_table_affinity: 0.9,
  vocab_per_table: 24,
  distractor_vocab: 120,
  n_fk_tables: 6,
  unionable_families: 6,
  projections_per_family: 2,
};

const CONFIG_FLAGS = [
  "--seed", "6",
  "--set", "sample_fraction=0.5",
  "--set", "batch_fraction=0.3",
  "--set", "max_epochs=60",
];

function cli(args: string[]): void {
  execFileSync("python3", ["-m", "crosslake.cli", ...args], {
    cwd: REPO_ROOT,
    stdio: ["ignore", "pipe", "pipe"],
  });
}

async function waitForHealth(url: string, child: ChildProcess): Promise<void> {
  const deadline = Date.now() + 60_000;
  for (;;) {
    if (child.exitCode !== null) {
      throw new Error(`service exited early with code ${child.exitCode}`);
    }
    try {
      const resp = await fetch(`${url}/health`);
      if (resp.ok) {
        return;
      }
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) {
      throw new Error("service did not become healthy in 60s");
    }
    await new Promise((r) => setTimeout(r, 300));
  }
}

export default async function setup({ provide }: GlobalSetupContext) {
  if (process.env.CROSSLAKE_SKIP_INTEGRATION) {
    provide("serviceUrl", "");
    return () => {};
  }
  const root = mkdtempSync(join(tmpdir(), "crosslake-ui-"));
  const lakeDir = join(root, "lake");
  const workDir = join(root, "work");
  const specPath = join(root, "lakespec.json");
  writeFileSync(specPath, JSON.stringify(LAKE_SPEC));

  cli(["gen-lake", "--spec", specPath, "--out", lakeDir]);
  cli(["ingest", "--lake", lakeDir, "--workdir", workDir, ...CONFIG_FLAGS]);
  cli(["profile", "--lake", lakeDir, "--workdir", workDir]);
  cli(["index", "--workdir", workDir]);
  cli(["labels", "--workdir", workDir]);
  cli(["train", "--workdir", workDir]);
  cli(["ekg", "--workdir", workDir]);

  const port = 8300 + Math.floor(Math.random() * 500);
  const url = `http://127.0.0.1:${port}`;
  const child = spawn(
    "python3",
    ["-m", "crosslake.cli", "serve", "--workdir", workDir, "--port", String(port)],
    { cwd: REPO_ROOT, stdio: ["ignore", "pipe", "pipe"] },
  );
  await waitForHealth(url, child);
  provide("serviceUrl", url);
  return () => {
    child.kill("SIGTERM");
  };
}

declare module "vitest" {
  export interface ProvidedContext {
    serviceUrl: string;
  }
}
