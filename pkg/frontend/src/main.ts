import { ApiClient, ApiRequestError } from "./api.js";
import { renderDeDetail, renderNeighborhood, renderResultPanel, escapeHtml } from "./render.js";
import { SessionPipeline } from "./session.js";

/** Browser wiring: one pipeline per page, panels appended per step, every
 * follow-up launched by clicking a result and picking a compatible op. */

const state = {
  client: null as ApiClient | null,
  pipeline: null as SessionPipeline | null,
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing #${id}`);
  }
  return node as T;
}

function showError(message: string, retry?: () => void): void {
  const banner = el<HTMLDivElement>("error-banner");
  banner.innerHTML = `<span>${escapeHtml(message)}</span>`;
  if (retry) {
    const button = document.createElement("button");
    button.textContent = "retry";
    button.onclick = () => {
      banner.hidden = true;
      retry();
    };
    banner.appendChild(button);
  }
  banner.hidden = false;
}

function requirePipeline(): SessionPipeline {
  if (!state.pipeline) {
    throw new Error("connect to a service first");
  }
  return state.pipeline;
}

async function runQuery(op: string, params: Record<string, unknown>,
                        parentStep?: number): Promise<void> {
  const pipeline = requirePipeline();
  try {
    const step = await pipeline.submitQuery(op, params, parentStep);
    const holder = document.createElement("div");
    holder.innerHTML = renderResultPanel(step);
    el("pipeline").appendChild(holder.firstElementChild as HTMLElement);
  } catch (err) {
    const message = err instanceof ApiRequestError
      ? `${err.status} ${err.code}: ${err.message}`
      : String(err);
    showError(message, () => void runQuery(op, params, parentStep));
  }
}

function opMenu(stepIndex: number, itemId: string, anchor: HTMLElement): void {
  const pipeline = requirePipeline();
  const ops = pipeline.opsForSelection(stepIndex, itemId);
  document.querySelectorAll(".op-menu").forEach((n) => n.remove());
  const menu = document.createElement("div");
  menu.className = "op-menu";
  for (const op of ops) {
    const button = document.createElement("button");
    button.textContent = op;
    button.onclick = () => {
      menu.remove();
      void pipeline
        .chainFromResult(stepIndex, itemId, op)
        .then((step) => {
          const holder = document.createElement("div");
          holder.innerHTML = renderResultPanel(step);
          el("pipeline").appendChild(holder.firstElementChild as HTMLElement);
        })
        .catch((err) => showError(String(err)));
    };
    menu.appendChild(button);
  }
  const detail = document.createElement("button");
  detail.textContent = "detail";
  detail.onclick = () => {
    menu.remove();
    void showDetail(itemId);
  };
  menu.appendChild(detail);
  const graph = document.createElement("button");
  graph.textContent = "graph";
  graph.onclick = () => {
    menu.remove();
    void showNeighborhood(itemId, 1);
  };
  menu.appendChild(graph);
  anchor.appendChild(menu);
}

async function showDetail(id: string): Promise<void> {
  const client = state.client;
  if (!client) {
    return;
  }
  try {
    el("inspector").innerHTML = renderDeDetail(await client.de(id));
  } catch (err) {
    showError(String(err));
  }
}

async function showNeighborhood(id: string, depth: number): Promise<void> {
  const client = state.client;
  if (!client) {
    return;
  }
  try {
    el("inspector").innerHTML = renderNeighborhood(
      await client.neighborhood(id, depth),
    );
  } catch (err) {
    showError(String(err));
  }
}

function wire(): void {
  el<HTMLButtonElement>("connect").onclick = async () => {
    const base = el<HTMLInputElement>("base-url").value.replace(/\/$/, "");
    state.client = new ApiClient(base);
    state.pipeline = new SessionPipeline(state.client);
    try {
      const summary = await state.pipeline.loadSummary();
      el("summary").textContent =
        `${summary.tables} tables, ${summary.columns} columns, ` +
        `${summary.documents} documents` +
        (summary.joint_model ? ", joint model ready" : "");
    } catch (err) {
      showError(`cannot reach service: ${String(err)}`);
    }
  };

  el<HTMLButtonElement>("search").onclick = () => {
    const value = el<HTMLInputElement>("query-value").value;
    const mode = el<HTMLSelectElement>("query-mode").value;
    void runQuery("content_search", { value, mode, k: 10 });
  };
  el<HTMLButtonElement>("catalog-search").onclick = () => {
    const value = el<HTMLInputElement>("query-value").value;
    void runQuery("catalog_search", { value, k: 10 });
  };
  el<HTMLButtonElement>("text-cross").onclick = () => {
    const selection = window.getSelection()?.toString().trim();
    const value = selection || el<HTMLInputElement>("query-value").value;
    void runQuery("crossModal_search", { value, topn: 3 });
  };

  el("pipeline").addEventListener("click", (event) => {
    const target = (event.target as HTMLElement).closest(".result");
    if (!target) {
      return;
    }
    const stepIndex = Number(target.getAttribute("data-step"));
    const itemId = target.getAttribute("data-id") ?? "";
    opMenu(stepIndex, itemId, target as HTMLElement);
  });

  el("inspector").addEventListener("click", (event) => {
    const node = (event.target as HTMLElement).closest("[data-id]");
    if (!node) {
      return;
    }
    if ((event.target as HTMLElement).classList.contains("pin")) {
      // feed the pinned element into a fresh neighbors step
      void runQuery("neighbors", {
        de: node.getAttribute("data-id"),
        relations: [],
        k: 10,
      });
    } else {
      void showDetail(node.getAttribute("data-id") ?? "");
    }
  });

  el<HTMLButtonElement>("export").onclick = () => {
    const pipeline = requirePipeline();
    const blob = new Blob([pipeline.exportSession()], {
      type: "application/json",
    });
    const link = document.createElement("a");
    link.href = URL.createObjectURL(blob);
    link.download = "crosslake-session.json";
    link.click();
  };

  el<HTMLInputElement>("import").onchange = async (event) => {
    const input = event.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) {
      return;
    }
    const pipeline = requirePipeline();
    const exported = SessionPipeline.importSession(await file.text());
    const replayed = await pipeline.replaySession(exported);
    el("summary").textContent =
      `replayed ${replayed.length} steps from session export`;
  };
}

if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", wire);
}
