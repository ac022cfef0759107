import type { PipelineStep } from "./session.js";
import type { DeDetail, DrsItem, Neighborhood } from "./types.js";

/** HTML builders. Scores are rendered from the raw response literals, so
 * the displayed digits are the service's bytes, not a client reprint. */

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

export function breakdownText(item: DrsItem): string {
  if (!item.breakdown) {
    return "";
  }
  return Object.entries(item.breakdown)
    .map(([signal, value]) => `${signal}=${value}`)
    .join("  ");
}

function itemSubtitle(item: DrsItem): string {
  if (item.kind === "column" && item.parent_table_name) {
    return ` <span class="sub">in ${escapeHtml(item.parent_table_name)}</span>`;
  }
  if (item.kind === "document" && item.snippet) {
    return ` <span class="sub">${escapeHtml(item.snippet.slice(0, 90))}</span>`;
  }
  return "";
}

export function renderResultPanel(step: PipelineStep): string {
  const rows = step.drs.items
    .map((item, i) => {
      const literal = step.scoreLiterals[i] ?? String(item.score);
      return (
        `<li class="result" data-step="${step.index}" data-id="${escapeHtml(item.id)}"` +
        ` data-kind="${escapeHtml(item.kind)}" title="${escapeHtml(breakdownText(item))}">` +
        `<span class="rank">${i + 1}.</span>` +
        `<span class="kind ${escapeHtml(item.kind)}">${escapeHtml(item.kind)}</span>` +
        `<span class="name">${escapeHtml(item.name)}</span>` +
        itemSubtitle(item) +
        `<span class="score">${escapeHtml(literal)}</span>` +
        `</li>`
      );
    })
    .join("");
  const paramText = escapeHtml(JSON.stringify(step.params));
  return (
    `<section class="panel" data-step="${step.index}">` +
    `<h3>#${step.index + 1} ${escapeHtml(step.op)}</h3>` +
    `<p class="params">${paramText}</p>` +
    (step.drs.items.length ? `<ol>${rows}</ol>` : `<p class="empty">no results</p>`) +
    `</section>`
  );
}

export function renderDeDetail(detail: DeDetail): string {
  const lines: string[] = [
    `<h3>${escapeHtml(detail.name)} <span class="kind">${escapeHtml(detail.kind)}</span></h3>`,
  ];
  if (detail.kind === "table" && detail.schema) {
    lines.push("<table><tr><th>column</th><th>type</th></tr>");
    for (const col of detail.schema) {
      lines.push(
        `<tr data-id="${escapeHtml(col.id)}"><td>${escapeHtml(col.name)}</td>` +
        `<td>${escapeHtml(col.inferred_type)}</td></tr>`,
      );
    }
    lines.push("</table>");
  }
  if (detail.kind === "column") {
    lines.push(
      `<p>in <b>${escapeHtml(detail.parent_table_name ?? "")}</b>, ` +
      `type ${escapeHtml(detail.inferred_type ?? "")}</p>`,
    );
    const samples = (detail.sample_values ?? []).map(escapeHtml).join(", ");
    lines.push(`<p class="samples">${samples}</p>`);
  }
  if (detail.kind === "document") {
    lines.push(`<p class="sub">${escapeHtml(detail.source ?? "")}</p>`);
    lines.push(`<p class="snippet">${escapeHtml(detail.snippet ?? "")}</p>`);
  }
  return `<div class="de-detail" data-id="${escapeHtml(detail.id)}">${lines.join("")}</div>`;
}

export function renderNeighborhood(hood: Neighborhood): string {
  const names = new Map(hood.nodes.map((n) => [n.id, n.name]));
  const byRelation = new Map<string, typeof hood.edges>();
  for (const edge of hood.edges) {
    const bucket = byRelation.get(edge.relation) ?? [];
    bucket.push(edge);
    byRelation.set(edge.relation, bucket);
  }
  const sections = [...byRelation.entries()]
    .sort(([a], [b]) => a.localeCompare(b))
    .map(([relation, edges]) => {
      const rows = edges
        .map((e) => {
          const tooltip = Object.entries(e.breakdown)
            .map(([k, v]) => `${k}=${v}`)
            .join("  ");
          return (
            `<li class="edge" title="${escapeHtml(tooltip)}">` +
            `<span class="node" data-id="${escapeHtml(e.src)}">${escapeHtml(names.get(e.src) ?? e.src)}</span>` +
            ` &rarr; ` +
            `<span class="node" data-id="${escapeHtml(e.dst)}">${escapeHtml(names.get(e.dst) ?? e.dst)}</span>` +
            ` <span class="weight">${e.weight}</span>` +
            `<button class="pin" data-id="${escapeHtml(e.dst)}">pin to pipeline</button>` +
            `</li>`
          );
        })
        .join("");
      return `<h4>${escapeHtml(relation)}</h4><ul>${rows}</ul>`;
    })
    .join("");
  return (
    `<div class="neighborhood" data-center="${escapeHtml(hood.center)}">` +
    `<h3>around ${escapeHtml(names.get(hood.center) ?? hood.center)} (depth ${hood.depth})</h3>` +
    (sections || "<p class='empty'>no edges</p>") +
    `</div>`
  );
}
