/**
 * Retrieval details panel: query editor plus the ranked fact list, each fact
 * showing its editable configuration, rendered chart, relevance and stance
 * badges, and the source sub-table the fact was extracted from.
 */

import type { FactPayloadDto, NodeFactsDto } from "./api.js";
import { renderChart } from "./charts.js";

export interface FactCardView {
  index: number;
  factType: string;
  configuration: { label: string; value: string }[];
  description: string;
  chartSvg: string;
  relevance: number;
  stanceLabel: string;
  stanceProbability: number;
  sourceColumns: string[];
  sourceRows: (string | number | null)[][];
  generatingQuery: string;
}

export interface DetailsView {
  nodeId: string;
  query: string;
  stance: string | null;
  facts: FactCardView[];
}

function clauseText(clauses: { field: string; value: string | number }[]): string {
  return clauses.map((c) => `${c.field} = ${c.value}`).join(", ") || "(none)";
}

export function buildFactCard(payload: FactPayloadDto): FactCardView {
  const fact = payload.fact;
  return {
    index: payload.index,
    factType: fact.type,
    configuration: [
      { label: "type", value: fact.type },
      {
        label: "measure",
        value: fact.measure.map((m) => `${m.aggregate}(${m.field})`).join(", "),
      },
      { label: "breakdown", value: fact.breakdown.join(", ") },
      { label: "subspace", value: clauseText(fact.subspace) },
      { label: "focus", value: clauseText(fact.focus) },
    ],
    description: payload.description,
    chartSvg: renderChart(payload.chart, payload.result),
    relevance: payload.relevance,
    stanceLabel: payload.evaluation.predicted_label,
    stanceProbability: Math.max(
      payload.evaluation.support_prob,
      payload.evaluation.oppose_prob,
    ),
    sourceColumns: payload.source.fields.map((f) => f.name),
    sourceRows: payload.source.rows,
    generatingQuery: payload.source.generating_query,
  };
}

export function buildDetailsView(facts: NodeFactsDto): DetailsView {
  return {
    nodeId: facts.node_id,
    query: facts.query,
    stance: facts.stance,
    facts: facts.facts.map(buildFactCard),
  };
}

const escapeHtml = (text: string) =>
  text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;").replace(/"/g, "&quot;");

export function renderDetailsHtml(view: DetailsView): string {
  const cards = view.facts
    .map((card) => {
      const config = card.configuration
        .map(
          (row) =>
            `<div class="config-row" data-field="${row.label}"><span>${row.label}</span>` +
            `<code>${escapeHtml(row.value)}</code></div>`,
        )
        .join("");
      const header = [...card.sourceColumns.map((c) => `<th>${escapeHtml(c)}</th>`)].join("");
      const rows = card.sourceRows
        .map(
          (row) =>
            `<tr>${row.map((cell) => `<td>${escapeHtml(cell === null ? ".." : String(cell))}</td>`).join("")}</tr>`,
        )
        .join("");
      return (
        `<article class="fact-card" data-fact-index="${card.index}">` +
        `<header><span class="badge stance-${card.stanceLabel}">${card.stanceLabel} ${(card.stanceProbability * 100).toFixed(0)}%</span>` +
        `<span class="badge relevance">relevance ${(card.relevance * 100).toFixed(0)}%</span>` +
        `<button class="add-to-editor" data-fact-index="${card.index}">add to editor</button></header>` +
        `<section class="fact-config">${config}</section>` +
        `<section class="fact-chart">${card.chartSvg}</section>` +
        `<p class="fact-description">${escapeHtml(card.description)}</p>` +
        `<details class="fact-source"><summary>Data source</summary>` +
        `<code class="generating-query">${escapeHtml(card.generatingQuery)}</code>` +
        `<table><thead><tr>${header}</tr></thead><tbody>${rows}</tbody></table></details>` +
        `</article>`
      );
    })
    .join("");
  return (
    `<div class="details" data-node-id="${view.nodeId}">` +
    `<section class="query-editor"><label>Query</label>` +
    `<input class="query-input" value="${escapeHtml(view.query)}"/>` +
    `<button class="retrieve-button">Retrieve</button>` +
    `<p class="edit-error" hidden></p></section>` +
    `<section class="fact-list">${cards || '<p class="empty">No facts for this node.</p>'}</section>` +
    `</div>`
  );
}
