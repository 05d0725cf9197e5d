/**
 * Retrieval space: node view models and SVG rendering of the mind map.
 *
 * Cards carry data attributes (node id, stance) so the app shell can wire
 * click-to-expand and double-click-to-inspect with event delegation; the
 * recommended node gets a distinct border; edges show the editable query
 * keywords.
 */

import type { Stance, TreeDto } from "./api.js";
import { fillForNode, radiusForRelevance, Side } from "./encoding.js";
import { layoutTree, PlacedEdge } from "./layout.js";

export interface NodeView {
  id: string;
  x: number;
  y: number;
  side: Side;
  fill: string;
  radius: number;
  recommendedBorder: boolean;
  edgeLabel: string;
  stance: Stance | null;
  query: string;
  status: string;
  collapsed: boolean;
}

export interface SpaceView {
  nodes: NodeView[];
  edges: PlacedEdge[];
  width: number;
  height: number;
}

export interface SpaceOptions {
  collapsed?: Set<string>;
  dragOffsets?: Map<string, { dx: number; dy: number }>;
}

function visibleSubset(tree: TreeDto, collapsed: Set<string>): Set<string> {
  const visible = new Set<string>();
  const walk = (id: string) => {
    visible.add(id);
    if (collapsed.has(id)) return;
    for (const child of tree.edges[id] ?? []) walk(child);
  };
  if (tree.nodes["n0"]) walk("n0");
  return visible;
}

/** Build the scene: positions from the layout, visuals from the encodings. */
export function buildSpaceView(tree: TreeDto, options: SpaceOptions = {}): SpaceView {
  const collapsed = options.collapsed ?? new Set();
  const offsets = options.dragOffsets ?? new Map();
  const visible = visibleSubset(tree, collapsed);
  const layout = layoutTree(tree);
  const nodes: NodeView[] = [];
  for (const placed of layout.nodes) {
    if (!visible.has(placed.node.id)) continue;
    const offset = offsets.get(placed.node.id) ?? { dx: 0, dy: 0 };
    nodes.push({
      id: placed.node.id,
      x: placed.x + offset.dx,
      y: placed.y + offset.dy,
      side: placed.side,
      fill: fillForNode(placed.node.stance, placed.node.node_stance_prob),
      radius: radiusForRelevance(placed.node.node_relevance),
      recommendedBorder: placed.node.recommended,
      edgeLabel: placed.node.direction,
      stance: placed.node.stance,
      query: placed.node.query,
      status: placed.node.status,
      collapsed: collapsed.has(placed.node.id),
    });
  }
  const edges = layout.edges.filter(
    (edge) => visible.has(edge.from) && visible.has(edge.to) && !collapsed.has(edge.from),
  );
  const xs = nodes.map((n) => Math.abs(n.x));
  const ys = nodes.map((n) => Math.abs(n.y));
  const width = 2 * (Math.max(...xs, 0) + 160);
  const height = 2 * (Math.max(...ys, 0) + 120);
  return { nodes, edges, width, height };
}

const escapeXml = (text: string) =>
  text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;").replace(/"/g, "&quot;");

function truncate(text: string, limit: number): string {
  return text.length <= limit ? text : `${text.slice(0, limit - 1)}…`;
}

export function renderSpaceSvg(view: SpaceView): string {
  const byId = new Map(view.nodes.map((n) => [n.id, n]));
  const half = { x: view.width / 2, y: view.height / 2 };
  const edgeMarkup = view.edges
    .map((edge) => {
      const from = byId.get(edge.from);
      const to = byId.get(edge.to);
      if (!from || !to) return "";
      const midX = (from.x + to.x) / 2 + half.x;
      const midY = (from.y + to.y) / 2 + half.y;
      return (
        `<g class="edge" data-from="${edge.from}" data-to="${edge.to}">` +
        `<line x1="${from.x + half.x}" y1="${from.y + half.y}" x2="${to.x + half.x}" y2="${to.y + half.y}" stroke="#b9c2cc" stroke-width="1.5"/>` +
        `<text class="edge-label" data-node-id="${edge.to}" x="${midX}" y="${midY - 6}" text-anchor="middle" font-size="10" fill="#55606c">${escapeXml(truncate(edge.label, 28))}</text>` +
        `</g>`
      );
    })
    .join("");
  const nodeMarkup = view.nodes
    .map((node) => {
      const cx = node.x + half.x;
      const cy = node.y + half.y;
      const border = node.recommendedBorder
        ? `stroke="#f4b400" stroke-width="4" class="node-card recommended"`
        : `stroke="#7c8794" stroke-width="1.5" class="node-card"`;
      const plus = node.stance
        ? `<text class="expand-button" data-node-id="${node.id}" data-stance="${node.stance}" x="${cx + node.radius - 8}" y="${cy - node.radius + 12}" font-size="16" text-anchor="middle" cursor="pointer">+</text>`
        : "";
      return (
        `<g class="node" data-node-id="${node.id}" data-side="${node.side}" data-status="${node.status}">` +
        `<circle cx="${cx}" cy="${cy}" r="${node.radius}" fill="${node.fill}" ${border}/>` +
        `<text x="${cx}" y="${cy + 4}" text-anchor="middle" font-size="11">${escapeXml(truncate(node.query, 24))}</text>` +
        plus +
        `</g>`
      );
    })
    .join("");
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" class="retrieval-space" ` +
    `viewBox="0 0 ${view.width} ${view.height}">` +
    edgeMarkup +
    nodeMarkup +
    `</svg>`
  );
}
