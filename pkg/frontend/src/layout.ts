/**
 * Mind-map layout for the retrieval tree.
 *
 * Two passes: subtree spans bottom-up, then positions top-down.  The root
 * sits at the origin; each node's subtree owns a disjoint vertical band on
 * its side, so the initial layout never overlaps cards (the vertical pitch
 * exceeds the largest card diameter).
 */

import type { NodeDto, TreeDto } from "./api.js";
import { MAX_RADIUS, Side, sideForStance } from "./encoding.js";

export const H_SPACING = 220;
export const V_SPACING = 2 * MAX_RADIUS + 16;

export interface PlacedNode {
  node: NodeDto;
  x: number;
  y: number;
  side: Side;
  depth: number;
}

export interface PlacedEdge {
  from: string;
  to: string;
  label: string;
}

export interface SpaceLayout {
  nodes: PlacedNode[];
  edges: PlacedEdge[];
}

function subtreeSpan(tree: TreeDto, nodeId: string): number {
  const children = tree.edges[nodeId] ?? [];
  if (children.length === 0) return 1;
  let total = 0;
  for (const child of children) total += subtreeSpan(tree, child);
  return Math.max(1, total);
}

function place(
  tree: TreeDto,
  nodeId: string,
  depth: number,
  side: Side,
  top: number,
  out: PlacedNode[],
  edges: PlacedEdge[],
): void {
  const node = tree.nodes[nodeId];
  if (!node) return;
  const span = subtreeSpan(tree, nodeId);
  const y = (top + span / 2) * V_SPACING;
  const x = side === "left" ? -depth * H_SPACING : depth * H_SPACING;
  out.push({ node, x, y: side === "center" ? 0 : y, side, depth });
  let offset = top;
  for (const child of tree.edges[nodeId] ?? []) {
    edges.push({ from: nodeId, to: child, label: tree.nodes[child]?.direction ?? "" });
    place(tree, child, depth + 1, side, offset, out, edges);
    offset += subtreeSpan(tree, child);
  }
}

/**
 * Compute positions for every node.  Children follow the side of the stance
 * that created them (their own stance), so a support subtree stays on the
 * right even when an individual fact inside it opposes.
 */
export function layoutTree(tree: TreeDto): SpaceLayout {
  const nodes: PlacedNode[] = [];
  const edges: PlacedEdge[] = [];
  const rootId = "n0";
  const root = tree.nodes[rootId];
  if (!root) return { nodes, edges };
  nodes.push({ node: root, x: 0, y: 0, side: "center", depth: 0 });

  const rootChildren = tree.edges[rootId] ?? [];
  const bySide: Record<"left" | "right", string[]> = { left: [], right: [] };
  for (const child of rootChildren) {
    const side = sideForStance(tree.nodes[child]?.stance ?? null);
    bySide[side === "center" ? "right" : side].push(child);
  }
  for (const side of ["left", "right"] as const) {
    const ids = bySide[side];
    const total = ids.reduce((acc, id) => acc + subtreeSpan(tree, id), 0);
    let offset = -total / 2;
    for (const id of ids) {
      edges.push({ from: rootId, to: id, label: tree.nodes[id]?.direction ?? "" });
      place(tree, id, 1, side, offset, nodes, edges);
      offset += subtreeSpan(tree, id);
    }
  }
  return { nodes, edges };
}
