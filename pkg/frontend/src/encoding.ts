/**
 * Visual encodings for retrieval-space nodes.
 *
 * Pure functions of the node score: stance picks the side and the hue
 * (green = support, red = oppose), stance probability drives saturation,
 * relevance drives the card radius.  Kept strictly monotone so stronger
 * nodes are always visibly stronger.
 */

import type { Stance } from "./api.js";

export type Side = "left" | "right" | "center";

export const MIN_RADIUS = 24;
export const MAX_RADIUS = 56;
export const MIN_SATURATION = 30;
export const MAX_SATURATION = 90;

const SUPPORT_HUE = 135;
const OPPOSE_HUE = 4;

const clamp = (v: number, lo: number, hi: number) => Math.min(hi, Math.max(lo, v));

/** Support nodes sit right of the root, oppose nodes left. */
export function sideForStance(stance: Stance | null): Side {
  if (stance === "support") return "right";
  if (stance === "oppose") return "left";
  return "center";
}

/** Probability 0.5..1.0 maps linearly onto saturation 30%..90%. */
export function saturationForProbability(prob: number): number {
  const t = clamp((prob - 0.5) / 0.5, 0, 1);
  return MIN_SATURATION + t * (MAX_SATURATION - MIN_SATURATION);
}

export function fillForNode(stance: Stance | null, stanceProb: number): string {
  if (stance === null) {
    return "hsl(220, 12%, 92%)"; // neutral root card
  }
  const hue = stance === "support" ? SUPPORT_HUE : OPPOSE_HUE;
  const saturation = saturationForProbability(stanceProb);
  return `hsl(${hue}, ${saturation.toFixed(1)}%, 62%)`;
}

/** Relevance 0..1 maps linearly onto radius 24..56 px. */
export function radiusForRelevance(relevance: number): number {
  return MIN_RADIUS + clamp(relevance, 0, 1) * (MAX_RADIUS - MIN_RADIUS);
}
