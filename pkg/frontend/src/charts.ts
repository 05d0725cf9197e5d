/**
 * Chart rendering from chart specs to SVG markup.
 *
 * Axis titles and the data-source footer are always drawn; highlights use a
 * stronger fill.  Rendering is string-based so it works in tests without a
 * browser and can be injected with innerHTML in the app shell.
 */

import type { ChartSpecDto, ResultDto } from "./api.js";

export const CHART_WIDTH = 300;
export const CHART_HEIGHT = 180;

const PLOT = { left: 42, right: 10, top: 12, bottom: 46 };
const BASE_COLOR = "#5b8db8";
const HIGHLIGHT_COLOR = "#e4572e";

const escapeXml = (text: string) =>
  text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;").replace(/"/g, "&quot;");

interface Frame {
  xFor(index: number, count: number): number;
  yFor(value: number): number;
  innerWidth: number;
  innerHeight: number;
}

function frameFor(values: number[]): Frame {
  const innerWidth = CHART_WIDTH - PLOT.left - PLOT.right;
  const innerHeight = CHART_HEIGHT - PLOT.top - PLOT.bottom;
  const lo = Math.min(0, ...values);
  const hi = Math.max(...values, lo + 1e-9);
  return {
    innerWidth,
    innerHeight,
    xFor: (index, count) => PLOT.left + ((index + 0.5) / Math.max(count, 1)) * innerWidth,
    yFor: (value) => PLOT.top + (1 - (value - lo) / (hi - lo)) * innerHeight,
  };
}

function chrome(spec: ChartSpecDto, body: string): string {
  const xTitle = escapeXml(spec.x.title);
  const yTitle = escapeXml(spec.y.title);
  const source = escapeXml(`Source: ${spec.source}`);
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${CHART_WIDTH} ${CHART_HEIGHT}" ` +
    `class="fact-chart" data-mark="${spec.mark}">` +
    body +
    `<text class="axis-title x-axis-title" x="${CHART_WIDTH / 2}" y="${CHART_HEIGHT - 26}" text-anchor="middle" font-size="10">${xTitle}</text>` +
    `<text class="axis-title y-axis-title" x="12" y="${CHART_HEIGHT / 2}" text-anchor="middle" font-size="10" transform="rotate(-90 12 ${CHART_HEIGHT / 2})">${yTitle}</text>` +
    `<text class="chart-source" x="${CHART_WIDTH / 2}" y="${CHART_HEIGHT - 8}" text-anchor="middle" font-size="9" fill="#666">${source}</text>` +
    `</svg>`
  );
}

function colorFor(key: string, highlight: string[]): string {
  return highlight.includes(key) ? HIGHLIGHT_COLOR : BASE_COLOR;
}

function renderBars(spec: ChartSpecDto, result: ResultDto): string {
  const groups = result.groups;
  const frame = frameFor(groups.map((g) => g.value));
  const band = frame.innerWidth / Math.max(groups.length, 1);
  const width = Math.min(38, band * 0.7);
  const baseline = frame.yFor(0);
  return groups
    .map((g, i) => {
      const x = frame.xFor(i, groups.length) - width / 2;
      const y = Math.min(frame.yFor(g.value), baseline);
      const height = Math.abs(baseline - frame.yFor(g.value));
      return (
        `<rect data-key="${escapeXml(g.key)}" x="${x.toFixed(1)}" y="${y.toFixed(1)}" ` +
        `width="${width.toFixed(1)}" height="${Math.max(height, 1).toFixed(1)}" fill="${colorFor(g.key, spec.highlight)}"/>`
      );
    })
    .join("");
}

function renderLine(spec: ChartSpecDto, result: ResultDto): string {
  const groups = result.groups;
  const frame = frameFor(groups.map((g) => g.value));
  const points = groups
    .map((g, i) => `${frame.xFor(i, groups.length).toFixed(1)},${frame.yFor(g.value).toFixed(1)}`)
    .join(" ");
  const markers = groups
    .map((g, i) => {
      const highlighted = spec.highlight.includes(g.key);
      return (
        `<circle data-key="${escapeXml(g.key)}" cx="${frame.xFor(i, groups.length).toFixed(1)}" ` +
        `cy="${frame.yFor(g.value).toFixed(1)}" r="${highlighted ? 5 : 2.5}" ` +
        `fill="${colorFor(g.key, spec.highlight)}"/>`
      );
    })
    .join("");
  return `<polyline fill="none" stroke="${BASE_COLOR}" stroke-width="2" points="${points}"/>` + markers;
}

function renderPie(spec: ChartSpecDto, result: ResultDto): string {
  const total = result.groups.reduce((acc, g) => acc + Math.max(g.value, 0), 0) || 1;
  const cx = CHART_WIDTH / 2;
  const cy = (CHART_HEIGHT - PLOT.bottom + PLOT.top) / 2;
  const radius = Math.min(cx, cy) - 18;
  let angle = -Math.PI / 2;
  return result.groups
    .map((g) => {
      const sweep = (Math.max(g.value, 0) / total) * 2 * Math.PI;
      const x1 = cx + radius * Math.cos(angle);
      const y1 = cy + radius * Math.sin(angle);
      angle += sweep;
      const x2 = cx + radius * Math.cos(angle);
      const y2 = cy + radius * Math.sin(angle);
      const large = sweep > Math.PI ? 1 : 0;
      return (
        `<path data-key="${escapeXml(g.key)}" d="M ${cx} ${cy} L ${x1.toFixed(1)} ${y1.toFixed(1)} ` +
        `A ${radius} ${radius} 0 ${large} 1 ${x2.toFixed(1)} ${y2.toFixed(1)} Z" ` +
        `fill="${colorFor(g.key, spec.highlight)}" stroke="#fff"/>`
      );
    })
    .join("");
}

function renderScatter(spec: ChartSpecDto, result: ResultDto): string {
  const xs = result.groups.map((g) => g.value);
  const ys = result.groups.map((g) => g.value2 ?? 0);
  const xLo = Math.min(...xs);
  const xHi = Math.max(...xs, xLo + 1e-9);
  const frame = frameFor(ys);
  return result.groups
    .map((g) => {
      const px = PLOT.left + ((g.value - xLo) / (xHi - xLo)) * frame.innerWidth;
      const py = frame.yFor(g.value2 ?? 0);
      return (
        `<circle data-key="${escapeXml(g.key)}" cx="${px.toFixed(1)}" cy="${py.toFixed(1)}" r="4" ` +
        `fill="${colorFor(g.key, spec.highlight)}" fill-opacity="0.85"/>`
      );
    })
    .join("");
}

function renderBigNumber(result: ResultDto): string {
  const scalar = result.derived["scalar"];
  const text = typeof scalar === "number" ? scalar.toLocaleString("en-US") : String(scalar ?? "");
  return (
    `<text class="big-number" x="${CHART_WIDTH / 2}" y="${CHART_HEIGHT / 2}" text-anchor="middle" ` +
    `font-size="34" font-weight="700" fill="${BASE_COLOR}">${escapeXml(text)}</text>`
  );
}

export function renderChart(spec: ChartSpecDto, result: ResultDto): string {
  let body: string;
  switch (spec.mark) {
    case "big_number":
      body = renderBigNumber(result);
      break;
    case "line":
      body = renderLine(spec, result);
      break;
    case "pie":
      body = renderPie(spec, result);
      break;
    case "scatter":
      body = renderScatter(spec, result);
      break;
    case "bar":
    case "grouped_bar":
    default:
      body = renderBars(spec, result);
      break;
  }
  return chrome(spec, body);
}
