/**
 * Story editor model: text blocks interleaved with embedded fact blocks.
 *
 * Selecting a text span exposes the retrieval trigger; inserted facts render
 * chart plus caption inline; the story exports as structured JSON and as
 * HTML.  The model is plain data so it can be tested (and persisted)
 * without a browser.
 */

import type { ChartSpecDto, ResultDto } from "./api.js";
import { renderChart } from "./charts.js";

export interface TextBlock {
  kind: "text";
  text: string;
}

export interface FactBlock {
  kind: "fact";
  nodeId: string;
  factIndex: number;
  caption: string;
  chart: ChartSpecDto;
  result: ResultDto;
}

export type StoryBlock = TextBlock | FactBlock;

export interface Selection {
  blockIndex: number;
  start: number;
  end: number;
}

export class StoryEditor {
  blocks: StoryBlock[] = [{ kind: "text", text: "" }];
  selection: Selection | null = null;

  setText(blockIndex: number, text: string): void {
    const block = this.blocks[blockIndex];
    if (block?.kind === "text") block.text = text;
  }

  select(blockIndex: number, start: number, end: number): void {
    this.selection = { blockIndex, start, end };
  }

  clearSelection(): void {
    this.selection = null;
  }

  /** The retrieval button appears only over a nonempty text selection. */
  retrievalButtonVisible(): boolean {
    return this.selectedStatement() !== null;
  }

  /** The selected statement, if the selection covers nonempty text. */
  selectedStatement(): string | null {
    if (!this.selection) return null;
    const block = this.blocks[this.selection.blockIndex];
    if (!block || block.kind !== "text") return null;
    const text = block.text.slice(this.selection.start, this.selection.end).trim();
    return text.length > 0 ? text : null;
  }

  /** Insert a retrieved fact after the given block; chart + caption inline. */
  insertFact(afterBlock: number, fact: Omit<FactBlock, "kind">): void {
    const block: FactBlock = { kind: "fact", ...fact };
    this.blocks.splice(afterBlock + 1, 0, block, { kind: "text", text: "" });
  }

  removeBlock(index: number): void {
    if (this.blocks.length > 1) this.blocks.splice(index, 1);
  }

  toJson(): string {
    return JSON.stringify(
      {
        version: 1,
        blocks: this.blocks.map((block) =>
          block.kind === "text"
            ? { kind: "text", text: block.text }
            : {
                kind: "fact",
                node_id: block.nodeId,
                fact_index: block.factIndex,
                caption: block.caption,
                chart: block.chart,
                result: block.result,
              },
        ),
      },
      null,
      2,
    );
  }

  static fromJson(text: string): StoryEditor {
    const payload = JSON.parse(text) as {
      blocks: (
        | { kind: "text"; text: string }
        | {
            kind: "fact";
            node_id: string;
            fact_index: number;
            caption: string;
            chart: ChartSpecDto;
            result: ResultDto;
          }
      )[];
    };
    const editor = new StoryEditor();
    editor.blocks = payload.blocks.map((block) =>
      block.kind === "text"
        ? { kind: "text", text: block.text }
        : {
            kind: "fact",
            nodeId: block.node_id,
            factIndex: block.fact_index,
            caption: block.caption,
            chart: block.chart,
            result: block.result,
          },
    );
    if (editor.blocks.length === 0) editor.blocks = [{ kind: "text", text: "" }];
    return editor;
  }

  toHtml(): string {
    const escape = (text: string) =>
      text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
    const body = this.blocks
      .map((block) => {
        if (block.kind === "text") {
          return block.text ? `<p>${escape(block.text)}</p>` : "";
        }
        return (
          `<figure class="fact-embed" data-node-id="${block.nodeId}" data-fact-index="${block.factIndex}">` +
          renderChart(block.chart, block.result) +
          `<figcaption>${escape(block.caption)}</figcaption></figure>`
        );
      })
      .join("\n");
    return `<article class="data-story">\n${body}\n</article>`;
  }
}
