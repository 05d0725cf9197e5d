import { describe, expect, it } from "vitest";

import { StoryEditor } from "../src/editor.js";
import { factPayload } from "./fixtures.js";

function editorWithText(text: string): StoryEditor {
  const editor = new StoryEditor();
  editor.setText(0, text);
  return editor;
}

describe("story editor", () => {
  it("shows the retrieval button only over a nonempty selection", () => {
    const editor = editorWithText("Global income inequality is widening. More text.");
    expect(editor.retrievalButtonVisible()).toBe(false);
    editor.select(0, 0, 37);
    expect(editor.retrievalButtonVisible()).toBe(true);
    expect(editor.selectedStatement()).toBe("Global income inequality is widening.");
    editor.select(0, 5, 5); // empty selection disables the button
    expect(editor.retrievalButtonVisible()).toBe(false);
  });

  it("inserts facts as chart plus caption blocks in document flow", () => {
    const editor = editorWithText("Intro paragraph.");
    const payload = factPayload(0, "South Africa had the highest Gini index at 63.");
    editor.insertFact(0, {
      nodeId: "n1",
      factIndex: 0,
      caption: payload.description,
      chart: payload.chart,
      result: payload.result,
    });
    expect(editor.blocks.map((b) => b.kind)).toEqual(["text", "fact", "text"]);
    const html = editor.toHtml();
    expect(html).toContain("<figure");
    expect(html).toContain("<svg");
    expect(html).toContain("South Africa had the highest Gini index at 63.");
  });

  it("exports and reloads the story as structured JSON", () => {
    const editor = editorWithText("Intro.");
    const payload = factPayload(0, "caption here");
    editor.insertFact(0, {
      nodeId: "n1",
      factIndex: 0,
      caption: payload.description,
      chart: payload.chart,
      result: payload.result,
    });
    const body = JSON.parse(editor.toJson());
    expect(body.blocks).toHaveLength(3);
    expect(body.blocks[1].kind).toBe("fact");
    expect(body.blocks[1].node_id).toBe("n1");

    const reloaded = StoryEditor.fromJson(editor.toJson());
    expect(reloaded.blocks).toHaveLength(3);
    expect(reloaded.toHtml()).toContain("caption here");
  });
});
