/**
 * Browser shell wiring the editor, the retrieval space and the details
 * panel against the /v1 API.  All rendering goes through the pure builders
 * in space.ts / details.ts; this file only handles DOM events and state.
 */

import { ApiClient, ApiError, Stance, TreeDto } from "./api.js";
import { StoryEditor } from "./editor.js";
import { buildDetailsView, renderDetailsHtml } from "./details.js";
import { buildSpaceView, renderSpaceSvg } from "./space.js";

interface AppState {
  sessionId: string | null;
  tree: TreeDto | null;
  selectedNode: string | null;
  collapsed: Set<string>;
  busy: boolean;
}

export function startApp(root: HTMLElement, api: ApiClient = new ApiClient()): void {
  root.innerHTML = `
    <div class="columns">
      <section id="editor-pane">
        <h2>Story editor</h2>
        <textarea id="draft" rows="6" placeholder="Write your statement here, select it, then retrieve."></textarea>
        <button id="retrieve" hidden>Retrieve facts</button>
        <div id="story"></div>
      </section>
      <section id="space-pane"><h2>Retrieval space</h2><div id="space"></div></section>
      <section id="details-pane"><h2>Retrieval details</h2><div id="details"></div></section>
    </div>
    <div id="toast" hidden></div>`;

  const state: AppState = {
    sessionId: null,
    tree: null,
    selectedNode: null,
    collapsed: new Set(),
    busy: false,
  };
  const editor = new StoryEditor();
  const draft = root.querySelector<HTMLTextAreaElement>("#draft")!;
  const retrieveButton = root.querySelector<HTMLButtonElement>("#retrieve")!;
  const spaceHost = root.querySelector<HTMLDivElement>("#space")!;
  const detailsHost = root.querySelector<HTMLDivElement>("#details")!;
  const storyHost = root.querySelector<HTMLDivElement>("#story")!;
  const toast = root.querySelector<HTMLDivElement>("#toast")!;

  const showToast = (message: string) => {
    toast.textContent = message;
    toast.hidden = false;
    setTimeout(() => (toast.hidden = true), 4000);
  };

  const describeError = (error: unknown): string => {
    if (error instanceof ApiError) {
      return error.code === "NODE_BUSY" ? "expansion in progress" : `${error.code}: ${error.message}`;
    }
    return String(error);
  };

  const renderSpace = () => {
    if (!state.tree) return;
    spaceHost.innerHTML = renderSpaceSvg(buildSpaceView(state.tree, { collapsed: state.collapsed }));
  };

  const refreshTree = async () => {
    if (!state.sessionId) return;
    state.tree = await api.getTree(state.sessionId);
    renderSpace();
  };

  const openDetails = async (nodeId: string) => {
    if (!state.sessionId) return;
    state.selectedNode = nodeId;
    const facts = await api.getFacts(state.sessionId, nodeId);
    detailsHost.innerHTML = renderDetailsHtml(buildDetailsView(facts));
  };

  draft.addEventListener("mouseup", () => {
    editor.setText(0, draft.value);
    editor.select(0, draft.selectionStart ?? 0, draft.selectionEnd ?? 0);
    retrieveButton.hidden = !editor.retrievalButtonVisible();
  });

  retrieveButton.addEventListener("click", async () => {
    const statement = editor.selectedStatement();
    if (!statement || state.busy) return;
    state.busy = true;
    retrieveButton.disabled = true;
    try {
      const created = await api.createSession(statement);
      state.sessionId = created.session_id;
      state.tree = created.tree;
      renderSpace();
    } catch (error) {
      showToast(describeError(error));
    } finally {
      state.busy = false;
      retrieveButton.disabled = false;
    }
  });

  spaceHost.addEventListener("click", async (event) => {
    const target = event.target as HTMLElement;
    const expand = target.closest<HTMLElement>(".expand-button");
    if (expand && state.sessionId && !state.busy) {
      state.busy = true;
      try {
        await api.expandNode(
          state.sessionId,
          expand.dataset.nodeId!,
          expand.dataset.stance as Stance,
        );
        await refreshTree();
      } catch (error) {
        showToast(describeError(error));
      } finally {
        state.busy = false;
      }
      return;
    }
    // edge keywords are editable: a new phrasing re-retrieves the node
    const edgeLabel = target.closest<HTMLElement>(".edge-label");
    if (edgeLabel && state.sessionId) {
      const nodeId = edgeLabel.dataset.nodeId!;
      const next = window.prompt("Edit the query and retrieve again:", state.tree?.nodes[nodeId]?.query ?? "");
      if (next && next.trim()) {
        try {
          await api.editQuery(state.sessionId, nodeId, next.trim());
          await refreshTree();
        } catch (error) {
          showToast(describeError(error));
        }
      }
    }
  });

  spaceHost.addEventListener("dblclick", (event) => {
    const card = (event.target as HTMLElement).closest<HTMLElement>(".node");
    if (card) void openDetails(card.dataset.nodeId!);
  });

  // right-click collapses or re-opens a subtree (view-only state)
  spaceHost.addEventListener("contextmenu", (event) => {
    const card = (event.target as HTMLElement).closest<HTMLElement>(".node");
    if (!card) return;
    event.preventDefault();
    const nodeId = card.dataset.nodeId!;
    if (state.collapsed.has(nodeId)) state.collapsed.delete(nodeId);
    else state.collapsed.add(nodeId);
    renderSpace();
  });

  detailsHost.addEventListener("click", async (event) => {
    const target = event.target as HTMLElement;
    if (!state.sessionId || !state.selectedNode) return;
    if (target.classList.contains("retrieve-button")) {
      const input = detailsHost.querySelector<HTMLInputElement>(".query-input")!;
      const errorLine = detailsHost.querySelector<HTMLParagraphElement>(".edit-error")!;
      try {
        await api.editQuery(state.sessionId, state.selectedNode, input.value);
        await refreshTree();
        await openDetails(state.selectedNode);
      } catch (error) {
        errorLine.textContent = describeError(error);
        errorLine.hidden = false;
      }
    }
    if (target.classList.contains("add-to-editor")) {
      const index = Number(target.dataset.factIndex);
      const facts = await api.getFacts(state.sessionId, state.selectedNode);
      const payload = facts.facts[index];
      if (!payload) return;
      await api.addToStory(state.sessionId, [
        { node_id: state.selectedNode, fact_index: index },
      ]);
      editor.insertFact(editor.blocks.length - 1, {
        nodeId: state.selectedNode,
        factIndex: index,
        caption: payload.description,
        chart: payload.chart,
        result: payload.result,
      });
      storyHost.innerHTML = editor.toHtml();
    }
  });
}

declare global {
  interface Window {
    stancefactsApp?: { start: typeof startApp };
  }
}

if (typeof document !== "undefined" && typeof window !== "undefined") {
  window.stancefactsApp = { start: startApp };
  const mount = document.getElementById("app");
  if (mount) startApp(mount);
}
