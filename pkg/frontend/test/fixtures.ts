/** Fixed 7-node tree and a scripted in-memory /v1 backend for tests. */

import type {
  ChartSpecDto,
  FactPayloadDto,
  NodeDto,
  NodeFactsDto,
  ResultDto,
  Stance,
  TreeDto,
} from "../src/api.js";

function node(
  id: string,
  parent: string | null,
  stance: Stance | null,
  query: string,
  direction: string,
  relevance: number,
  prob: number,
  recommended = false,
): NodeDto {
  return {
    id,
    parent,
    stance,
    query,
    direction,
    status: parent === null ? "expanded" : "fresh",
    recommended,
    node_relevance: relevance,
    node_stance_prob: prob,
    facts: [],
  };
}

export function fixedTree(): TreeDto {
  return {
    session_id: "s1",
    statement: "Global income inequality is widening.",
    nodes: {
      n0: node("n0", null, null, "Global income inequality is widening.", "", 0, 0),
      n1: node("n1", "n0", "support", "Gini index trends?", "Gini trends", 0.82, 0.76),
      n2: node("n2", "n0", "support", "GDP per capita gaps?", "GDP gaps", 0.5, 0.9),
      n3: node("n3", "n0", "support", "Wealth concentration?", "Wealth share", 0.3, 0.66),
      n4: node("n4", "n0", "oppose", "Poverty rates falling?", "Poverty falling", 0.7, 0.8),
      n5: node("n5", "n0", "oppose", "Education access rising?", "Education access", 0.45, 0.95, true),
      n6: node("n6", "n0", "oppose", "Living standards converging?", "Convergence", 0.2, 0.55),
    },
    edges: { n0: ["n1", "n2", "n3", "n4", "n5", "n6"] },
    recommended_node: "n5",
  };
}

export function sampleChart(): ChartSpecDto {
  return {
    mark: "bar",
    x: { field: "country", title: "country" },
    y: { field: "value", title: "value" },
    highlight: ["South Africa"],
    caption: "South Africa had the highest Gini index at 63.",
    source: "bundled sample",
  };
}

export function sampleResult(): ResultDto {
  return {
    fact: {
      type: "extreme",
      measure: [{ aggregate: "none", field: "value" }],
      breakdown: ["country"],
      subspace: [],
      focus: [{ field: "country", value: "South Africa" }],
      description: "South Africa had the highest Gini index at 63.",
    },
    groups: [
      { key: "South Africa", value: 63 },
      { key: "Brazil", value: 52.9 },
      { key: "Norway", value: 27 },
    ],
    derived: { kind: "max", key: "South Africa", value: 63 },
    focus_keys: ["South Africa"],
  };
}

export function factPayload(index: number, description: string): FactPayloadDto {
  const result = sampleResult();
  result.fact.description = description;
  return {
    index,
    fact: result.fact,
    description,
    result,
    chart: { ...sampleChart(), caption: description },
    evaluation: {
      fact_index: index,
      support_prob: 0.76,
      oppose_prob: 0.24,
      predicted_label: "support",
      explanation: "scripted",
      flags: [],
    },
    relevance: 0.82 - index * 0.2,
    source: {
      source_dataset: "wdi_indicators-0000",
      fields: [
        { name: "country", kind: "categorical", dataset_id: "wdi_indicators-0000", sample_values: [] },
        { name: "value", kind: "numerical", dataset_id: "wdi_indicators-0000", sample_values: [] },
      ],
      rows: [
        ["South Africa", 63],
        ["Brazil", 52.9],
        ["Norway", null],
      ],
      generating_query: "SELECT country, value FROM wdi_indicators LIMIT 10",
    },
  };
}

export interface MockBackend {
  fetch: (input: string, init?: RequestInit) => Promise<Response>;
  state: {
    tree: TreeDto;
    factsByNode: Map<string, FactPayloadDto[]>;
    queryEdits: { nodeId: string; query: string }[];
    story: { node_id: string; fact_index: number }[];
  };
}

/** In-memory /v1 server: query edits replace the node's facts (fresh list). */
export function mockBackend(): MockBackend {
  const tree = fixedTree();
  const factsByNode = new Map<string, FactPayloadDto[]>();
  factsByNode.set("n1", [factPayload(0, "Gini fact A"), factPayload(1, "Gini fact B")]);
  factsByNode.set("n5", [factPayload(0, "Education fact")]);
  const state: MockBackend["state"] = { tree, factsByNode, queryEdits: [], story: [] };

  const json = (payload: unknown, status = 200) =>
    new Response(JSON.stringify(payload), {
      status,
      headers: { "Content-Type": "application/json" },
    });

  const fetchImpl = async (input: string, init?: RequestInit): Promise<Response> => {
    const method = init?.method ?? "GET";
    const url = new URL(input, "http://mock");
    const parts = url.pathname.split("/").filter(Boolean); // ["v1", ...]
    const body = init?.body ? JSON.parse(String(init.body)) : null;

    if (parts[1] === "sessions" && parts.length === 2 && method === "POST") {
      return json({ session_id: "s1", tree: state.tree });
    }
    if (parts[3] === "tree" && method === "GET") {
      return json(state.tree);
    }
    if (parts[3] === "nodes" && parts[5] === "query" && method === "PUT") {
      const nodeId = parts[4]!;
      const nodeDto = state.tree.nodes[nodeId];
      if (!nodeDto) return json({ code: "UNKNOWN_NODE", message: "no node", detail: null }, 404);
      state.queryEdits.push({ nodeId, query: body.query });
      nodeDto.query = body.query;
      state.factsByNode.set(nodeId, [factPayload(0, `refreshed for: ${body.query}`)]);
      return json(nodeDto);
    }
    if (parts[3] === "nodes" && parts[5] === "facts" && parts.length === 6 && method === "GET") {
      const nodeId = parts[4]!;
      const nodeDto = state.tree.nodes[nodeId];
      if (!nodeDto) return json({ code: "UNKNOWN_NODE", message: "no node", detail: null }, 404);
      return json({
        node_id: nodeId,
        query: nodeDto.query,
        stance: nodeDto.stance,
        facts: state.factsByNode.get(nodeId) ?? [],
      } satisfies NodeFactsDto);
    }
    if (parts[3] === "nodes" && parts[5] === "expand" && method === "POST") {
      return json({ code: "NODE_BUSY", message: "expansion in progress", detail: null }, 409);
    }
    if (parts[3] === "story" && method === "POST") {
      state.story.push(...body.facts);
      return json({ story: state.story });
    }
    if (parts[3] === "story" && method === "GET") {
      return json({ story: state.story });
    }
    return json({ code: "NOT_FOUND", message: `no route for ${method} ${url.pathname}`, detail: null }, 404);
  };

  return { fetch: fetchImpl, state };
}
