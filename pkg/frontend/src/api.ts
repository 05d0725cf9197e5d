/**
 * Typed client for the stancefacts /v1 HTTP API.
 *
 * The fetch implementation is injectable so tests can serve a scripted
 * backend; every non-2xx response is raised as an ApiError carrying the
 * server's {code, message, detail} body.
 */

export type Stance = "support" | "oppose";

export interface FactDto {
  type: string;
  measure: { aggregate: string; field: string }[];
  breakdown: string[];
  subspace: { field: string; value: string | number }[];
  focus: { field: string; value: string | number }[];
  description: string;
}

export interface EvaluationDto {
  fact_index: number;
  support_prob: number;
  oppose_prob: number;
  predicted_label: Stance;
  explanation: string;
  flags: string[];
}

export interface GroupDto {
  key: string;
  value: number;
  value2?: number;
}

export interface ResultDto {
  fact: FactDto;
  groups: GroupDto[];
  derived: Record<string, unknown>;
  focus_keys: string[];
}

export interface AxisDto {
  field: string;
  title: string;
}

export interface ChartSpecDto {
  mark: "line" | "bar" | "grouped_bar" | "pie" | "scatter" | "big_number";
  x: AxisDto;
  y: AxisDto;
  highlight: string[];
  caption: string;
  source: string;
}

export interface SubTableDto {
  source_dataset: string;
  fields: { name: string; kind: string; dataset_id: string; sample_values: unknown[] }[];
  rows: (string | number | null)[][];
  generating_query: string;
}

export interface FactPayloadDto {
  index: number;
  fact: FactDto;
  description: string;
  result: ResultDto;
  chart: ChartSpecDto;
  evaluation: EvaluationDto;
  relevance: number;
  source: SubTableDto;
}

export interface NodeDto {
  id: string;
  parent: string | null;
  stance: Stance | null;
  query: string;
  direction: string;
  status: "fresh" | "expanded" | "empty";
  recommended: boolean;
  node_relevance: number;
  node_stance_prob: number;
  facts: unknown[];
}

export interface TreeDto {
  session_id: string;
  statement: string;
  nodes: Record<string, NodeDto>;
  edges: Record<string, string[]>;
  recommended_node: string | null;
}

export interface NodeFactsDto {
  node_id: string;
  query: string;
  stance: Stance | null;
  facts: FactPayloadDto[];
}

export interface ObservationDto {
  child_ids: string[];
  stance: Stance;
  statement: string;
}

export class ApiError extends Error {
  constructor(
    public readonly code: string,
    message: string,
    public readonly status: number,
    public readonly detail: unknown = null,
  ) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}/v1${path}`, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await response.text();
    const payload = text ? JSON.parse(text) : null;
    if (!response.ok) {
      const code = payload?.code ?? "HTTP_ERROR";
      const message = payload?.message ?? `request failed with ${response.status}`;
      throw new ApiError(code, message, response.status, payload?.detail ?? null);
    }
    return payload as T;
  }

  createSession(statement: string, stances?: Stance[]) {
    return this.request<{ session_id: string; tree: TreeDto }>("POST", "/sessions", {
      statement,
      stances,
    });
  }

  getTree(sessionId: string) {
    return this.request<TreeDto>("GET", `/sessions/${sessionId}/tree`);
  }

  expandNode(sessionId: string, nodeId: string, stance: Stance) {
    return this.request<ObservationDto>("POST", `/sessions/${sessionId}/nodes/${nodeId}/expand`, {
      stance,
    });
  }

  editQuery(sessionId: string, nodeId: string, query: string) {
    return this.request<NodeDto>("PUT", `/sessions/${sessionId}/nodes/${nodeId}/query`, { query });
  }

  getFacts(sessionId: string, nodeId: string) {
    return this.request<NodeFactsDto>("GET", `/sessions/${sessionId}/nodes/${nodeId}/facts`);
  }

  editFact(sessionId: string, nodeId: string, factIndex: number, edits: Partial<FactDto>) {
    return this.request<FactPayloadDto>(
      "PUT",
      `/sessions/${sessionId}/nodes/${nodeId}/facts/${factIndex}`,
      edits,
    );
  }

  addToStory(sessionId: string, refs: { node_id: string; fact_index: number }[]) {
    return this.request<{ story: (FactPayloadDto & { node_id: string })[] }>(
      "POST",
      `/sessions/${sessionId}/story`,
      { facts: refs },
    );
  }

  getStory(sessionId: string) {
    return this.request<{ story: (FactPayloadDto & { node_id: string })[] }>(
      "GET",
      `/sessions/${sessionId}/story`,
    );
  }
}
