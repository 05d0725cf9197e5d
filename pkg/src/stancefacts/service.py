"""HTTP JSON API (versioned under /v1) serving the retrieval system to the UI.

Every non-2xx response body is a single ApiError object: {code, message,
detail}.  GET endpoints are side-effect free; expansions are guarded so a
concurrent expand on a busy session returns 409 instead of duplicating
children.
"""

from __future__ import annotations

import itertools
import threading

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import embeddings as emb
from .config import Runtime
from .engine import chart_spec, compute_fact
from .errors import FactParseError, StanceFactsError, TreeError
from .facts import parse_fact, serialize_fact, validate_fact
from .gateway import STANCES
from .tree import ExpansionAction, RetrievalTree, rank_facts, tree_to_dict

_STATUS_BY_CODE = {
    "NODE_BUSY": 409,
    "UNKNOWN_NODE": 404,
    "UNKNOWN_SESSION": 404,
    "UNKNOWN_FACT": 404,
    "LLM_UNAVAILABLE": 502,
    "REPLAY_MISS": 502,
    "MALFORMED_RESPONSE": 502,
    "PROVIDER_UNAVAILABLE": 502,
}


class StatementBody(BaseModel):
    statement: str
    stances: list[str] | None = None


class ExpandBody(BaseModel):
    stance: str


class QueryBody(BaseModel):
    query: str


class StoryRef(BaseModel):
    node_id: str
    fact_index: int


class StoryBody(BaseModel):
    facts: list[StoryRef]


class DatasetBody(BaseModel):
    name: str
    csv: str
    provenance: str = ""


def _error_response(exc: StanceFactsError) -> JSONResponse:
    status = _STATUS_BY_CODE.get(exc.code, 400)
    return JSONResponse(
        status_code=status,
        content={"code": exc.code, "message": exc.message, "detail": exc.detail},
    )


class SessionRegistry:
    def __init__(self) -> None:
        self._sessions: dict[str, RetrievalTree] = {}
        self._stories: dict[str, list[dict]] = {}
        self._counter = itertools.count(1)
        self._lock = threading.Lock()

    def new_session_id(self) -> str:
        with self._lock:
            return f"s{next(self._counter)}"

    def put(self, tree: RetrievalTree) -> None:
        self._sessions[tree.session_id] = tree
        self._stories.setdefault(tree.session_id, [])

    def get(self, session_id: str) -> RetrievalTree:
        tree = self._sessions.get(session_id)
        if tree is None:
            raise TreeError(f"unknown session {session_id!r}", code="UNKNOWN_SESSION")
        return tree

    def story(self, session_id: str) -> list[dict]:
        self.get(session_id)
        return self._stories.setdefault(session_id, [])


def _fact_payload(runtime: Runtime, record, index: int) -> dict:
    dataset = runtime.store.get(record.source.source_dataset)
    provenance = (dataset.provenance or dataset.name) if dataset else record.source.source_dataset
    return {
        "index": index,
        "fact": serialize_fact(record.fact),
        "description": record.fact.description,
        "result": record.result.to_dict(),
        "chart": chart_spec(record.result, provenance).to_dict(),
        "evaluation": record.evaluation.to_dict(),
        "relevance": record.relevance,
        "source": record.source.to_dict(),
    }


def create_app(runtime: Runtime) -> FastAPI:
    app = FastAPI(title="stancefacts", version="0.1.0")
    registry = SessionRegistry()
    app.state.runtime = runtime
    app.state.registry = registry

    @app.exception_handler(StanceFactsError)
    async def handle_package_error(request: Request, exc: StanceFactsError):
        return _error_response(exc)

    @app.exception_handler(ValueError)
    async def handle_value_error(request: Request, exc: ValueError):
        return JSONResponse(
            status_code=400, content={"code": "BAD_REQUEST", "message": str(exc), "detail": None}
        )

    # -- sessions -------------------------------------------------------------

    @app.post("/v1/sessions")
    def create_session(body: StatementBody):
        stances = tuple(body.stances) if body.stances else STANCES
        for stance in stances:
            if stance not in STANCES:
                raise ValueError(f"unknown stance {stance!r}")
        session_id = registry.new_session_id()
        tree = runtime.retriever.create_session(
            body.statement, session_id=session_id, stances=stances
        )
        registry.put(tree)
        return {"session_id": session_id, "tree": tree_to_dict(tree)}

    @app.get("/v1/sessions/{session_id}/tree")
    def get_tree(session_id: str):
        tree = registry.get(session_id)
        return tree_to_dict(tree)

    @app.post("/v1/sessions/{session_id}/nodes/{node_id}/expand")
    def expand(session_id: str, node_id: str, body: ExpandBody):
        tree = registry.get(session_id)
        observation = runtime.retriever.expand(
            tree, ExpansionAction(node_id=node_id, stance=body.stance)
        )
        return {
            "child_ids": list(observation.child_ids),
            "stance": observation.stance,
            "statement": observation.statement,
        }

    @app.put("/v1/sessions/{session_id}/nodes/{node_id}/query")
    def edit_query(session_id: str, node_id: str, body: QueryBody):
        tree = registry.get(session_id)
        node = runtime.retriever.re_retrieve(tree, node_id, body.query)
        return node.to_dict()

    @app.get("/v1/sessions/{session_id}/nodes/{node_id}/facts")
    def get_facts(session_id: str, node_id: str):
        tree = registry.get(session_id)
        node = tree.node(node_id)
        return {
            "node_id": node_id,
            "query": node.query,
            "stance": node.stance,
            "facts": [_fact_payload(runtime, record, i) for i, record in enumerate(node.facts)],
        }

    @app.put("/v1/sessions/{session_id}/nodes/{node_id}/facts/{fact_index}")
    def edit_fact(session_id: str, node_id: str, fact_index: int, body: dict):
        tree = registry.get(session_id)
        node = tree.node(node_id)
        if not 0 <= fact_index < len(node.facts):
            raise TreeError(f"node has no fact {fact_index}", code="UNKNOWN_FACT")
        record = node.facts[fact_index]
        merged = serialize_fact(record.fact)
        merged.update(body)
        fact = parse_fact(merged)
        report = validate_fact(fact, record.source.fields, record.source.rows)
        if not report.ok:
            raise FactParseError(
                "fact edits violate the fact rules",
                code=report.violations[0].rule,
                detail=report.to_dict(),
            )
        result = compute_fact(fact, record.source)
        description = fact.description.strip() or record.fact.description
        record.fact = fact
        record.result = result
        if description.strip():
            record.relevance = emb.relevance(
                runtime.catalog.provider, description, tree.statement, node.query
            )
        node.facts = rank_facts(node.facts, node.stance or "support")
        new_index = node.facts.index(record)
        return _fact_payload(runtime, record, new_index)

    # -- story ----------------------------------------------------------------

    @app.post("/v1/sessions/{session_id}/story")
    def add_to_story(session_id: str, body: StoryBody):
        tree = registry.get(session_id)
        story = registry.story(session_id)
        for ref in body.facts:
            node = tree.node(ref.node_id)
            if not 0 <= ref.fact_index < len(node.facts):
                raise TreeError(
                    f"node {ref.node_id} has no fact {ref.fact_index}", code="UNKNOWN_FACT"
                )
            payload = _fact_payload(runtime, node.facts[ref.fact_index], ref.fact_index)
            payload["node_id"] = ref.node_id
            story.append(payload)
        return {"story": story}

    @app.get("/v1/sessions/{session_id}/story")
    def get_story(session_id: str):
        return {"story": registry.story(session_id)}

    # -- datasets ---------------------------------------------------------------

    @app.post("/v1/datasets")
    def ingest_dataset(body: DatasetBody):
        dataset = runtime.store.ingest_dataset(body.csv, body.name, body.provenance)
        runtime.catalog.add_dataset(dataset)
        return {
            "id": dataset.id,
            "name": dataset.name,
            "fields": [f.to_dict() for f in dataset.fields],
            "rows": len(dataset.rows),
        }

    @app.get("/v1/datasets")
    def list_datasets():
        return {
            "datasets": [
                {
                    "id": dataset.id,
                    "name": dataset.name,
                    "provenance": dataset.provenance,
                    "rows": len(dataset.rows),
                    "fields": [f.to_dict() for f in dataset.fields],
                }
                for dataset in runtime.store.datasets()
            ]
        }

    return app
