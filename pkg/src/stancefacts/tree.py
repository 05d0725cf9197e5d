"""Retrieval tree state machine and the expansion pipeline.

The tree holds the session state: a statement root plus stance-tagged query
nodes, each carrying ranked facts.  Expanding a node runs decompose -> field
match -> text-to-SQL (with validator-driven repair) -> fact extraction ->
validation/computation -> relevance -> stance evaluation -> ranking, then a
planner call marks the child worth exploring next.  Failed children stay in
the tree as empty nodes; mutations on one session are serialized.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field as dataclass_field

from . import embeddings as emb
from .datastore import DatasetStore, SubTable, execute_query, validate_query
from .embeddings import FieldCatalog
from .engine import FactResult, canonical_description, compute_fact
from .errors import EmbeddingError, ExecutionFailure, FactComputeError, LlmError, TreeError
from .facts import DataFact, parse_fact, serialize_fact, validate_fact
from .gateway import OPPOSE, STANCES, SUPPORT, FactEvaluation, LlmGateway


def _reraise_replay_miss(exc: LlmError) -> None:
    """Replay gaps are hard errors; only live failures may degrade."""
    if exc.code == "REPLAY_MISS":
        raise exc

NODE_BUSY = "NODE_BUSY"
UNKNOWN_NODE = "UNKNOWN_NODE"
CORRUPT_BLOB = "CORRUPT_BLOB"
EMPTY_STATEMENT = "EMPTY_STATEMENT"

STATUS_FRESH = "fresh"
STATUS_EXPANDED = "expanded"
STATUS_EMPTY = "empty"

FORMAT_VERSION = 1

PLANNING_GOAL = (
    "Recommend the child node with the highest potential for retrieving "
    "high-quality data facts."
)


@dataclass
class RetrievalConfig:
    children_per_expansion: int = 3
    facts_per_subtable: int = 3
    field_match_k: int = 3
    candidate_datasets_max: int = 3
    sql_repair_rounds: int = 2
    llm_repair_budget: int = 2
    relevance_threshold: float = 0.5
    min_field_similarity: float = 0.0

    def digest(self) -> str:
        payload = json.dumps(self.__dict__, sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass
class FactRecord:
    fact: DataFact
    result: FactResult
    evaluation: FactEvaluation
    relevance: float
    source: SubTable

    def to_dict(self) -> dict:
        return {
            "fact": serialize_fact(self.fact),
            "result": self.result.to_dict(),
            "evaluation": self.evaluation.to_dict(),
            "relevance": self.relevance,
            "source": self.source.to_dict(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "FactRecord":
        return cls(
            fact=parse_fact(payload["fact"]),
            result=FactResult.from_dict(payload["result"]),
            evaluation=FactEvaluation.from_dict(payload["evaluation"]),
            relevance=payload["relevance"],
            source=SubTable.from_dict(payload["source"]),
        )


@dataclass
class RetrievalNode:
    id: str
    parent: str | None
    stance: str | None  # None only for the root
    query: str
    direction: str = ""
    facts: list[FactRecord] = dataclass_field(default_factory=list)
    status: str = STATUS_FRESH
    recommended: bool = False

    @property
    def node_relevance(self) -> float:
        return self.facts[0].relevance if self.facts else 0.0

    @property
    def node_stance_prob(self) -> float:
        if not self.facts:
            return 0.0
        top = self.facts[0].evaluation
        return max(top.support_prob, top.oppose_prob)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "parent": self.parent,
            "stance": self.stance,
            "query": self.query,
            "direction": self.direction,
            "facts": [record.to_dict() for record in self.facts],
            "status": self.status,
            "recommended": self.recommended,
            "node_relevance": self.node_relevance,
            "node_stance_prob": self.node_stance_prob,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RetrievalNode":
        return cls(
            id=payload["id"],
            parent=payload["parent"],
            stance=payload["stance"],
            query=payload["query"],
            direction=payload.get("direction", ""),
            facts=[FactRecord.from_dict(r) for r in payload.get("facts", [])],
            status=payload.get("status", STATUS_FRESH),
            recommended=payload.get("recommended", False),
        )


@dataclass(frozen=True)
class ExpansionAction:
    node_id: str
    stance: str
    timestamp: int = 0


@dataclass(frozen=True)
class ExpansionObservation:
    child_ids: tuple[str, ...]
    stance: str
    statement: str


@dataclass(frozen=True)
class NodeScore:
    relevance: float
    stance_label: str
    stance_prob: float

    def to_dict(self) -> dict:
        return {
            "relevance": self.relevance,
            "stance_label": self.stance_label,
            "stance_prob": self.stance_prob,
        }


@dataclass(eq=False)
class RetrievalTree:
    session_id: str
    statement: str
    nodes: dict[str, RetrievalNode] = dataclass_field(default_factory=dict)
    children: dict[str, list[str]] = dataclass_field(default_factory=dict)
    recommended_node: str | None = None
    event_log: list[dict] = dataclass_field(default_factory=list)
    transcript_ref: str | None = None
    config_digest: str = ""

    def __post_init__(self) -> None:
        self._mutation_lock = threading.Lock()

    @property
    def root_id(self) -> str:
        return "n0"

    def node(self, node_id: str) -> RetrievalNode:
        node = self.nodes.get(node_id)
        if node is None:
            raise TreeError(f"unknown node {node_id!r}", code=UNKNOWN_NODE)
        return node

    def children_of(self, node_id: str) -> list[str]:
        return list(self.children.get(node_id, []))

    def next_node_id(self) -> str:
        return f"n{len(self.nodes)}"

    def next_step(self) -> int:
        return len(self.event_log)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RetrievalTree):
            return NotImplemented
        return (
            self.session_id == other.session_id
            and self.statement == other.statement
            and self.nodes == other.nodes
            and self.children == other.children
            and self.recommended_node == other.recommended_node
            and self.event_log == other.event_log
            and self.transcript_ref == other.transcript_ref
            and self.config_digest == other.config_digest
        )


# ---------------------------------------------------------------------------
# Pure tree functions


def rank_facts(records: list[FactRecord], input_stance: str) -> list[FactRecord]:
    """Stance-grouped ranking: facts matching the input stance first, each
    group ordered by relevance descending, ties by original index."""
    indexed = list(enumerate(records))
    indexed.sort(
        key=lambda item: (
            0 if item[1].evaluation.predicted_label == input_stance else 1,
            -item[1].relevance,
            item[0],
        )
    )
    return [record for _, record in indexed]


def node_score(node: RetrievalNode) -> NodeScore:
    if not node.facts:
        return NodeScore(relevance=0.0, stance_label="none", stance_prob=0.0)
    top = node.facts[0]
    return NodeScore(
        relevance=top.relevance,
        stance_label=top.evaluation.predicted_label,
        stance_prob=max(top.evaluation.support_prob, top.evaluation.oppose_prob),
    )


def session_reward(tree: RetrievalTree, relevance_threshold: float = 0.5) -> int:
    """Number of facts that are relevant enough and match their node's stance."""
    reward = 0
    for node in tree.nodes.values():
        if node.stance is None:
            continue
        for record in node.facts:
            if (
                record.relevance >= relevance_threshold
                and record.evaluation.predicted_label == node.stance
            ):
                reward += 1
    return reward


def tree_to_dict(tree: RetrievalTree) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "session_id": tree.session_id,
        "statement": tree.statement,
        "nodes": {node_id: node.to_dict() for node_id, node in tree.nodes.items()},
        "edges": {parent: list(ids) for parent, ids in tree.children.items()},
        "recommended_node": tree.recommended_node,
        "event_log": tree.event_log,
        "transcript_ref": tree.transcript_ref,
        "config_digest": tree.config_digest,
    }


def tree_from_dict(payload: dict) -> RetrievalTree:
    tree = RetrievalTree(
        session_id=payload["session_id"],
        statement=payload["statement"],
        recommended_node=payload.get("recommended_node"),
        event_log=list(payload.get("event_log", [])),
        transcript_ref=payload.get("transcript_ref"),
        config_digest=payload.get("config_digest", ""),
    )
    ordered = sorted(payload["nodes"], key=lambda node_id: int(node_id.lstrip("n")))
    for node_id in ordered:
        node_payload = payload["nodes"][node_id]
        node_payload = {
            key: value
            for key, value in node_payload.items()
            if key not in ("node_relevance", "node_stance_prob")
        }
        tree.nodes[node_id] = RetrievalNode.from_dict(node_payload)
    tree.children = {parent: list(ids) for parent, ids in payload.get("edges", {}).items()}
    return tree


def save_session(tree: RetrievalTree) -> bytes:
    payload = tree_to_dict(tree)
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    digest = hashlib.sha256(canonical.encode("utf-8")).hexdigest()
    return json.dumps(
        {"digest": digest, "payload": payload}, sort_keys=True, separators=(",", ":")
    ).encode("utf-8")


def load_session(blob: bytes) -> RetrievalTree:
    try:
        outer = json.loads(blob.decode("utf-8"))
        payload = outer["payload"]
        digest = outer["digest"]
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise TreeError(f"unreadable session blob: {exc}", code=CORRUPT_BLOB)
    if payload.get("format_version") != FORMAT_VERSION:
        raise TreeError(
            f"unsupported session format {payload.get('format_version')!r}", code=CORRUPT_BLOB
        )
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    if hashlib.sha256(canonical.encode("utf-8")).hexdigest() != digest:
        raise TreeError("session blob digest mismatch", code=CORRUPT_BLOB)
    return tree_from_dict(payload)


# ---------------------------------------------------------------------------
# Orchestrator


class Retriever:
    """Runs the retrieval pipeline against a store, a field catalog and a gateway."""

    def __init__(
        self,
        store: DatasetStore,
        catalog: FieldCatalog,
        gateway: LlmGateway,
        config: RetrievalConfig | None = None,
    ):
        self.store = store
        self.catalog = catalog
        self.gateway = gateway
        self.config = config or RetrievalConfig()

    # -- session lifecycle ----------------------------------------------------

    def create_session(
        self,
        statement: str,
        session_id: str = "s1",
        stances: tuple[str, ...] = STANCES,
        transcript_ref: str | None = None,
    ) -> RetrievalTree:
        statement = statement.strip()
        if not statement:
            raise TreeError("statement must be nonempty", code=EMPTY_STATEMENT)
        tree = RetrievalTree(
            session_id=session_id,
            statement=statement,
            transcript_ref=transcript_ref,
            config_digest=self.config.digest(),
        )
        root = RetrievalNode(id="n0", parent=None, stance=None, query=statement)
        tree.nodes["n0"] = root
        step = tree.next_step()
        child_ids: list[str] = []
        notes: list[str] = []
        for stance in stances:
            observation, stance_notes = self._expand_node(tree, root, stance)
            child_ids.extend(observation.child_ids)
            notes.extend(stance_notes)
        tree.event_log.append(
            {
                "step": step,
                "event": "create_session",
                "statement": statement,
                "stances": list(stances),
                "observation": {"child_ids": child_ids},
                "notes": notes,
            }
        )
        return tree

    def expand(self, tree: RetrievalTree, action: ExpansionAction) -> ExpansionObservation:
        node = tree.node(action.node_id)
        if action.stance not in STANCES:
            raise TreeError(f"unknown stance {action.stance!r}", code="UNKNOWN_STANCE")
        if not tree._mutation_lock.acquire(blocking=False):
            raise TreeError(f"node {action.node_id} is mid-expansion", code=NODE_BUSY)
        try:
            step = tree.next_step()
            observation, notes = self._expand_node(tree, node, action.stance)
            tree.event_log.append(
                {
                    "step": step,
                    "event": "expand",
                    "action": {"node_id": action.node_id, "stance": action.stance, "timestamp": step},
                    "observation": {
                        "child_ids": list(observation.child_ids),
                        "stance": action.stance,
                        "statement": tree.statement,
                    },
                    "notes": notes,
                }
            )
            return observation
        finally:
            tree._mutation_lock.release()

    def re_retrieve(self, tree: RetrievalTree, node_id: str, edited_query: str) -> RetrievalNode:
        node = tree.node(node_id)
        if node.parent is None:
            raise TreeError("the statement root cannot be re-retrieved", code="ROOT_NODE")
        edited_query = edited_query.strip()
        if not edited_query:
            raise TreeError("query must be nonempty", code=EMPTY_STATEMENT)
        if not tree._mutation_lock.acquire(blocking=False):
            raise TreeError(f"node {node_id} is mid-expansion", code=NODE_BUSY)
        try:
            step = tree.next_step()
            node.query = edited_query
            records, notes = self._retrieve_for_query(tree.statement, edited_query, node.stance)
            node.facts = rank_facts(records, node.stance)
            node.status = STATUS_FRESH if node.facts else STATUS_EMPTY
            tree.event_log.append(
                {
                    "step": step,
                    "event": "re_retrieve",
                    "node_id": node_id,
                    "query": edited_query,
                    "notes": notes,
                }
            )
            return node
        finally:
            tree._mutation_lock.release()

    # -- pipeline -------------------------------------------------------------

    def _expand_node(
        self, tree: RetrievalTree, node: RetrievalNode, stance: str
    ) -> tuple[ExpansionObservation, list[str]]:
        notes: list[str] = []
        try:
            subqueries = self.gateway.decompose_query(tree.statement, node.query, stance)
        except LlmError as exc:
            _reraise_replay_miss(exc)
            notes.append(f"decompose failed: {exc.code}: {exc}")
            subqueries = []

        built: list[RetrievalNode] = []
        for subquery in subqueries[: self.config.children_per_expansion]:
            records, sub_notes = self._retrieve_for_query(tree.statement, subquery.text, stance)
            notes.extend(sub_notes)
            ranked = rank_facts(records, stance)
            built.append(
                RetrievalNode(
                    id="",  # assigned at commit
                    parent=node.id,
                    stance=stance,
                    query=subquery.text,
                    direction=subquery.direction,
                    facts=ranked,
                    status=STATUS_FRESH if ranked else STATUS_EMPTY,
                )
            )

        # commit the whole child set in sub-query order
        child_ids: list[str] = []
        for child in built:
            child.id = tree.next_node_id()
            tree.nodes[child.id] = child
            child_ids.append(child.id)
        tree.children[node.id] = tree.children_of(node.id) + child_ids
        node.status = STATUS_EXPANDED

        if child_ids:
            self._plan_recommendation(tree, child_ids, stance, notes)
        return (
            ExpansionObservation(
                child_ids=tuple(child_ids), stance=stance, statement=tree.statement
            ),
            notes,
        )

    def _plan_recommendation(
        self, tree: RetrievalTree, child_ids: list[str], stance: str, notes: list[str]
    ) -> None:
        children = [tree.nodes[child_id] for child_id in child_ids]
        scores = [node_score(child) for child in children]
        fallback = max(range(len(children)), key=lambda i: (scores[i].relevance, -i))
        candidates = [
            {
                "index": i,
                "sub_query": child.query,
                "facts": [
                    {
                        "description": record.fact.description,
                        "stance": record.evaluation.predicted_label,
                        "relevance": record.relevance,
                    }
                    for record in child.facts
                ],
            }
            for i, child in enumerate(children)
        ]
        recommendation = self.gateway.plan(candidates, tree.statement, stance, fallback)
        if recommendation.fallback:
            notes.append(f"planner fallback: {recommendation.reasoning}")
        previous = tree.recommended_node
        if previous is not None and previous in tree.nodes:
            tree.nodes[previous].recommended = False
        chosen = children[recommendation.recommend_index]
        chosen.recommended = True
        tree.recommended_node = chosen.id

    def _retrieve_for_query(
        self, statement: str, query_text: str, stance: str
    ) -> tuple[list[FactRecord], list[str]]:
        notes: list[str] = []
        try:
            matches = self.catalog.top_k_fields(query_text, k=self.config.field_match_k)
        except EmbeddingError as exc:
            notes.append(f"field matching failed: {exc.code}: {exc}")
            return [], notes
        matches = [m for m in matches if m.similarity > self.config.min_field_similarity]
        candidate_ids: list[str] = []
        for match in matches:
            if match.field.dataset_id not in candidate_ids:
                candidate_ids.append(match.field.dataset_id)
        candidate_ids = candidate_ids[: self.config.candidate_datasets_max]
        if not candidate_ids:
            notes.append("no data field matched above the similarity floor")
            return [], notes

        subtables: list[SubTable] = []
        for dataset_id in candidate_ids:
            dataset = self.store.get(dataset_id)
            if dataset is None:
                notes.append(f"candidate dataset {dataset_id} disappeared from the store")
                continue
            relevant = [m.field.name for m in matches if m.field.dataset_id == dataset_id]
            subtable = self._search_dataset(dataset, query_text, relevant, notes)
            if subtable is not None and subtable.rows:
                subtables.append(subtable)

        pending: list[tuple[DataFact, str, FactResult, SubTable]] = []
        for subtable in subtables:
            try:
                extraction = self.gateway.extract_facts(subtable, statement, query_text, stance)
            except LlmError as exc:
                _reraise_replay_miss(exc)
                notes.append(f"fact extraction failed: {exc.code}: {exc}")
                continue
            notes.extend(f"dropped fact: {reason}" for reason in extraction.dropped)
            for fact, description in extraction.pairs:
                report = validate_fact(fact, subtable.fields, subtable.rows)
                if not report.ok:
                    notes.append(
                        "dropped fact: "
                        + "; ".join(f"{v.rule}: {v.message}" for v in report.violations)
                    )
                    continue
                try:
                    result = compute_fact(fact, subtable)
                except FactComputeError as exc:
                    notes.append(f"dropped fact: {exc.code}: {exc}")
                    continue
                pending.append((fact, description.strip() or canonical_description(result), result, subtable))

        if not pending:
            return [], notes

        pairs = [(fact, description) for fact, description, _, _ in pending]
        try:
            evaluations = self.gateway.evaluate_facts(pairs, statement)
        except LlmError as exc:
            _reraise_replay_miss(exc)
            notes.append(f"fact evaluation degraded: {exc.code}: {exc}")
            evaluations = [
                FactEvaluation(
                    fact_index=i,
                    support_prob=0.5,
                    oppose_prob=0.5,
                    predicted_label=SUPPORT,
                    explanation="evaluation unavailable, defaulted",
                    flags=("missing_defaulted", "tie_default_support"),
                )
                for i in range(len(pairs))
            ]

        records = []
        for i, (fact, description, result, subtable) in enumerate(pending):
            score = emb.relevance(self.catalog.provider, description, statement, query_text)
            records.append(
                FactRecord(
                    fact=fact,
                    result=result,
                    evaluation=evaluations[i],
                    relevance=score,
                    source=subtable,
                )
            )
        return records, notes

    def _search_dataset(
        self, dataset, query_text: str, relevant_series: list[str], notes: list[str]
    ) -> SubTable | None:
        values = {f.name: list(f.sample_values) for f in dataset.fields}
        try:
            sql = self.gateway.generate_sql(
                query=query_text,
                table_name=dataset.name,
                columns=dataset.field_names,
                values=values,
                relevant_series=relevant_series,
            )
        except LlmError as exc:
            _reraise_replay_miss(exc)
            notes.append(f"text-to-SQL failed: {exc.code}: {exc}")
            return None
        for round_index in range(self.config.sql_repair_rounds + 1):
            report = validate_query(sql, dataset)
            if report.ok:
                try:
                    return execute_query(sql, dataset)
                except ExecutionFailure as exc:
                    errors = [str(exc)]
            else:
                errors = [f"{e.code}: {e.message}" for e in report.errors]
            if round_index == self.config.sql_repair_rounds:
                notes.append(
                    f"query for dataset {dataset.id} failed after "
                    f"{self.config.sql_repair_rounds} repairs: " + "; ".join(errors)
                )
                return None
            try:
                sql = self.gateway.generate_sql(
                    query=query_text,
                    table_name=dataset.name,
                    columns=dataset.field_names,
                    values=values,
                    relevant_series=relevant_series,
                    previous_sql=sql,
                    errors=errors,
                )
            except LlmError as exc:
                _reraise_replay_miss(exc)
                notes.append(f"text-to-SQL repair failed: {exc.code}: {exc}")
                return None
        return None


# ---------------------------------------------------------------------------
# Event-log replay


def replay_events(retriever: Retriever, blob: bytes) -> RetrievalTree:
    """Re-run a saved session's user actions; with a transcript-backed gateway
    this reproduces the tree exactly."""
    source = load_session(blob)
    tree: RetrievalTree | None = None
    for event in source.event_log:
        kind = event["event"]
        if kind == "create_session":
            tree = retriever.create_session(
                event["statement"],
                session_id=source.session_id,
                stances=tuple(event.get("stances", STANCES)),
                transcript_ref=source.transcript_ref,
            )
        elif kind == "expand":
            if tree is None:
                raise TreeError("expand event before create_session", code=CORRUPT_BLOB)
            retriever.expand(
                tree,
                ExpansionAction(
                    node_id=event["action"]["node_id"], stance=event["action"]["stance"]
                ),
            )
        elif kind == "re_retrieve":
            if tree is None:
                raise TreeError("re_retrieve event before create_session", code=CORRUPT_BLOB)
            retriever.re_retrieve(tree, event["node_id"], event["query"])
        else:
            raise TreeError(f"unknown event kind {kind!r}", code=CORRUPT_BLOB)
    if tree is None:
        raise TreeError("session blob has no create_session event", code=CORRUPT_BLOB)
    return tree


__all__ = [
    "ExpansionAction",
    "ExpansionObservation",
    "FactRecord",
    "NodeScore",
    "PLANNING_GOAL",
    "RetrievalConfig",
    "RetrievalNode",
    "RetrievalTree",
    "Retriever",
    "load_session",
    "node_score",
    "rank_facts",
    "replay_events",
    "save_session",
    "session_reward",
    "tree_from_dict",
    "tree_to_dict",
    "OPPOSE",
    "SUPPORT",
]
