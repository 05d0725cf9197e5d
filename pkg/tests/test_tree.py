"""Retrieval tree: session lifecycle, ranking, reward, persistence, replay."""

from __future__ import annotations

import random

import pytest

from stancefacts.config import build_runtime
from stancefacts.datastore import FieldDescriptor, SubTable
from stancefacts.errors import TreeError
from stancefacts.facts import parse_fact
from stancefacts.gateway import FactEvaluation
from stancefacts.engine import FactResult, GroupValue
from stancefacts.tree import (
    ExpansionAction,
    FactRecord,
    RetrievalNode,
    RetrievalTree,
    load_session,
    node_score,
    rank_facts,
    replay_events,
    save_session,
    session_reward,
)

from canned import STATEMENT, canned_config, run_canned_session


# ---------------------------------------------------------------------------
# helpers for synthetic trees


def dummy_record(relevance: float, label: str, prob: float = 0.8, index: int = 0) -> FactRecord:
    fact = parse_fact(
        {
            "type": "value",
            "measure": [{"aggregate": "none", "field": "v"}],
            "breakdown": ["g"],
            "subspace": [{"field": "g", "value": "a"}],
            "focus": [],
            "description": f"fact {index}",
        }
    )
    support = prob if label == "support" else 1.0 - prob
    return FactRecord(
        fact=fact,
        result=FactResult(fact=fact, groups=[GroupValue("a", 1.0)], derived={"scalar": 1.0}, focus_keys=[]),
        evaluation=FactEvaluation(
            fact_index=index,
            support_prob=support,
            oppose_prob=1.0 - support,
            predicted_label=label,
        ),
        relevance=relevance,
        source=SubTable(
            source_dataset="d1",
            fields=[FieldDescriptor("g", "categorical", "d1"), FieldDescriptor("v", "numerical", "d1")],
            rows=[["a", 1.0]],
            generating_query="SELECT *",
        ),
    )


def synthetic_tree(rng: random.Random) -> RetrievalTree:
    tree = RetrievalTree(session_id="syn", statement="s")
    tree.nodes["n0"] = RetrievalNode(id="n0", parent=None, stance=None, query="s")
    children = []
    for i in range(1, rng.randint(2, 7)):
        stance = rng.choice(["support", "oppose"])
        node = RetrievalNode(id=f"n{i}", parent="n0", stance=stance, query=f"q{i}")
        node.facts = [
            dummy_record(rng.random(), rng.choice(["support", "oppose"]), rng.random(), j)
            for j in range(rng.randint(0, 4))
        ]
        tree.nodes[node.id] = node
        children.append(node.id)
    tree.children["n0"] = children
    return tree


# ---------------------------------------------------------------------------
# session lifecycle


def test_create_session_builds_six_children(canned_runtime):
    tree = canned_runtime.retriever.create_session(STATEMENT)
    root_children = tree.children_of("n0")
    assert len(root_children) == 6
    stances = [tree.nodes[c].stance for c in root_children]
    assert stances == ["support"] * 3 + ["oppose"] * 3
    directions = [tree.nodes[c].direction for c in root_children]
    assert directions == [
        "Gini trends", "Enrollment divergence", "Labor force gaps",
        "Gini declining", "Enrollment improving", "Displacement stabilizing",
    ]
    assert tree.nodes["n0"].status == "expanded"
    assert tree.recommended_node in root_children


def test_empty_statement_rejected(canned_runtime):
    with pytest.raises(TreeError) as err:
        canned_runtime.retriever.create_session("   ")
    assert err.value.code == "EMPTY_STATEMENT"


def test_expansion_yields_three_children_and_keeps_failures(canned_tree):
    deeper = canned_tree.children_of("n5")
    assert len(deeper) == 3
    statuses = [canned_tree.nodes[c].status for c in deeper]
    assert statuses == ["fresh", "empty", "empty"]  # SQL dead end and no-match child retained
    assert all(canned_tree.nodes[c].stance == "oppose" for c in deeper)


def test_contrary_stance_facts_are_retained(canned_tree):
    n2 = canned_tree.nodes["n2"]  # support node whose facts all predict oppose
    assert n2.status == "fresh"
    assert {r.evaluation.predicted_label for r in n2.facts} == {"oppose"}


def test_mixed_stance_node_orders_matching_group_first(canned_tree):
    n6 = canned_tree.nodes["n6"]
    labels = [r.evaluation.predicted_label for r in n6.facts]
    assert labels == ["oppose", "support"]


def test_every_stored_fact_passed_validation_and_computation(canned_tree):
    from stancefacts.facts import validate_fact

    for node in canned_tree.nodes.values():
        for record in node.facts:
            report = validate_fact(record.fact, record.source.fields, record.source.rows)
            assert report.ok
            assert record.result.groups


def test_tree_reachability_and_unique_ids(canned_tree):
    seen = set()
    frontier = ["n0"]
    while frontier:
        node_id = frontier.pop()
        assert node_id not in seen  # acyclic
        seen.add(node_id)
        frontier.extend(canned_tree.children_of(node_id))
    assert seen == set(canned_tree.nodes)


def test_busy_session_rejects_concurrent_expand(canned_runtime):
    tree = canned_runtime.retriever.create_session(STATEMENT)
    assert tree._mutation_lock.acquire(blocking=False)
    try:
        with pytest.raises(TreeError) as err:
            canned_runtime.retriever.expand(tree, ExpansionAction(node_id="n1", stance="support"))
        assert err.value.code == "NODE_BUSY"
    finally:
        tree._mutation_lock.release()


def test_expand_unknown_node_404s(canned_runtime):
    tree = canned_runtime.retriever.create_session(STATEMENT)
    with pytest.raises(TreeError) as err:
        canned_runtime.retriever.expand(tree, ExpansionAction(node_id="n99", stance="support"))
    assert err.value.code == "UNKNOWN_NODE"


def test_recommended_node_comes_from_latest_expansion(canned_tree):
    assert canned_tree.recommended_node == "n7"
    assert canned_tree.nodes["n7"].recommended
    assert sum(1 for n in canned_tree.nodes.values() if n.recommended) == 1


# ---------------------------------------------------------------------------
# re_retrieve


def re_retrieve_script():
    from canned import facts_response, fact, NONE_VALUE, evaluations

    return {
        "text2sql": [
            "SELECT country, year, value FROM wdi_indicators WHERE series_code = 'SI.POV.GINI' AND year = '2023' LIMIT 10"
        ],
        "extract": [
            facts_response(
                fact(
                    "extreme",
                    NONE_VALUE,
                    ["country"],
                    [],
                    [{"field": "country", "value": "South Africa"}],
                    "South Africa shows the widest inequality at 63.",
                )
            )
        ],
        "evaluate": [evaluations((0.88, 0.12))],
    }


def test_re_retrieve_replaces_facts_keeps_id(canned_runtime):
    tree = canned_runtime.retriever.create_session(STATEMENT)
    # replace the unused deeper-expansion queues with the re-retrieve script
    for kind, responses in re_retrieve_script().items():
        canned_runtime.gateway.provider._queues[kind] = list(responses)
    node = canned_runtime.retriever.re_retrieve(
        tree, "n2", "Show the Gini index spread across countries"
    )
    assert node.id == "n2"
    assert node.query == "Show the Gini index spread across countries"
    assert [r.fact.type.value for r in node.facts] == ["extreme"]
    assert tree.children_of("n2") == []  # children untouched
    assert tree.event_log[-1]["event"] == "re_retrieve"


def test_re_retrieve_below_similarity_floor_empties_node(canned_runtime):
    tree = canned_runtime.retriever.create_session(STATEMENT)
    node = canned_runtime.retriever.re_retrieve(tree, "n1", "Does qqqz qqzx improve?")
    assert node.status == "empty"
    assert node.facts == []


def test_re_retrieve_root_rejected(canned_runtime):
    tree = canned_runtime.retriever.create_session(STATEMENT)
    with pytest.raises(TreeError):
        canned_runtime.retriever.re_retrieve(tree, "n0", "anything")


# ---------------------------------------------------------------------------
# rank_facts


def test_rank_facts_spec_example():
    records = [
        dummy_record(0.4, "support", index=0),
        dummy_record(0.9, "oppose", index=1),
        dummy_record(0.7, "support", index=2),
    ]
    ranked = rank_facts(records, "support")
    assert [r.relevance for r in ranked] == [0.7, 0.4, 0.9]
    assert [r.evaluation.predicted_label for r in ranked] == ["support", "support", "oppose"]


def test_rank_facts_all_matching_is_plain_relevance_sort():
    records = [dummy_record(r, "oppose", index=i) for i, r in enumerate([0.2, 0.9, 0.5])]
    ranked = rank_facts(records, "oppose")
    assert [r.relevance for r in ranked] == [0.9, 0.5, 0.2]


def test_rank_facts_random_permutation_laws():
    rng = random.Random(1312)
    for _ in range(1000):
        n = rng.randint(0, 8)
        records = [
            dummy_record(round(rng.random(), 3), rng.choice(["support", "oppose"]), index=i)
            for i in range(n)
        ]
        stance = rng.choice(["support", "oppose"])
        ranked = rank_facts(records, stance)
        # permutation of the input
        assert sorted(map(id, ranked)) == sorted(map(id, records))
        labels = [r.evaluation.predicted_label for r in ranked]
        # matching-stance prefix property
        if stance in labels:
            boundary = max(i for i, lab in enumerate(labels) if lab == stance)
            assert all(lab == stance for lab in labels[: boundary + 1])
        # within-group relevance monotonicity
        for group_label in ("support", "oppose"):
            rels = [r.relevance for r in ranked if r.evaluation.predicted_label == group_label]
            assert rels == sorted(rels, reverse=True)


# ---------------------------------------------------------------------------
# node_score and session_reward


def test_node_score_of_top_fact():
    node = RetrievalNode(id="n1", parent="n0", stance="support", query="q")
    node.facts = rank_facts(
        [dummy_record(0.82, "support", prob=0.76), dummy_record(0.3, "oppose", prob=0.9)],
        "support",
    )
    score = node_score(node)
    assert (score.relevance, score.stance_label, score.stance_prob) == (0.82, "support", 0.76)


def test_node_score_empty_node():
    node = RetrievalNode(id="n1", parent="n0", stance="support", query="q")
    score = node_score(node)
    assert (score.relevance, score.stance_label, score.stance_prob) == (0.0, "none", 0.0)


def test_node_score_is_max_relevance_of_matching_group():
    rng = random.Random(77)
    for _ in range(200):
        records = [
            dummy_record(round(rng.random(), 3), rng.choice(["support", "oppose"]), index=i)
            for i in range(rng.randint(1, 6))
        ]
        stance = rng.choice(["support", "oppose"])
        node = RetrievalNode(id="n1", parent="n0", stance=stance, query="q")
        node.facts = rank_facts(records, stance)
        matching = [r.relevance for r in records if r.evaluation.predicted_label == stance]
        if matching:
            assert node_score(node).relevance == max(matching)


def test_session_reward_trivial_cases():
    tree = RetrievalTree(session_id="t", statement="s")
    tree.nodes["n0"] = RetrievalNode(id="n0", parent=None, stance=None, query="s")
    assert session_reward(tree) == 0
    node = RetrievalNode(id="n1", parent="n0", stance="support", query="q")
    node.facts = [
        dummy_record(0.8, "support"),
        dummy_record(0.3, "support"),
        dummy_record(0.9, "oppose"),
    ]
    tree.nodes["n1"] = node
    tree.children["n0"] = ["n1"]
    assert session_reward(tree, 0.5) == 1


def test_session_reward_matches_flat_scan_and_monotone():
    rng = random.Random(4), random.Random(4)
    for _ in range(200):
        tree = synthetic_tree(rng[0])
        threshold = rng[0].random()
        expected = sum(
            1
            for node in tree.nodes.values()
            if node.stance is not None
            for record in node.facts
            if record.relevance >= threshold and record.evaluation.predicted_label == node.stance
        )
        assert session_reward(tree, threshold) == expected
        tighter = min(1.0, threshold + 0.2)
        assert session_reward(tree, threshold) >= session_reward(tree, tighter)


# ---------------------------------------------------------------------------
# persistence and replay


def test_save_load_round_trip(canned_tree):
    blob = save_session(canned_tree)
    loaded = load_session(blob)
    assert loaded == canned_tree
    assert save_session(loaded) == blob


def test_corrupt_blob_rejected(canned_tree):
    blob = save_session(canned_tree)
    with pytest.raises(TreeError) as err:
        load_session(blob[: len(blob) // 2])
    assert err.value.code == "CORRUPT_BLOB"
    tampered = blob.replace(b"Gini trends", b"Tampered dir")
    with pytest.raises(TreeError) as err:
        load_session(tampered)
    assert err.value.code == "CORRUPT_BLOB"


def test_transcript_replay_reproduces_identical_trees(canned_transcript_path, tmp_path):
    store_dir = tmp_path / "store"
    from stancefacts.sampledata import load_sample_store

    load_sample_store().save(store_dir)

    def run():
        runtime = build_runtime(
            canned_config(),
            store_dir=store_dir,
            transcript_path=canned_transcript_path,
            mode="replay",
        )
        return run_canned_session(runtime, depth=1)

    first, second = run(), run()
    assert first == second
    assert save_session(first) == save_session(second)


def test_event_log_replay_rebuilds_saved_session(canned_transcript_path, tmp_path):
    store_dir = tmp_path / "store"
    from stancefacts.sampledata import load_sample_store

    load_sample_store().save(store_dir)
    runtime = build_runtime(
        canned_config(), store_dir=store_dir, transcript_path=canned_transcript_path, mode="replay"
    )
    original = run_canned_session(runtime, depth=1)
    blob = save_session(original)

    replay_runtime = build_runtime(
        canned_config(), store_dir=store_dir, transcript_path=canned_transcript_path, mode="replay"
    )
    rebuilt = replay_events(replay_runtime.retriever, blob)
    assert save_session(rebuilt) == blob
    assert [n.id for n in rebuilt.nodes.values()] == [n.id for n in original.nodes.values()]
