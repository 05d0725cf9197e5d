"""Canned LLM responses for a full income-inequality retrieval session.

The scripted provider feeds the pipeline in call order; recording it once
produces a transcript that replays the same session deterministically.  The
script covers the initial dual-stance expansion (6 children), one deeper
expansion of the recommended node (3 children, one of which exercises the
SQL-repair dead end and one the no-matching-field path), plus assorted
degradation cases (a malformed fact that gets dropped, contrary-stance
facts that stay in the tree).
"""

from __future__ import annotations

import json

from stancefacts.config import AppConfig, build_runtime
from stancefacts.gateway import RecordingChatProvider, ScriptedChatProvider, Transcript
from stancefacts.sampledata import load_sample_store
from stancefacts.tree import ExpansionAction

STATEMENT = "Global income inequality is widening, with significant disparities between nations."

# the canned script assumes one candidate dataset per sub-query; the floor
# also screens out weak hash-collision matches between unrelated texts
CANNED_RETRIEVAL_OVERRIDES = {"min_field_similarity": 0.1, "candidate_datasets_max": 1}


def canned_config() -> AppConfig:
    from stancefacts.tree import RetrievalConfig

    return AppConfig(retrieval=RetrievalConfig(**CANNED_RETRIEVAL_OVERRIDES))


def fact(type_, measure, breakdown, subspace, focus, description):
    return json.dumps(
        {
            "type": type_,
            "measure": measure,
            "breakdown": breakdown,
            "subspace": subspace,
            "focus": focus,
            "description": description,
        }
    )


def facts_response(*facts_json: str) -> str:
    return "\n\n".join(f"Generated Data Fact: {f}" for f in facts_json)


NONE_VALUE = [{"aggregate": "none", "field": "value"}]

SUPPORT_DECOMPOSE = json.dumps(
    {
        "queryList": [
            "What are the trends in the Gini index across countries?",
            "Is tertiary enrollment diverging across countries?",
            "Are labor force participation gaps persistent between genders?",
        ],
        "directionList": ["Gini trends", "Enrollment divergence", "Labor force gaps"],
    }
)

OPPOSE_DECOMPOSE = json.dumps(
    {
        "queryList": [
            "Is the Gini index declining in major economies?",
            "Are enrollment opportunities improving worldwide?",
            "Is displacement from disasters stabilizing in recent years?",
        ],
        "directionList": ["Gini declining", "Enrollment improving", "Displacement stabilizing"],
    }
)

# "qqqz"/"qqzx" hash into buckets no field text uses, so this sub-query finds
# no data field above the similarity floor and its child stays empty
DEEPER_DECOMPOSE = json.dumps(
    {
        "queryList": [
            "Is tertiary enrollment rising across recent years?",
            "Does qqqz qqzx improve?",
            "Are particulate emission damage costs easing?",
        ],
        "directionList": ["Enrollment rising", "No data angle", "Damage costs easing"],
    }
)

SQL_GINI_SUPPORT = (
    "SELECT * FROM wdi_indicators WHERE series_code = 'SI.POV.GINI' AND year = '2023' LIMIT 10"
)
SQL_ENROLLMENT_SUPPORT = (
    "SELECT country, year, value FROM wdi_indicators WHERE series_code = 'SE.TER.ENRR.FE' LIMIT 10"
)
SQL_LABOR = "SELECT * FROM labor_participation WHERE country = 'China' LIMIT 10"
SQL_GINI_OPPOSE = (
    "SELECT country, year, value FROM wdi_indicators "
    "WHERE series_code = 'SI.POV.GINI' AND year = '2023' LIMIT 10"
)
SQL_ENROLLMENT_OPPOSE = (
    "SELECT country, year, value FROM wdi_indicators "
    "WHERE series_code = 'SE.TER.ENRR.FE' AND country = 'China' LIMIT 10"
)
SQL_DISPLACEMENT = "SELECT * FROM wdi_indicators WHERE series_code = 'VC.IDP.NWDS' LIMIT 10"
SQL_ENROLLMENT_DEEP = (
    "SELECT country, year, value FROM wdi_indicators "
    "WHERE series_code = 'SE.TER.ENRR.FE' AND country = 'China' ORDER BY year LIMIT 10"
)
SQL_BROKEN = "SELECT ghost_column FROM wdi_indicators LIMIT 10"

GINI_SUPPORT_FACTS = facts_response(
    fact(
        "extreme",
        NONE_VALUE,
        ["country"],
        [{"field": "series_code", "value": "SI.POV.GINI"}],
        [{"field": "country", "value": "South Africa"}],
        "South Africa tops the Gini ranking at 63, far above Norway's 27.",
    ),
    fact(
        "value",
        NONE_VALUE,
        ["country"],
        [
            {"field": "series_code", "value": "SI.POV.GINI"},
            {"field": "country", "value": "South Africa"},
        ],
        [],
        "South Africa's Gini index reached 63, the highest in the sample.",
    ),
    fact(
        "distribution",
        NONE_VALUE,
        ["country"],
        [{"field": "series_code", "value": "SI.POV.GINI"}],
        [],
        "Gini scores span from 27 to 63 across the ten countries.",
    ),
)

ENROLLMENT_SUPPORT_FACTS = facts_response(
    fact(
        "trend",
        NONE_VALUE,
        ["year"],
        [{"field": "country", "value": "China"}],
        [],
        "Tertiary enrollment among Chinese women rose from 40 in 2013 to 57.13 in 2022.",
    ),
    fact(
        "growth",  # unknown type: dropped, the rest of the batch survives
        NONE_VALUE,
        ["year"],
        [{"field": "country", "value": "China"}],
        [],
        "bad fact",
    ),
    fact(
        "difference",
        NONE_VALUE,
        ["year"],
        [{"field": "country", "value": "China"}],
        [{"field": "year", "value": "2022"}, {"field": "year", "value": "2013"}],
        "Enrollment increased by 42.83% between 2013 and 2022.",
    ),
)

LABOR_FACTS = facts_response(
    fact(
        "association",
        [{"aggregate": "none", "field": "female_rate"}, {"aggregate": "none", "field": "male_rate"}],
        ["year"],
        [{"field": "country", "value": "China"}],
        [],
        "Female and male participation rates move together tightly across the decade.",
    ),
    fact(
        "difference",
        [{"aggregate": "none", "field": "female_rate"}],
        ["year"],
        [{"field": "country", "value": "China"}],
        [{"field": "year", "value": 2014}, {"field": "year", "value": 2023}],
        "Female participation fell from 63.4 in 2014 to 59.3 in 2023.",
    ),
)

GINI_OPPOSE_FACTS = facts_response(
    fact(
        "value",
        NONE_VALUE,
        ["country"],
        [{"field": "country", "value": "Norway"}],
        [],
        "Norway's Gini index stood at 27, reflecting low inequality.",
    ),
    fact(
        "rank",
        NONE_VALUE,
        ["country"],
        [],
        [{"field": "country", "value": "Norway"}],
        "Norway ranks 10 among the listed countries with a Gini of 27.",
    ),
)

ENROLLMENT_OPPOSE_FACTS = facts_response(
    fact(
        "trend",
        NONE_VALUE,
        ["year"],
        [{"field": "country", "value": "China"}],
        [],
        "Tertiary enrollment keeps improving, rising from 40 to 57.13.",
    ),
)

DISPLACEMENT_FACTS = facts_response(
    fact(
        "value",
        NONE_VALUE,
        ["year"],
        [
            {"field": "series_code", "value": "VC.IDP.NWDS"},
            {"field": "year", "value": "2021"},
        ],
        [],
        "Disaster displacement in China reached 6,037,000 cases in 2021.",
    ),
    fact(
        "extreme",
        [{"aggregate": "min", "field": "value"}],
        ["year"],
        [{"field": "series_code", "value": "VC.IDP.NWDS"}],
        [],
        "Displacement fell to its lowest, 3,632,000 cases, in 2022.",
    ),
)

ENROLLMENT_DEEP_FACTS = facts_response(
    fact(
        "trend",
        NONE_VALUE,
        ["year"],
        [{"field": "country", "value": "China"}],
        [],
        "Enrollment climbed steadily from 40 to 57.13 over the period.",
    ),
)


def evaluations(*pairs):
    return json.dumps(
        [
            {"index": i, "support": s, "oppose": o, "explanation": f"scripted evaluation {i}"}
            for i, (s, o) in enumerate(pairs)
        ]
    )


def scripted_responses() -> dict[str, list[str]]:
    return {
        "decompose": [SUPPORT_DECOMPOSE, OPPOSE_DECOMPOSE, DEEPER_DECOMPOSE],
        "text2sql": [
            # support expansion: one candidate dataset per sub-query
            SQL_GINI_SUPPORT,
            SQL_ENROLLMENT_SUPPORT,
            SQL_LABOR,
            # oppose expansion
            SQL_GINI_OPPOSE,
            SQL_ENROLLMENT_OPPOSE,
            SQL_DISPLACEMENT,
            # deeper expansion: good query, then a dead-end repair loop
            SQL_ENROLLMENT_DEEP,
            SQL_BROKEN,
            SQL_BROKEN,
            SQL_BROKEN,
        ],
        "extract": [
            GINI_SUPPORT_FACTS,
            ENROLLMENT_SUPPORT_FACTS,
            LABOR_FACTS,
            GINI_OPPOSE_FACTS,
            ENROLLMENT_OPPOSE_FACTS,
            DISPLACEMENT_FACTS,
            ENROLLMENT_DEEP_FACTS,
        ],
        "evaluate": [
            evaluations((0.9, 0.1), (0.84, 0.16), (0.77, 0.23)),  # gini support
            evaluations((0.25, 0.75), (0.3, 0.7)),  # enrollment support: contrary stance
            evaluations((0.66, 0.34), (0.58, 0.42)),  # labor support
            evaluations((0.3, 0.7), (0.28, 0.72)),  # gini oppose
            evaluations((0.2, 0.8)),  # enrollment oppose
            evaluations((0.7, 0.3), (0.38, 0.62)),  # displacement: first fact contrary
            evaluations((0.22, 0.78)),  # deeper enrollment
        ],
        "plan": [
            '{"Reasoning": "Gini trends show the widest disparities.", "Recommend Index": 0}',
            '{"Reasoning": "Enrollment gains argue against widening inequality.", "Recommend Index": 1}',
            '{"Reasoning": "Enrollment keeps yielding usable facts.", "Recommend Index": 0}',
        ],
    }


def scripted_provider() -> ScriptedChatProvider:
    return ScriptedChatProvider(scripted_responses())


def build_canned_runtime(store_dir=None, chat_provider=None):
    """Runtime over the bundled sample store with a scripted chat provider."""
    config = canned_config()
    if store_dir is not None:
        return build_runtime(
            config, store_dir=store_dir, chat_provider=chat_provider or scripted_provider()
        )
    runtime = build_runtime(config, chat_provider=chat_provider or scripted_provider())
    for dataset in load_sample_store().datasets():
        runtime.store.add(dataset)
        runtime.catalog.add_dataset(dataset)
    return runtime


def run_canned_session(runtime, depth: int = 1, session_id: str = "s1", transcript_ref=None):
    tree = runtime.retriever.create_session(
        STATEMENT, session_id=session_id, transcript_ref=transcript_ref
    )
    for _ in range(depth):
        recommended = tree.recommended_node
        if recommended is None:
            break
        node = tree.nodes[recommended]
        runtime.retriever.expand(tree, ExpansionAction(node_id=recommended, stance=node.stance))
    return tree


def record_canned_transcript(path) -> Transcript:
    """Run the full canned session once, recording every response to `path`."""
    transcript = Transcript(path)
    provider = RecordingChatProvider(scripted_provider(), transcript)
    runtime = build_canned_runtime(chat_provider=provider)
    run_canned_session(runtime, depth=1)
    return transcript
