"""Command line interface: ingestion, serving, batch retrieval and replay.

Batch `retrieve` is machine-steered: after the initial dual-stance expansion
it repeatedly expands the planner-recommended node, so whole sessions run
unattended against a recorded transcript.  Errors print one ApiError-shaped
JSON object to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import AppConfig, build_runtime
from .datastore import DatasetStore, build_dataset
from .engine import chart_spec
from .errors import IngestError, StanceFactsError
from .gateway import STANCES, SUPPORT
from .tree import (
    ExpansionAction,
    load_session,
    replay_events,
    save_session,
)

DEFAULT_STORE = "data/store"


def _load_config(path: str | None) -> AppConfig:
    return AppConfig.from_file(path) if path else AppConfig()


def _fail(code: str, message: str, detail=None) -> int:
    sys.stderr.write(json.dumps({"code": code, "message": message, "detail": detail}) + "\n")
    return 2


def cmd_ingest(args) -> int:
    store = DatasetStore.load(args.store)
    text = Path(args.path).read_text(encoding="utf-8")
    dataset = build_dataset(text, name=args.name or Path(args.path).stem, provenance=str(args.path))
    if args.wide_wdi and not any(f.name == "year" for f in dataset.fields):
        raise IngestError("expected a wide WDI export with year columns", code="WIDE_EXPECTED")
    dataset = store.add(dataset)
    store.save(args.store)
    print(json.dumps({
        "id": dataset.id,
        "name": dataset.name,
        "rows": len(dataset.rows),
        "fields": [{"name": f.name, "kind": f.kind} for f in dataset.fields],
    }, indent=2))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    config = _load_config(args.config)
    mode = "replay" if args.replay else ("record" if args.record else "live")
    runtime = build_runtime(
        config,
        store_dir=args.store,
        transcript_path=args.replay or args.record,
        mode=mode,
    )
    app = create_app(runtime)
    uvicorn.run(app, host=args.host, port=args.port or config.port)
    return 0


def _build_retrieval_runtime(args):
    config = _load_config(args.config)
    mode = "replay" if args.replay else ("record" if args.record else "live")
    transcript = args.replay or args.record
    return build_runtime(config, store_dir=args.store, transcript_path=transcript, mode=mode)


def cmd_retrieve(args) -> int:
    runtime = _build_retrieval_runtime(args)
    stances = STANCES if args.stance == "both" else (args.stance,)
    transcript_ref = args.replay or args.record
    tree = runtime.retriever.create_session(
        args.statement,
        session_id=args.session_id,
        stances=stances,
        transcript_ref=str(transcript_ref) if transcript_ref else None,
    )
    for _ in range(args.depth):
        recommended = tree.recommended_node
        if recommended is None:
            break
        node = tree.nodes[recommended]
        runtime.retriever.expand(
            tree, ExpansionAction(node_id=recommended, stance=node.stance or SUPPORT)
        )
    blob = save_session(tree)
    Path(args.out).write_bytes(blob)
    print(
        json.dumps(
            {
                "session_id": tree.session_id,
                "nodes": len(tree.nodes),
                "recommended_node": tree.recommended_node,
                "out": args.out,
            }
        )
    )
    return 0


def cmd_replay(args) -> int:
    blob = Path(args.session_blob).read_bytes()
    config = _load_config(args.config)
    runtime = build_runtime(
        config, store_dir=args.store, transcript_path=args.transcript, mode="replay"
    )
    rebuilt = replay_events(runtime.retriever, blob)
    rebuilt_blob = save_session(rebuilt)
    if rebuilt_blob == blob:
        print(json.dumps({"identical": True, "nodes": len(rebuilt.nodes)}))
        return 0
    print(json.dumps({"identical": False, "nodes": len(rebuilt.nodes)}))
    return 1


def cmd_facts(args) -> int:
    blob = Path(args.tree).read_bytes()
    tree = load_session(blob)
    node = tree.node(args.node)
    store = DatasetStore.load(args.store) if args.store else DatasetStore()
    rows = []
    for index, record in enumerate(node.facts):
        dataset = store.get(record.source.source_dataset)
        provenance = (
            (dataset.provenance or dataset.name) if dataset else record.source.source_dataset
        )
        spec = chart_spec(record.result, provenance)
        rows.append(
            {
                "index": index,
                "type": record.fact.type.value,
                "description": record.fact.description,
                "relevance": record.relevance,
                "stance": record.evaluation.predicted_label,
            }
        )
        if args.emit_charts:
            out_dir = Path(args.emit_charts)
            out_dir.mkdir(parents=True, exist_ok=True)
            out_path = out_dir / f"chart_{args.node}_{index}.json"
            out_path.write_text(json.dumps(spec.to_dict(), indent=2), encoding="utf-8")
    print(json.dumps({"node": args.node, "facts": rows}, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stancefacts",
        description="Stance-based data fact retrieval over tabular datasets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="ingest a CSV dataset into the store")
    p_ingest.add_argument("path")
    p_ingest.add_argument("--name", default=None, help="dataset name (defaults to the file stem)")
    p_ingest.add_argument("--wide-wdi", action="store_true", help="expect a wide WDI export")
    p_ingest.add_argument("--store", default=DEFAULT_STORE)
    p_ingest.set_defaults(func=cmd_ingest)

    p_serve = sub.add_parser("serve", help="run the HTTP JSON API")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=None)
    p_serve.add_argument("--store", default=DEFAULT_STORE)
    p_serve.add_argument("--config", default=None)
    p_serve.add_argument("--replay", default=None, help="serve against a recorded transcript")
    p_serve.add_argument("--record", default=None, help="record live responses to a transcript")
    p_serve.set_defaults(func=cmd_serve)

    p_retrieve = sub.add_parser("retrieve", help="batch retrieval steered by the planner")
    p_retrieve.add_argument("--statement", required=True)
    p_retrieve.add_argument("--stance", choices=["both", "support", "oppose"], default="both")
    p_retrieve.add_argument("--depth", type=int, default=0,
                            help="planner-recommended expansions after the initial retrieval")
    p_retrieve.add_argument("--out", required=True)
    p_retrieve.add_argument("--store", default=DEFAULT_STORE)
    p_retrieve.add_argument("--config", default=None)
    p_retrieve.add_argument("--session-id", default="s1")
    p_retrieve.add_argument("--replay", default=None)
    p_retrieve.add_argument("--record", default=None)
    p_retrieve.set_defaults(func=cmd_retrieve)

    p_replay = sub.add_parser("replay", help="verify a session blob reconstructs byte-identically")
    p_replay.add_argument("session_blob")
    p_replay.add_argument("transcript")
    p_replay.add_argument("--store", default=DEFAULT_STORE)
    p_replay.add_argument("--config", default=None)
    p_replay.set_defaults(func=cmd_replay)

    p_facts = sub.add_parser("facts", help="list a node's facts and emit chart specs")
    p_facts.add_argument("tree", help="session blob written by retrieve")
    p_facts.add_argument("--node", required=True)
    p_facts.add_argument("--emit-charts", default=None)
    p_facts.add_argument("--store", default=None)
    p_facts.set_defaults(func=cmd_facts)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StanceFactsError as exc:
        return _fail(exc.code, exc.message, exc.detail)
    except FileNotFoundError as exc:
        return _fail("NOT_FOUND", str(exc))


if __name__ == "__main__":
    sys.exit(main())
