"""LLM gateway: providers, transcript recording/replay, structured parsing.

Every live response is appended to the transcript before parsing, keyed by
(kind, digest of the rendered prompt), which makes whole sessions replayable
byte-for-byte.  Parsers tolerate prose around JSON, repair by re-prompting at
most twice, and degrade per item instead of aborting a whole expansion.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path

import httpx

from . import prompts
from .datastore import SubTable
from .errors import FactParseError, LlmError
from .facts import DataFact, parse_fact, serialize_fact

LLM_UNAVAILABLE = "LLM_UNAVAILABLE"
MALFORMED_RESPONSE = "MALFORMED_RESPONSE"
EMPTY_RESPONSE = "EMPTY_RESPONSE"
REPLAY_MISS = "REPLAY_MISS"

SUPPORT = "support"
OPPOSE = "oppose"
STANCES = (SUPPORT, OPPOSE)

_FENCE_RE = re.compile(r"^\s*```[a-zA-Z0-9_-]*\s*|\s*```\s*$")


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def strip_code_fences(text: str) -> str:
    fenced = re.search(r"```[a-zA-Z0-9_-]*\n(.*?)```", text, re.DOTALL)
    if fenced:
        return fenced.group(1).strip()
    return _FENCE_RE.sub("", text).strip()


def iter_json_values(text: str):
    """Yield each top-level balanced JSON object/array embedded in `text`."""
    i = 0
    while i < len(text):
        ch = text[i]
        if ch not in "{[":
            i += 1
            continue
        close = "}" if ch == "{" else "]"
        depth = 0
        in_string = False
        escaped = False
        for j in range(i, len(text)):
            c = text[j]
            if in_string:
                if escaped:
                    escaped = False
                elif c == "\\":
                    escaped = True
                elif c == '"':
                    in_string = False
                continue
            if c == '"':
                in_string = True
            elif c in "{[":
                depth += 1
            elif c in "}]":
                depth -= 1
                if depth == 0:
                    if c == close:
                        try:
                            yield json.loads(text[i : j + 1])
                            i = j
                        except json.JSONDecodeError:
                            pass
                    break
        i += 1


def extract_json_value(text: str):
    """First balanced JSON object or array in `text`, or raise ValueError."""
    for value in iter_json_values(text):
        return value
    raise ValueError("no JSON object or array found in response")


# ---------------------------------------------------------------------------
# Transcript


class Transcript:
    """Append-only JSON-lines log of (kind, input_hash) -> raw response."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[tuple[str, str], str] = {}
        if self.path.is_file():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                entry = json.loads(line)
                self._entries.setdefault((entry["kind"], entry["input_hash"]), entry["response"])

    def __len__(self) -> int:
        return len(self._entries)

    def lookup(self, kind: str, input_hash: str) -> str | None:
        return self._entries.get((kind, input_hash))

    def append(self, kind: str, input_hash: str, response: str) -> None:
        with self._lock:
            key = (kind, input_hash)
            if key in self._entries:
                return  # (kind, input_hash) stays unique; replay is a function
            self._entries[key] = response
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(
                    json.dumps(
                        {
                            "kind": kind,
                            "input_hash": input_hash,
                            "response": response,
                            "timestamp": time.time(),
                        }
                    )
                )
                handle.write("\n")


# ---------------------------------------------------------------------------
# Providers


class HttpChatProvider:
    """Chat-completion JSON API client with bounded retries."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str = "",
        temperature: float = 0.2,
        timeout: float = 60.0,
        retries: int = 2,
        transport: httpx.BaseTransport | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.temperature = temperature
        self.retries = retries
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def complete(self, kind: str, prompt: str) -> str:
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                response = self._client.post(
                    f"{self.base_url}/chat/completions",
                    json={
                        "model": self.model,
                        "temperature": self.temperature,
                        "messages": [{"role": "user", "content": prompt}],
                    },
                )
                response.raise_for_status()
                return response.json()["choices"][0]["message"]["content"]
            except (httpx.HTTPError, KeyError, IndexError, json.JSONDecodeError) as exc:
                last_error = exc
                if attempt < self.retries:
                    time.sleep(min(0.25 * (attempt + 1), 1.0))
        raise LlmError(
            f"chat provider failed after {self.retries + 1} attempts: {last_error}",
            code=LLM_UNAVAILABLE,
        )


class ScriptedChatProvider:
    """Canned responses per prompt kind, consumed in call order (tests/fixtures)."""

    def __init__(self, responses: dict[str, list[str]]):
        self._queues = {kind: list(items) for kind, items in responses.items()}

    def complete(self, kind: str, prompt: str) -> str:
        queue = self._queues.get(kind)
        if not queue:
            raise LlmError(f"no scripted response left for kind {kind!r}", code=LLM_UNAVAILABLE)
        return queue.pop(0)


class ReplayChatProvider:
    """Serves responses from a transcript; a miss is a hard error."""

    def __init__(self, transcript: Transcript):
        self.transcript = transcript

    def complete(self, kind: str, prompt: str) -> str:
        response = self.transcript.lookup(kind, prompt_hash(prompt))
        if response is None:
            raise LlmError(
                f"transcript has no entry for kind {kind!r} and this prompt",
                code=REPLAY_MISS,
            )
        return response


class RecordingChatProvider:
    """Wraps a live provider, appending each response to the transcript before use."""

    def __init__(self, inner, transcript: Transcript):
        self.inner = inner
        self.transcript = transcript

    def complete(self, kind: str, prompt: str) -> str:
        digest = prompt_hash(prompt)
        response = self.inner.complete(kind, prompt)
        self.transcript.append(kind, digest, response)
        return response


# ---------------------------------------------------------------------------
# Structured results


@dataclass(frozen=True)
class SubQuery:
    text: str
    direction: str
    stance: str


@dataclass(frozen=True)
class FactEvaluation:
    fact_index: int
    support_prob: float
    oppose_prob: float
    predicted_label: str
    explanation: str = ""
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "fact_index": self.fact_index,
            "support_prob": self.support_prob,
            "oppose_prob": self.oppose_prob,
            "predicted_label": self.predicted_label,
            "explanation": self.explanation,
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "FactEvaluation":
        return cls(
            fact_index=payload["fact_index"],
            support_prob=payload["support_prob"],
            oppose_prob=payload["oppose_prob"],
            predicted_label=payload["predicted_label"],
            explanation=payload.get("explanation", ""),
            flags=tuple(payload.get("flags", [])),
        )


@dataclass(frozen=True)
class PlanRecommendation:
    reasoning: str
    recommend_index: int
    fallback: bool = False


@dataclass
class ExtractionResult:
    pairs: list[tuple[DataFact, str]]
    dropped: list[str] = dataclass_field(default_factory=list)


# ---------------------------------------------------------------------------
# Gateway operations


class LlmGateway:
    def __init__(
        self, provider, repair_budget: int = 2, max_facts: int = 3, max_concurrent: int = 4
    ):
        self.provider = provider
        self.repair_budget = repair_budget
        self.max_facts = max_facts
        self._in_flight = threading.Semaphore(max_concurrent)

    def _complete(self, kind: str, prompt: str) -> str:
        with self._in_flight:  # bound concurrent in-flight LLM calls
            return self.provider.complete(kind, prompt)

    def _call_with_repair(self, kind: str, prompt: str, parse):
        """Call, parse, and re-prompt with the parse error up to the repair budget."""
        current = prompt
        last_error = "unparseable response"
        for _ in range(self.repair_budget + 1):
            response = self._complete(kind, current)
            try:
                return parse(response)
            except (ValueError, FactParseError) as exc:
                last_error = str(exc)
                current = (
                    prompt
                    + "\n\nYour previous response could not be parsed: "
                    + last_error
                    + "\nRespond again strictly in the required output format."
                )
        raise LlmError(
            f"response for {kind} stayed malformed after {self.repair_budget} repairs: {last_error}",
            code=MALFORMED_RESPONSE,
        )

    # -- query decomposition ------------------------------------------------

    def decompose_query(self, statement: str, query: str, stance: str) -> list[SubQuery]:
        prompt = prompts.render_decompose(query=query or statement, stance=stance)

        def parse(response: str) -> list[SubQuery]:
            payload = extract_json_value(response)
            if not isinstance(payload, dict):
                raise ValueError("expected an object with queryList and directionList")
            queries = payload.get("queryList")
            directions = payload.get("directionList", [])
            if not isinstance(queries, list) or len(queries) != 3:
                raise ValueError("queryList must contain exactly 3 sub-queries")
            if not all(isinstance(q, str) and q.strip() for q in queries):
                raise ValueError("sub-queries must be nonempty strings")
            if not isinstance(directions, list):
                raise ValueError("directionList must be a list")
            out = []
            for i, text in enumerate(queries):
                direction = directions[i] if i < len(directions) and isinstance(directions[i], str) else ""
                direction = " ".join(direction.split()[:3]) or " ".join(text.split()[:3])
                out.append(SubQuery(text=text.strip(), direction=direction, stance=stance))
            return out

        return self._call_with_repair(prompts.DECOMPOSE, prompt, parse)

    # -- text-to-SQL ---------------------------------------------------------

    def generate_sql(
        self,
        query: str,
        table_name: str,
        columns: list[str],
        values: dict[str, list],
        relevant_series: list[str],
        previous_sql: str | None = None,
        errors: list[str] | None = None,
    ) -> str:
        prompt = prompts.render_text2sql(
            table_name=table_name,
            columns=columns,
            values=values,
            query=query,
            relevant_series=relevant_series,
        )
        if previous_sql is not None and errors:
            prompt += (
                "\n\nThe previously generated SQL query:\n"
                + previous_sql
                + "\nfailed with the following errors:\n"
                + "\n".join(f"- {e}" for e in errors)
                + "\nOutput only the corrected SQL query."
            )
        response = self._complete(prompts.TEXT2SQL, prompt)
        sql = strip_code_fences(response)
        if not sql:
            raise LlmError("text-to-SQL returned an empty response", code=EMPTY_RESPONSE)
        return sql

    # -- fact extraction -----------------------------------------------------

    def extract_facts(
        self, subtable: SubTable, statement: str, query: str, stance: str
    ) -> ExtractionResult:
        if not subtable.rows:
            raise ValueError("extract_facts requires a nonempty sub-table")
        data = {
            "columns": [f.name for f in subtable.fields],
            "rows": subtable.rows,
        }
        prompt = prompts.render_extract(data=data, statement=statement, query=query, stance=stance)
        response = self._complete(prompts.EXTRACT, prompt)

        result = ExtractionResult(pairs=[])
        for value in iter_json_values(response):
            candidates = value if isinstance(value, list) else [value]
            for candidate in candidates:
                if not isinstance(candidate, dict) or "type" not in candidate:
                    continue
                if len(result.pairs) == self.max_facts:
                    break
                try:
                    fact = parse_fact(candidate)
                except FactParseError as exc:
                    result.dropped.append(f"{exc.code}: {exc}")
                    continue
                result.pairs.append((fact, fact.description))
        return result

    # -- fact evaluation -----------------------------------------------------

    def evaluate_facts(
        self, facts: list[tuple[DataFact, str]], statement: str
    ) -> list[FactEvaluation]:
        if not facts:
            raise ValueError("evaluate_facts requires at least one fact")
        payload = [
            {"index": i, "fact": serialize_fact(fact), "description": description}
            for i, (fact, description) in enumerate(facts)
        ]
        prompt = prompts.render_evaluate(facts=payload, statement=statement)

        def parse(response: str) -> dict[int, dict]:
            value = extract_json_value(response)
            if isinstance(value, dict):
                value = [value]
            if not isinstance(value, list):
                raise ValueError("expected a JSON array of evaluations")
            by_index: dict[int, dict] = {}
            for item in value:
                if not isinstance(item, dict) or "index" not in item:
                    raise ValueError("every evaluation needs an index")
                if "support" not in item or "oppose" not in item:
                    raise ValueError("every evaluation needs support and oppose probabilities")
                by_index[int(item["index"])] = item
            return by_index

        by_index = self._call_with_repair(prompts.EVALUATE, prompt, parse)

        evaluations = []
        for i in range(len(facts)):
            item = by_index.get(i)
            if item is None:
                evaluations.append(
                    FactEvaluation(
                        fact_index=i,
                        support_prob=0.5,
                        oppose_prob=0.5,
                        predicted_label=SUPPORT,
                        explanation="missing evaluation, defaulted",
                        flags=("missing_defaulted", "tie_default_support"),
                    )
                )
                continue
            evaluations.append(self._normalize_evaluation(i, item))
        return evaluations

    @staticmethod
    def _normalize_evaluation(index: int, item: dict) -> FactEvaluation:
        flags: list[str] = []
        try:
            support = max(0.0, float(item["support"]))
            oppose = max(0.0, float(item["oppose"]))
        except (TypeError, ValueError):
            support = oppose = 0.5
            flags.append("unparseable_probabilities")
        total = support + oppose
        if total <= 0.0:
            support = oppose = 0.5
            flags.append("zero_probabilities")
        else:
            support, oppose = support / total, oppose / total
        if support == oppose:
            label = SUPPORT
            flags.append("tie_default_support")
        else:
            label = SUPPORT if support > oppose else OPPOSE
        return FactEvaluation(
            fact_index=index,
            support_prob=support,
            oppose_prob=oppose,
            predicted_label=label,
            explanation=str(item.get("explanation", "")),
            flags=tuple(flags),
        )

    # -- planning ------------------------------------------------------------

    def plan(
        self,
        candidates: list[dict],
        statement: str,
        stance: str,
        fallback_index: int,
    ) -> PlanRecommendation:
        if not candidates:
            raise ValueError("plan requires at least one candidate")
        prompt = prompts.render_plan(queries_facts=candidates, statement=statement, stance=stance)

        def parse(response: str) -> PlanRecommendation:
            value = extract_json_value(response)
            if not isinstance(value, dict):
                raise ValueError("expected an object with Reasoning and Recommend Index")
            lowered = {str(k).strip().lower(): v for k, v in value.items()}
            if "recommend index" not in lowered:
                raise ValueError("missing 'Recommend Index'")
            index = int(lowered["recommend index"])
            reasoning = str(lowered.get("reasoning", ""))
            if not 0 <= index < len(candidates):
                return PlanRecommendation(
                    reasoning=reasoning + " (out of range, fell back to best-scoring child)",
                    recommend_index=fallback_index,
                    fallback=True,
                )
            return PlanRecommendation(reasoning=reasoning, recommend_index=index)

        try:
            return self._call_with_repair(prompts.PLAN, prompt, parse)
        except LlmError as exc:
            if exc.code == REPLAY_MISS:
                raise  # replay gaps must fail loudly, not degrade
            return PlanRecommendation(
                reasoning="planner unavailable, fell back to best-scoring child",
                recommend_index=fallback_index,
                fallback=True,
            )
