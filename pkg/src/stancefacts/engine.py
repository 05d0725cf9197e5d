"""Deterministic fact computation, chart specs and caption consistency.

``compute_fact`` filters a sub-table by the fact's subspace, groups rows by
the breakdown field, aggregates each group per measure (nulls excluded) and
produces a type-specific derived record.  ``chart_spec`` maps fact types onto
chart marks.  ``check_description`` cross-checks an LLM-written caption
against the computed numbers, years and trend direction, flagging mismatched
captions instead of letting them reach the story.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field as dataclass_field
from datetime import date

import numpy as np

from .datastore import Cell, SubTable, TEMPORAL
from .errors import FactComputeError
from .facts import Aggregate, DataFact, FactType, serialize_fact, parse_fact
from .sqlsubset import cell_text, cells_equal

EMPTY_SUBSPACE = "EMPTY_SUBSPACE"
DEGENERATE = "DEGENERATE"

FLAT_SLOPE_RATIO = 0.01
OUTLIER_Z = 2.5
OUTLIER_MIN_GROUPS = 4
NUMBER_MATCH_RTOL = 0.005


@dataclass(frozen=True)
class GroupValue:
    key: str
    value: float
    value2: float | None = None

    def to_dict(self) -> dict:
        payload = {"key": self.key, "value": self.value}
        if self.value2 is not None:
            payload["value2"] = self.value2
        return payload


@dataclass
class FactResult:
    fact: DataFact
    groups: list[GroupValue]
    derived: dict
    focus_keys: list[str]

    def to_dict(self) -> dict:
        return {
            "fact": serialize_fact(self.fact),
            "groups": [g.to_dict() for g in self.groups],
            "derived": self.derived,
            "focus_keys": self.focus_keys,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "FactResult":
        return cls(
            fact=parse_fact(payload["fact"]),
            groups=[
                GroupValue(g["key"], g["value"], g.get("value2")) for g in payload["groups"]
            ],
            derived=payload["derived"],
            focus_keys=list(payload["focus_keys"]),
        )


def time_ordinal(key: str) -> float:
    """Numeric time axis: years map to integers, ISO dates to days since epoch."""
    if re.fullmatch(r"\d{4}", key):
        return float(key)
    try:
        return float(date.fromisoformat(key).toordinal())
    except ValueError:
        raise FactComputeError(f"cannot order temporal key {key!r}", code=DEGENERATE)


def _aggregate(cells: list[Cell], aggregate: Aggregate) -> float | None:
    # summing in sorted order keeps aggregates invariant under row permutation
    present = sorted(float(c) for c in cells if isinstance(c, (int, float)))
    if aggregate is Aggregate.COUNT:
        return float(sum(1 for c in cells if c is not None))
    if aggregate is Aggregate.SUM:
        return float(sum(present))
    if aggregate is Aggregate.NONE:
        if len(cells) != 1:
            raise FactComputeError(
                "bare-cell aggregate over a multi-row group", code=DEGENERATE
            )
        return present[0] if present else None
    if not present:
        return None
    if aggregate is Aggregate.AVG:
        return float(sum(present) / len(present))
    if aggregate is Aggregate.MIN:
        return float(min(present))
    return float(max(present))


def _least_squares_slope(xs: np.ndarray, ys: np.ndarray) -> float:
    dx = xs - xs.mean()
    denominator = float((dx * dx).sum())
    if denominator == 0.0:
        raise FactComputeError("degenerate time axis for trend", code=DEGENERATE)
    return float((dx * (ys - ys.mean())).sum() / denominator)


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    da, db = a - a.mean(), b - b.mean()
    denom = math.sqrt(float((da * da).sum()) * float((db * db).sum()))
    if denom == 0.0:
        raise FactComputeError("zero variance in association measure", code=DEGENERATE)
    r = float((da * db).sum() / denom)
    return max(-1.0, min(1.0, r))


def compute_fact(fact: DataFact, table: SubTable) -> FactResult:
    """Compute the derived result of a validated fact over a sub-table."""
    index = {f.name.lower(): i for i, f in enumerate(table.fields)}
    breakdown_name = fact.breakdown_field
    breakdown_index = index[breakdown_name.lower()]
    breakdown_kind = next(
        f.kind for f in table.fields if f.name.lower() == breakdown_name.lower()
    )

    rows = table.rows
    for clause in fact.subspace:
        i = index[clause.field.lower()]
        rows = [row for row in rows if cells_equal(row[i], clause.value)]
    if not rows:
        raise FactComputeError("no rows survive the subspace filters", code=EMPTY_SUBSPACE)

    grouped: dict[str, list[list[Cell]]] = {}
    order: list[str] = []
    for row in rows:
        cell = row[breakdown_index]
        if cell is None:
            continue
        key = cell_text(cell)
        if key not in grouped:
            grouped[key] = []
            order.append(key)
        grouped[key].append(row)
    if not grouped:
        raise FactComputeError("all breakdown cells are null", code=DEGENERATE)

    measure_idx = [index[m.field.lower()] for m in fact.measure]
    groups: list[GroupValue] = []
    for key in order:
        values = [
            _aggregate([row[mi] for row in grouped[key]], m.aggregate)
            for mi, m in zip(measure_idx, fact.measure)
        ]
        if any(v is None or not math.isfinite(v) for v in values):
            continue
        groups.append(
            GroupValue(key, values[0], values[1] if len(values) > 1 else None)
        )
    if not groups:
        raise FactComputeError("no group has a computable aggregate", code=DEGENERATE)

    if breakdown_kind == TEMPORAL:
        groups.sort(key=lambda g: time_ordinal(g.key))
    elif fact.type in (FactType.RANK, FactType.EXTREME):
        groups.sort(key=lambda g: (-g.value, g.key))
    # other categorical breakdowns keep first-appearance order

    focus_keys = []
    for clause in fact.focus:
        if clause.field.lower() != breakdown_name.lower():
            continue
        for group in groups:
            if cells_equal(group.key, clause.value):
                focus_keys.append(group.key)
                break

    derived = _derive(fact, groups, focus_keys, breakdown_kind)
    return FactResult(fact=fact, groups=groups, derived=derived, focus_keys=focus_keys)


def _focus_group(groups: list[GroupValue], fact: DataFact, position: int) -> GroupValue:
    clause = fact.focus[position]
    for group in groups:
        if cells_equal(group.key, clause.value):
            return group
    raise FactComputeError(
        f"focus value {clause.value!r} matches no computed group", code=DEGENERATE
    )


def _derive(fact, groups, focus_keys, breakdown_kind) -> dict:
    values = np.array([g.value for g in groups], dtype=float)

    if fact.type is FactType.VALUE:
        if len(groups) != 1:
            raise FactComputeError(
                f"value fact resolves to {len(groups)} groups instead of one", code=DEGENERATE
            )
        return {"scalar": groups[0].value}

    if fact.type is FactType.DIFFERENCE:
        a = _focus_group(groups, fact, 0).value
        b = _focus_group(groups, fact, 1).value
        if b == 0.0:
            raise FactComputeError("relative difference against zero", code=DEGENERATE)
        return {"a": a, "b": b, "abs_diff": a - b, "rel_diff": (a - b) / b}

    if fact.type is FactType.PROPORTION:
        total = float(np.sort(values).sum())
        if total == 0.0:
            raise FactComputeError("proportion over a zero total", code=DEGENERATE)
        share = _focus_group(groups, fact, 0).value / total
        return {"share": share}

    if fact.type is FactType.TREND:
        if len(groups) < 3:
            raise FactComputeError(
                f"trend needs at least 3 time points, got {len(groups)}", code=DEGENERATE
            )
        xs = np.array([time_ordinal(g.key) for g in groups], dtype=float)
        slope = _least_squares_slope(xs, values)
        span = float(xs.max() - xs.min())
        scale = max(abs(float(values.mean())), 1e-12)
        if abs(slope) * span / scale < FLAT_SLOPE_RATIO:
            direction = "flat"
        else:
            direction = "increasing" if slope > 0 else "decreasing"
        return {
            "slope": slope,
            "direction": direction,
            "start": groups[0].value,
            "end": groups[-1].value,
        }

    if fact.type is FactType.CATEGORIZATION:
        return {"categories": [g.key for g in groups], "counts": [g.value for g in groups]}

    if fact.type is FactType.DISTRIBUTION:
        ordered = np.sort(values)
        return {
            "mean": float(ordered.mean()),
            "std": float(ordered.std()),
            "min": float(ordered.min()),
            "max": float(ordered.max()),
        }

    if fact.type is FactType.RANK:
        ordering = [g.key for g in sorted(groups, key=lambda g: (-g.value, g.key))]
        position = ordering.index(focus_keys[0]) + 1 if focus_keys else None
        return {"ordering": ordering, "focus_position": position}

    if fact.type is FactType.ASSOCIATION:
        if len(groups) < 2:
            raise FactComputeError("association needs at least 2 paired points", code=DEGENERATE)
        paired = sorted(groups, key=lambda g: g.key)
        firsts = np.array([g.value for g in paired], dtype=float)
        seconds = np.array([g.value2 for g in paired], dtype=float)
        return {"pearson_r": _pearson(firsts, seconds)}

    if fact.type is FactType.EXTREME:
        kind = "min" if fact.measure[0].aggregate is Aggregate.MIN else "max"
        if kind == "min":
            pick = sorted(groups, key=lambda g: (g.value, g.key))[0]
        else:
            pick = sorted(groups, key=lambda g: (-g.value, g.key))[0]
        return {"kind": kind, "key": pick.key, "value": pick.value}

    # outlier
    if len(groups) < OUTLIER_MIN_GROUPS:
        raise FactComputeError(
            f"outlier needs at least {OUTLIER_MIN_GROUPS} groups, got {len(groups)}",
            code=DEGENERATE,
        )
    ordered = np.sort(values)
    std = float(ordered.std())
    if std == 0.0:
        return {"outlier_keys": []}
    mean = float(ordered.mean())
    return {
        "outlier_keys": [g.key for g in groups if abs((g.value - mean) / std) > OUTLIER_Z]
    }


# ---------------------------------------------------------------------------
# Chart specs


MARK_BY_TYPE = {
    FactType.VALUE: "big_number",
    FactType.TREND: "line",
    FactType.DIFFERENCE: "grouped_bar",
    FactType.PROPORTION: "pie",
    FactType.RANK: "bar",
    FactType.EXTREME: "bar",
    FactType.CATEGORIZATION: "bar",
    FactType.DISTRIBUTION: "bar",
    FactType.OUTLIER: "line",
    FactType.ASSOCIATION: "scatter",
}


@dataclass
class AxisSpec:
    field: str
    title: str

    def to_dict(self) -> dict:
        return {"field": self.field, "title": self.title}


@dataclass
class ChartSpec:
    mark: str
    x: AxisSpec
    y: AxisSpec
    highlight: list[str]
    caption: str
    source: str

    def to_dict(self) -> dict:
        return {
            "mark": self.mark,
            "x": self.x.to_dict(),
            "y": self.y.to_dict(),
            "highlight": self.highlight,
            "caption": self.caption,
            "source": self.source,
        }


def _measure_title(measure) -> str:
    if measure.aggregate is Aggregate.NONE:
        return measure.field
    return f"{measure.aggregate.value}({measure.field})"


def chart_spec(result: FactResult, provenance: str) -> ChartSpec:
    fact = result.fact
    mark = MARK_BY_TYPE[fact.type]
    if fact.type is FactType.ASSOCIATION:
        x = AxisSpec(fact.measure[0].field, _measure_title(fact.measure[0]))
        y = AxisSpec(fact.measure[1].field, _measure_title(fact.measure[1]))
    else:
        x = AxisSpec(fact.breakdown_field, fact.breakdown_field)
        y = AxisSpec(fact.measure[0].field, _measure_title(fact.measure[0]))
    highlight = list(result.focus_keys)
    if fact.type is FactType.OUTLIER:
        highlight = list(dict.fromkeys(result.derived["outlier_keys"] + highlight))
    if fact.type is FactType.EXTREME:
        highlight = list(dict.fromkeys([result.derived["key"]] + highlight))
    caption = fact.description or canonical_description(result)
    return ChartSpec(mark=mark, x=x, y=y, highlight=highlight, caption=caption, source=provenance)


# ---------------------------------------------------------------------------
# Caption consistency


@dataclass
class Mismatch:
    kind: str  # NUMBER_NOT_FOUND | YEAR_OUT_OF_RANGE | DIRECTION_CONFLICT
    detail: str

    def to_dict(self) -> dict:
        return {"kind": self.kind, "detail": self.detail}


@dataclass
class ConsistencyReport:
    ok: bool
    mismatches: list[Mismatch] = dataclass_field(default_factory=list)

    def to_dict(self) -> dict:
        return {"ok": self.ok, "mismatches": [m.to_dict() for m in self.mismatches]}


_NUMBER_RE = re.compile(
    r"(?<![\w.])-?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?\s?%?"
)
_MAGNITUDE = {"thousand": 1e3, "million": 1e6, "billion": 1e9, "trillion": 1e12}
_INCREASE_WORDS = (
    "increas", "rising", "rise", "rose", "risen", "grow", "grew", "grown",
    "growth", "upward", "climb",
)
_DECREASE_WORDS = (
    "decreas", "declin", "fall", "fell", "fallen", "drop", "shrink", "shrank",
    "downward", "reduc",
)

_RATIO_KEYS = ("rel_diff", "share")


def _numeric_leaves(value) -> list[float]:
    if isinstance(value, bool):
        return []
    if isinstance(value, (int, float)):
        return [float(value)]
    if isinstance(value, (list, tuple)):
        out = []
        for item in value:
            out.extend(_numeric_leaves(item))
        return out
    return []


def _candidate_values(result: FactResult) -> list[float]:
    pool: list[float] = []
    for group in result.groups:
        pool.append(group.value)
        if group.value2 is not None:
            pool.append(group.value2)
    for key, value in result.derived.items():
        leaves = _numeric_leaves(value)
        pool.extend(leaves)
        if key in _RATIO_KEYS:
            pool.extend(leaf * 100.0 for leaf in leaves)
    return pool


def _year_pool(result: FactResult) -> set[int]:
    years: set[int] = set()

    def maybe_add(text: str) -> None:
        m = re.match(r"^(\d{4})(?:-\d{2}-\d{2})?$", text)
        if m and 1800 <= int(m.group(1)) <= 2100:
            years.add(int(m.group(1)))

    for group in result.groups:
        maybe_add(group.key)
    for clause in list(result.fact.subspace) + list(result.fact.focus):
        maybe_add(cell_text(clause.value))
    return years


def _relatively_close(a: float, b: float) -> bool:
    denom = max(abs(a), abs(b))
    if denom < 1e-12:
        return True
    return abs(a - b) / denom <= NUMBER_MATCH_RTOL


def extract_quantities(description: str) -> tuple[list[tuple[float, bool]], list[int]]:
    """Pull (number, is_percent) pairs and 4-digit years out of a caption."""
    numbers: list[tuple[float, bool]] = []
    years: list[int] = []
    for match in _NUMBER_RE.finditer(description):
        raw = match.group()
        is_percent = raw.rstrip().endswith("%")
        cleaned = raw.rstrip("% \t").replace(",", "")
        value = float(cleaned)
        tail = description[match.end():]
        magnitude = re.match(r"\s*(thousand|million|billion|trillion)s?\b", tail, re.IGNORECASE)
        if magnitude:
            value *= _MAGNITUDE[magnitude.group(1).lower()]
        if (
            not is_percent
            and magnitude is None
            and "." not in cleaned
            and "-" not in cleaned
            and 1800 <= value <= 2100
        ):
            years.append(int(value))
        else:
            numbers.append((value, is_percent))
    return numbers, years


def check_description(result: FactResult, description: str) -> ConsistencyReport:
    mismatches: list[Mismatch] = []
    numbers, years = extract_quantities(description)
    pool = _candidate_values(result)

    for value, is_percent in numbers:
        candidates = [value, value / 100.0] if is_percent else [value]
        if not any(_relatively_close(c, v) for c in candidates for v in pool):
            mismatches.append(
                Mismatch("NUMBER_NOT_FOUND", f"{value:g} does not match any computed value")
            )

    year_pool = _year_pool(result)
    if year_pool:
        for year in years:
            if year not in year_pool:
                mismatches.append(
                    Mismatch("YEAR_OUT_OF_RANGE", f"{year} is not a year in the computed result")
                )

    direction = result.derived.get("direction")
    if direction in ("increasing", "decreasing"):
        words = re.findall(r"[a-z]+", description.lower())
        opposite = _DECREASE_WORDS if direction == "increasing" else _INCREASE_WORDS
        conflict = next(
            (word for word in words if any(word.startswith(stem) for stem in opposite)), None
        )
        if conflict is not None:
            mismatches.append(
                Mismatch(
                    "DIRECTION_CONFLICT",
                    f"caption says {conflict!r} but the trend is {direction}",
                )
            )

    return ConsistencyReport(ok=not mismatches, mismatches=mismatches)


def _format_number(value: float) -> str:
    if value == int(value) and abs(value) < 1e15:
        return f"{int(value):,}"
    if abs(value) >= 0.01:
        text = f"{value:,.4f}".rstrip("0").rstrip(".")
    else:
        text = f"{value:.12f}".rstrip("0").rstrip(".")
    return text or "0"


def _key_phrase(key: str) -> str:
    m = re.match(r"^(\d{4})-\d{2}-\d{2}$", key)
    return m.group(1) if m else key


def canonical_description(result: FactResult) -> str:
    """Engine-written caption guaranteed to pass check_description."""
    fact = result.fact
    derived = result.derived
    measure_name = fact.measure[0].field

    if fact.type is FactType.VALUE:
        return (
            f"The {measure_name} for {_key_phrase(result.groups[0].key)} "
            f"is {_format_number(derived['scalar'])}."
        )
    if fact.type is FactType.DIFFERENCE:
        k0, k1 = result.focus_keys[0], result.focus_keys[1]
        return (
            f"{_key_phrase(k0)} reached {_format_number(derived['a'])} against "
            f"{_format_number(derived['b'])} for {_key_phrase(k1)}, a gap of "
            f"{_format_number(derived['abs_diff'])}."
        )
    if fact.type is FactType.PROPORTION:
        return (
            f"{_key_phrase(result.focus_keys[0])} accounts for "
            f"{_format_number(derived['share'] * 100.0)}% of the total {measure_name}."
        )
    if fact.type is FactType.TREND:
        verb = {"increasing": "increased", "decreasing": "decreased", "flat": "stayed flat"}[
            derived["direction"]
        ]
        return (
            f"The {measure_name} {verb} from {_format_number(derived['start'])} in "
            f"{_key_phrase(result.groups[0].key)} to {_format_number(derived['end'])} in "
            f"{_key_phrase(result.groups[-1].key)}."
        )
    if fact.type is FactType.CATEGORIZATION:
        parts = ", ".join(
            f"{_key_phrase(key)} ({_format_number(count)})"
            for key, count in zip(derived["categories"][:3], derived["counts"][:3])
        )
        return f"The breakdown covers {parts}."
    if fact.type is FactType.DISTRIBUTION:
        return (
            f"Values of {measure_name} average {_format_number(derived['mean'])}, ranging "
            f"from {_format_number(derived['min'])} to {_format_number(derived['max'])}."
        )
    if fact.type is FactType.RANK:
        leader = result.groups[0]
        runner = f", ahead of {_key_phrase(result.groups[1].key)}" if len(result.groups) > 1 else ""
        return (
            f"{_key_phrase(leader.key)} leads with {_format_number(leader.value)}{runner}."
        )
    if fact.type is FactType.ASSOCIATION:
        return (
            f"The correlation between {fact.measure[0].field} and {fact.measure[1].field} "
            f"is {derived['pearson_r']:.4f}."
        )
    if fact.type is FactType.EXTREME:
        superlative = "highest" if derived["kind"] == "max" else "lowest"
        return (
            f"{_key_phrase(derived['key'])} had the {superlative} {measure_name} at "
            f"{_format_number(derived['value'])}."
        )
    keys = derived["outlier_keys"]
    if not keys:
        return "No group stands out as an outlier."
    return f"{', '.join(_key_phrase(k) for k in keys)} stand out as outliers."
