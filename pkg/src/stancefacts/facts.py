"""Data-fact model: the five-part fact structure, parsing and validation.

A fact is ``{type, subspace, breakdown, measure, focus}`` plus a short
description.  ``parse_fact`` only enforces shape (documented keys, known type
and aggregate names); ``validate_fact`` enforces the per-type rules against a
sub-table schema, and, when rows are supplied, the data-dependent rules
(filter values in domain, focus inside the filtered subspace, single-group
pinning for value facts, unambiguous bare-cell aggregates).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dataclass_field
from enum import Enum

from .datastore import Cell, FieldDescriptor, CATEGORICAL, NUMERICAL, TEMPORAL
from .errors import FactParseError
from .sqlsubset import cells_equal

MALFORMED = "MALFORMED"
UNKNOWN_TYPE = "UNKNOWN_TYPE"
UNKNOWN_AGGREGATE = "UNKNOWN_AGGREGATE"


class FactType(str, Enum):
    VALUE = "value"
    DIFFERENCE = "difference"
    PROPORTION = "proportion"
    TREND = "trend"
    CATEGORIZATION = "categorization"
    DISTRIBUTION = "distribution"
    RANK = "rank"
    ASSOCIATION = "association"
    EXTREME = "extreme"
    OUTLIER = "outlier"


class Aggregate(str, Enum):
    NONE = "none"
    COUNT = "count"
    SUM = "sum"
    AVG = "avg"
    MIN = "min"
    MAX = "max"


_AGGREGATE_ALIASES = {
    "average": "avg",
    "mean": "avg",
    "minimum": "min",
    "maximum": "max",
}

_FACT_KEYS = {"type", "measure", "breakdown", "subspace", "focus", "description"}


@dataclass(frozen=True)
class Measure:
    field: str
    aggregate: Aggregate

    def to_dict(self) -> dict:
        return {"aggregate": self.aggregate.value, "field": self.field}


@dataclass(frozen=True)
class FilterClause:
    field: str
    value: str | float

    def to_dict(self) -> dict:
        return {"field": self.field, "value": self.value}


@dataclass(frozen=True)
class DataFact:
    type: FactType
    subspace: tuple[FilterClause, ...]
    breakdown: tuple[str, ...]
    measure: tuple[Measure, ...]
    focus: tuple[FilterClause, ...]
    description: str = ""

    @property
    def breakdown_field(self) -> str:
        return self.breakdown[0] if self.breakdown else ""


def serialize_fact(fact: DataFact) -> dict:
    """Canonical serialization: the extraction-prompt output object shape."""
    return {
        "type": fact.type.value,
        "measure": [m.to_dict() for m in fact.measure],
        "breakdown": list(fact.breakdown),
        "subspace": [c.to_dict() for c in fact.subspace],
        "focus": [c.to_dict() for c in fact.focus],
        "description": fact.description,
    }


def _parse_clause(raw, role: str) -> FilterClause:
    if not isinstance(raw, dict) or set(raw) != {"field", "value"}:
        raise FactParseError(f"{role} entries need exactly 'field' and 'value'", code=MALFORMED)
    field_name, value = raw["field"], raw["value"]
    if not isinstance(field_name, str) or not isinstance(value, (str, int, float)) or isinstance(value, bool):
        raise FactParseError(f"bad {role} clause {raw!r}", code=MALFORMED)
    return FilterClause(field=field_name, value=float(value) if isinstance(value, (int, float)) else value)


def _parse_measure(raw) -> Measure:
    if not isinstance(raw, dict) or set(raw) != {"aggregate", "field"}:
        raise FactParseError("measure entries need exactly 'aggregate' and 'field'", code=MALFORMED)
    aggregate_name = str(raw["aggregate"]).strip().lower()
    aggregate_name = _AGGREGATE_ALIASES.get(aggregate_name, aggregate_name)
    try:
        aggregate = Aggregate(aggregate_name)
    except ValueError:
        raise FactParseError(f"unknown aggregate {raw['aggregate']!r}", code=UNKNOWN_AGGREGATE)
    if not isinstance(raw["field"], str):
        raise FactParseError("measure field must be a string", code=MALFORMED)
    return Measure(field=raw["field"], aggregate=aggregate)


def parse_fact(raw) -> DataFact:
    """Parse an LLM-proposed fact object (mapping or JSON text) into a DataFact.

    Raises :class:`FactParseError` with code MALFORMED, UNKNOWN_TYPE or
    UNKNOWN_AGGREGATE; per-type cardinality rules are left to validate_fact.
    """
    if isinstance(raw, str):
        try:
            raw = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise FactParseError(f"not a JSON object: {exc}", code=MALFORMED)
    if not isinstance(raw, dict):
        raise FactParseError("fact must be an object", code=MALFORMED)
    unknown = set(raw) - _FACT_KEYS
    if unknown:
        raise FactParseError(f"unknown keys {sorted(unknown)}", code=MALFORMED)
    missing = _FACT_KEYS - {"description"} - set(raw)
    if missing:
        raise FactParseError(f"missing keys {sorted(missing)}", code=MALFORMED)

    type_name = str(raw["type"]).strip().lower()
    try:
        fact_type = FactType(type_name)
    except ValueError:
        raise FactParseError(f"unknown fact type {raw['type']!r}", code=UNKNOWN_TYPE)

    for key in ("measure", "breakdown", "subspace", "focus"):
        if not isinstance(raw[key], list):
            raise FactParseError(f"{key} must be a list", code=MALFORMED)
    breakdown = tuple(raw["breakdown"])
    if not all(isinstance(b, str) for b in breakdown):
        raise FactParseError("breakdown entries must be field names", code=MALFORMED)
    description = raw.get("description", "")
    if not isinstance(description, str):
        raise FactParseError("description must be text", code=MALFORMED)

    return DataFact(
        type=fact_type,
        subspace=tuple(_parse_clause(c, "subspace") for c in raw["subspace"]),
        breakdown=breakdown,
        measure=tuple(_parse_measure(m) for m in raw["measure"]),
        focus=tuple(_parse_clause(c, "focus") for c in raw["focus"]),
        description=description,
    )


# ---------------------------------------------------------------------------
# Validation


@dataclass
class Violation:
    rule: str
    message: str

    def to_dict(self) -> dict:
        return {"rule": self.rule, "message": self.message}


@dataclass
class FactValidationReport:
    ok: bool
    violations: list[Violation] = dataclass_field(default_factory=list)

    def to_dict(self) -> dict:
        return {"ok": self.ok, "violations": [v.to_dict() for v in self.violations]}


# rule identifiers
BREAKDOWN_COUNT = "BREAKDOWN_COUNT"
BREAKDOWN_UNKNOWN_FIELD = "BREAKDOWN_UNKNOWN_FIELD"
BREAKDOWN_KIND = "BREAKDOWN_KIND"
MEASURE_COUNT = "MEASURE_COUNT"
ASSOCIATION_NEEDS_TWO_MEASURES = "ASSOCIATION_NEEDS_TWO_MEASURES"
MEASURE_UNKNOWN_FIELD = "MEASURE_UNKNOWN_FIELD"
MEASURE_NOT_NUMERICAL = "MEASURE_NOT_NUMERICAL"
TREND_NEEDS_TEMPORAL = "TREND_NEEDS_TEMPORAL"
TREND_NEEDS_ONE_SUBSPACE = "TREND_NEEDS_ONE_SUBSPACE"
SUBSPACE_COUNT = "SUBSPACE_COUNT"
FILTER_UNKNOWN_FIELD = "FILTER_UNKNOWN_FIELD"
FILTER_VALUE_NOT_IN_DOMAIN = "FILTER_VALUE_NOT_IN_DOMAIN"
FOCUS_COUNT = "FOCUS_COUNT"
DIFFERENCE_NEEDS_TWO_FOCUS = "DIFFERENCE_NEEDS_TWO_FOCUS"
PROPORTION_NEEDS_ONE_FOCUS = "PROPORTION_NEEDS_ONE_FOCUS"
FOCUS_NOT_ON_BREAKDOWN = "FOCUS_NOT_ON_BREAKDOWN"
FOCUS_OUTSIDE_SUBSPACE = "FOCUS_OUTSIDE_SUBSPACE"
VALUE_NEEDS_SINGLE_GROUP = "VALUE_NEEDS_SINGLE_GROUP"
SUBSPACE_EMPTY_RESULT = "SUBSPACE_EMPTY_RESULT"
NONE_AGGREGATE_AMBIGUOUS = "NONE_AGGREGATE_AMBIGUOUS"

# focus cardinality: fixed where the extraction rules are explicit, permissive caps otherwise
_FOCUS_RANGE = {
    FactType.VALUE: (0, 1),
    FactType.TREND: (0, 1),
    FactType.CATEGORIZATION: (0, 1),
    FactType.DISTRIBUTION: (0, 1),
    FactType.ASSOCIATION: (0, 1),
    FactType.RANK: (0, 2),
    FactType.EXTREME: (0, 2),
    FactType.OUTLIER: (0, 2),
    FactType.DIFFERENCE: (2, 2),
    FactType.PROPORTION: (1, 1),
}

MAX_SUBSPACE_CLAUSES = 3


def _filter_rows(rows: list[list[Cell]], fields: list[FieldDescriptor], clauses) -> list[list[Cell]]:
    index = {f.name.lower(): i for i, f in enumerate(fields)}
    kept = rows
    for clause in clauses:
        i = index[clause.field.lower()]
        kept = [row for row in kept if cells_equal(row[i], clause.value)]
    return kept


def validate_fact(
    fact: DataFact,
    schema: list[FieldDescriptor],
    rows: list[list[Cell]] | None = None,
) -> FactValidationReport:
    """Check every per-type rule; pure and deterministic for a given input.

    ``rows`` enables the data-dependent checks (value domains, focus within
    subspace, single-group pinning, bare-cell ambiguity); without rows only
    schema-level rules run.
    """
    violations: list[Violation] = []
    by_name = {f.name.lower(): f for f in schema}

    def add(rule: str, message: str) -> None:
        violations.append(Violation(rule, message))

    # breakdown
    if len(fact.breakdown) != 1:
        add(BREAKDOWN_COUNT, f"exactly one breakdown required, got {len(fact.breakdown)}")
        breakdown = None
    else:
        breakdown = by_name.get(fact.breakdown[0].lower())
        if breakdown is None:
            add(BREAKDOWN_UNKNOWN_FIELD, f"breakdown field {fact.breakdown[0]!r} not in sub-table")
        elif fact.type is FactType.TREND and breakdown.kind != TEMPORAL:
            add(TREND_NEEDS_TEMPORAL, "trend facts need a temporal breakdown field")
        elif breakdown.kind not in (TEMPORAL, CATEGORICAL):
            add(BREAKDOWN_KIND, f"breakdown field {breakdown.name!r} must be temporal or categorical")

    # measures
    expected_measures = 2 if fact.type is FactType.ASSOCIATION else 1
    if len(fact.measure) != expected_measures:
        if fact.type is FactType.ASSOCIATION:
            add(ASSOCIATION_NEEDS_TWO_MEASURES, f"association needs two measures, got {len(fact.measure)}")
        else:
            add(MEASURE_COUNT, f"{fact.type.value} facts need one measure, got {len(fact.measure)}")
    for measure in fact.measure:
        descriptor = by_name.get(measure.field.lower())
        if descriptor is None:
            add(MEASURE_UNKNOWN_FIELD, f"measure field {measure.field!r} not in sub-table")
        elif measure.aggregate is not Aggregate.COUNT and descriptor.kind != NUMERICAL:
            add(MEASURE_NOT_NUMERICAL, f"measure field {measure.field!r} must be numerical")

    # subspace
    if fact.type is FactType.TREND and len(fact.subspace) != 1:
        add(TREND_NEEDS_ONE_SUBSPACE, f"trend facts need exactly one subspace clause, got {len(fact.subspace)}")
    elif fact.type is FactType.VALUE and not fact.subspace:
        add(SUBSPACE_COUNT, "value facts need subspace filters pinning a specific value")
    elif len(fact.subspace) > MAX_SUBSPACE_CLAUSES:
        add(SUBSPACE_COUNT, f"at most {MAX_SUBSPACE_CLAUSES} subspace clauses, got {len(fact.subspace)}")

    # focus cardinality
    low, high = _FOCUS_RANGE[fact.type]
    if not (low <= len(fact.focus) <= high):
        if fact.type is FactType.DIFFERENCE:
            add(DIFFERENCE_NEEDS_TWO_FOCUS, f"difference needs two focus clauses, got {len(fact.focus)}")
        elif fact.type is FactType.PROPORTION:
            add(PROPORTION_NEEDS_ONE_FOCUS, f"proportion needs one focus clause, got {len(fact.focus)}")
        else:
            add(FOCUS_COUNT, f"{fact.type.value} allows {low}..{high} focus clauses, got {len(fact.focus)}")

    # filter clause fields; focus must address breakdown groups
    for role, clauses in (("subspace", fact.subspace), ("focus", fact.focus)):
        for clause in clauses:
            if clause.field.lower() not in by_name:
                add(FILTER_UNKNOWN_FIELD, f"{role} field {clause.field!r} not in sub-table")
    if breakdown is not None:
        for clause in fact.focus:
            if clause.field.lower() in by_name and clause.field.lower() != breakdown.name.lower():
                add(FOCUS_NOT_ON_BREAKDOWN, f"focus field {clause.field!r} must be the breakdown field")

    if rows is not None and not violations:
        index = {f.name.lower(): i for i, f in enumerate(schema)}
        for role, clauses in (("subspace", fact.subspace), ("focus", fact.focus)):
            for clause in clauses:
                column = [row[index[clause.field.lower()]] for row in rows]
                if not any(cells_equal(cell, clause.value) for cell in column):
                    add(
                        FILTER_VALUE_NOT_IN_DOMAIN,
                        f"{role} value {clause.value!r} not found in field {clause.field!r}",
                    )
        if not violations:
            filtered = _filter_rows(rows, schema, fact.subspace)
            if not filtered:
                add(SUBSPACE_EMPTY_RESULT, "subspace filters leave no rows")
            else:
                for clause in fact.focus:
                    if not any(
                        cells_equal(row[index[clause.field.lower()]], clause.value) for row in filtered
                    ):
                        add(
                            FOCUS_OUTSIDE_SUBSPACE,
                            f"focus value {clause.value!r} vanishes after subspace filtering",
                        )
                breakdown_cells = {
                    _domain_key(row[index[breakdown.name.lower()]]) for row in filtered
                } if breakdown is not None else set()
                if fact.type is FactType.VALUE and len(breakdown_cells) != 1:
                    add(
                        VALUE_NEEDS_SINGLE_GROUP,
                        f"value facts need the subspace pinned to one group, got {len(breakdown_cells)}",
                    )
                if breakdown is not None and any(m.aggregate is Aggregate.NONE for m in fact.measure):
                    groups: dict[str, int] = {}
                    for row in filtered:
                        key = _domain_key(row[index[breakdown.name.lower()]])
                        groups[key] = groups.get(key, 0) + 1
                    if any(count > 1 for count in groups.values()):
                        add(
                            NONE_AGGREGATE_AMBIGUOUS,
                            "bare-cell aggregate 'none' needs a single row per group",
                        )

    return FactValidationReport(ok=not violations, violations=violations)


def _domain_key(cell: Cell) -> str:
    if isinstance(cell, float) and cell.is_integer():
        return str(int(cell))
    return str(cell)
