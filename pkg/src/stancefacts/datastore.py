"""Tabular dataset ingestion, catalog and validated query execution.

Datasets arrive as CSV streams, either already in the long indicator layout
(``country,country_code,series,series_code,year,value``) or as wide exports
whose year columns ("2020 [YR2020]") get pivoted to that layout.  Field kinds
are inferred per column, missing cells ("..", empty) become nulls, and each
stored dataset is immutable afterwards.  Queries run through the SQL subset
validator so executed sub-tables never exceed 10 rows / 50 columns.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import re
import threading
from dataclasses import dataclass
from pathlib import Path

from . import sqlsubset
from .errors import IngestError
from .sqlsubset import QueryValidationReport

TEMPORAL = "temporal"
CATEGORICAL = "categorical"
NUMERICAL = "numerical"

NULL_MARKERS = {"", ".."}
NUMERIC_SHARE_THRESHOLD = 0.9

_YEAR_VALUE_RE = re.compile(r"^\d{4}$")
_ISO_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")
_WIDE_YEAR_HEADER_RE = re.compile(r"^(\d{4})(?:\s*\[YR\d{4}\])?$")

_WIDE_ID_COLUMNS = {
    "country name": "country",
    "country code": "country_code",
    "series name": "series",
    "series code": "series_code",
}

Cell = str | float | None


@dataclass(frozen=True)
class FieldDescriptor:
    name: str
    kind: str  # temporal | categorical | numerical
    dataset_id: str
    sample_values: tuple[Cell, ...] = ()

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "dataset_id": self.dataset_id,
            "sample_values": list(self.sample_values),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "FieldDescriptor":
        return cls(
            name=payload["name"],
            kind=payload["kind"],
            dataset_id=payload["dataset_id"],
            sample_values=tuple(payload.get("sample_values", [])),
        )


@dataclass
class Dataset:
    id: str
    name: str
    fields: list[FieldDescriptor]
    rows: list[list[Cell]]
    provenance: str = ""

    def __post_init__(self) -> None:
        names = [f.name.lower() for f in self.fields]
        if len(set(names)) != len(names):
            raise IngestError("duplicate field names", code="DUPLICATE_FIELD")
        for i, row in enumerate(self.rows):
            if len(row) != len(self.fields):
                raise IngestError(
                    f"row {i} has {len(row)} cells for {len(self.fields)} fields",
                    code="RAGGED_ROWS",
                )
        if not any(f.kind in (NUMERICAL, TEMPORAL) for f in self.fields):
            raise IngestError(
                "dataset needs at least one numerical or temporal field",
                code="NO_MEASURABLE_FIELD",
            )

    @property
    def field_names(self) -> list[str]:
        return [f.name for f in self.fields]

    def field(self, name: str) -> FieldDescriptor | None:
        lowered = name.lower()
        for descriptor in self.fields:
            if descriptor.name.lower() == lowered:
                return descriptor
        return None

    def column(self, name: str) -> list[Cell]:
        index = [f.name.lower() for f in self.fields].index(name.lower())
        return [row[index] for row in self.rows]


@dataclass
class SubTable:
    source_dataset: str
    fields: list[FieldDescriptor]
    rows: list[list[Cell]]
    generating_query: str

    def column(self, name: str) -> list[Cell]:
        index = [f.name.lower() for f in self.fields].index(name.lower())
        return [row[index] for row in self.rows]

    def to_dict(self) -> dict:
        return {
            "source_dataset": self.source_dataset,
            "fields": [f.to_dict() for f in self.fields],
            "rows": self.rows,
            "generating_query": self.generating_query,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "SubTable":
        return cls(
            source_dataset=payload["source_dataset"],
            fields=[FieldDescriptor.from_dict(f) for f in payload["fields"]],
            rows=[list(row) for row in payload["rows"]],
            generating_query=payload["generating_query"],
        )


# ---------------------------------------------------------------------------
# Ingestion


def _parse_number(raw: str) -> float | None:
    try:
        value = float(raw)
    except ValueError:
        return None
    if value != value or value in (float("inf"), float("-inf")):
        return None
    return value


def _looks_like_year(raw: str) -> bool:
    if not _YEAR_VALUE_RE.match(raw):
        return False
    return 1800 <= int(raw) <= 2100


def infer_kind(values: list[str], header_is_year: bool = False) -> str:
    """Infer a column kind from its raw non-null string values."""
    present = [v for v in values if v not in NULL_MARKERS]
    if header_is_year:
        return TEMPORAL
    if not present:
        return CATEGORICAL
    if all(_looks_like_year(v) or _ISO_DATE_RE.match(v) for v in present):
        return TEMPORAL
    numeric = sum(1 for v in present if _parse_number(v) is not None)
    if numeric / len(present) >= NUMERIC_SHARE_THRESHOLD:
        return NUMERICAL
    return CATEGORICAL


def _convert_cell(raw: str, kind: str) -> Cell:
    raw = raw.strip()
    if raw in NULL_MARKERS:
        return None
    if kind == NUMERICAL:
        return _parse_number(raw)  # unparsable stragglers under the 90% rule -> null
    return raw


def _slug(name: str) -> str:
    slug = re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_")
    return slug or "dataset"


def _read_csv(stream) -> list[list[str]]:
    if isinstance(stream, (str, bytes)):
        text = stream.decode("utf-8") if isinstance(stream, bytes) else stream
        handle = io.StringIO(text)
    else:
        handle = stream
    return [row for row in csv.reader(handle)]


def pivot_wide_wdi(header: list[str], rows: list[list[str]]) -> tuple[list[str], list[list[str]]]:
    """Pivot wide year columns ("2020 [YR2020]") into long (.., year, value) rows."""
    year_columns: list[tuple[int, str]] = []
    id_columns: list[tuple[int, str]] = []
    for index, raw in enumerate(header):
        m = _WIDE_YEAR_HEADER_RE.match(raw.strip())
        if m:
            year_columns.append((index, m.group(1)))
        else:
            canonical = _WIDE_ID_COLUMNS.get(raw.strip().lower(), _slug(raw))
            id_columns.append((index, canonical))
    long_header = [name for _, name in id_columns] + ["year", "value"]
    long_rows = []
    for row in rows:
        id_values = [row[i].strip() for i, _ in id_columns]
        for index, year in year_columns:
            long_rows.append(id_values + [year, row[index].strip()])
    return long_header, long_rows


def build_dataset(stream, name: str, provenance: str = "") -> Dataset:
    """Parse a CSV stream into an immutable dataset with inferred field kinds."""
    raw_rows = [row for row in _read_csv(stream) if any(cell.strip() for cell in row)]
    if not raw_rows:
        raise IngestError("source has no header row", code="EMPTY_SOURCE")
    header = [cell.strip() for cell in raw_rows[0]]
    body = raw_rows[1:]
    if not body:
        raise IngestError("source has no data rows", code="EMPTY_SOURCE")
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise IngestError(
                f"row {i + 1} has {len(row)} cells for {len(header)} columns",
                code="RAGGED_ROWS",
            )
    lowered = [h.lower() for h in header]
    if len(set(lowered)) != len(lowered):
        raise IngestError("duplicate column names in header", code="DUPLICATE_FIELD")

    if any(_WIDE_YEAR_HEADER_RE.match(h) for h in header):
        header, body = pivot_wide_wdi(header, body)

    digest = hashlib.sha256(
        "\n".join([",".join(header)] + [",".join(row) for row in body]).encode("utf-8")
    ).hexdigest()
    dataset_id = f"{_slug(name)}-{digest[:8]}"

    columns = list(zip(*body)) if body else [[] for _ in header]
    kinds = [infer_kind([v.strip() for v in col]) for col in columns]
    rows = [
        [_convert_cell(raw, kind) for raw, kind in zip(row, kinds)]
        for row in body
    ]
    fields = []
    for index, (column_name, kind) in enumerate(zip(header, kinds)):
        samples: list[Cell] = []
        for row in rows:
            cell = row[index]
            if cell is not None and cell not in samples:
                samples.append(cell)
            if len(samples) == 5:
                break
        fields.append(
            FieldDescriptor(
                name=column_name, kind=kind, dataset_id=dataset_id, sample_values=tuple(samples)
            )
        )
    return Dataset(id=dataset_id, name=name, fields=fields, rows=rows, provenance=provenance)


# ---------------------------------------------------------------------------
# Store


class DatasetStore:
    """In-memory catalog of immutable datasets with optional disk persistence.

    Datasets never change after ingest, so reads need no coordination;
    ingestion is serialized per store.
    """

    def __init__(self) -> None:
        self._datasets: dict[str, Dataset] = {}
        self._ingest_lock = threading.Lock()

    def ingest_dataset(self, stream, name: str, provenance: str = "") -> Dataset:
        dataset = build_dataset(stream, name, provenance)
        with self._ingest_lock:
            existing = self._datasets.get(dataset.id)
            if existing is not None:
                return existing  # identical content hash: idempotent re-ingest
            self._datasets[dataset.id] = dataset
        return dataset

    def add(self, dataset: Dataset) -> Dataset:
        with self._ingest_lock:
            self._datasets.setdefault(dataset.id, dataset)
            return self._datasets[dataset.id]

    def get(self, dataset_id: str) -> Dataset | None:
        return self._datasets.get(dataset_id)

    def datasets(self) -> list[Dataset]:
        return [self._datasets[key] for key in sorted(self._datasets)]

    def list_fields(self) -> list[FieldDescriptor]:
        fields: list[FieldDescriptor] = []
        for dataset in self.datasets():
            fields.extend(sorted(dataset.fields, key=lambda f: f.name))
        return fields

    # -- persistence: one directory per dataset (meta.json + rows.csv) -------

    def save(self, root: str | Path) -> None:
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        for dataset in self.datasets():
            folder = root / dataset.id
            folder.mkdir(parents=True, exist_ok=True)
            meta = {
                "id": dataset.id,
                "name": dataset.name,
                "provenance": dataset.provenance,
                "fields": [
                    {"name": f.name, "kind": f.kind, "sample_values": list(f.sample_values)}
                    for f in dataset.fields
                ],
            }
            (folder / "meta.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
            with (folder / "rows.csv").open("w", newline="", encoding="utf-8") as handle:
                writer = csv.writer(handle)
                writer.writerow(dataset.field_names)
                for row in dataset.rows:
                    writer.writerow(["" if cell is None else cell for cell in row])

    @classmethod
    def load(cls, root: str | Path) -> "DatasetStore":
        store = cls()
        root = Path(root)
        if not root.exists():
            return store
        for folder in sorted(root.iterdir()):
            meta_path = folder / "meta.json"
            if not meta_path.is_file():
                continue
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
            with (folder / "rows.csv").open(newline="", encoding="utf-8") as handle:
                reader = csv.reader(handle)
                header = next(reader)
                kinds = {f["name"]: f["kind"] for f in meta["fields"]}
                rows = [
                    [_convert_cell(raw, kinds[column]) for raw, column in zip(row, header)]
                    for row in reader
                ]
            fields = [
                FieldDescriptor(
                    name=f["name"],
                    kind=f["kind"],
                    dataset_id=meta["id"],
                    sample_values=tuple(f.get("sample_values", [])),
                )
                for f in meta["fields"]
            ]
            store.add(
                Dataset(
                    id=meta["id"],
                    name=meta["name"],
                    fields=fields,
                    rows=rows,
                    provenance=meta.get("provenance", ""),
                )
            )
        return store


# ---------------------------------------------------------------------------
# Query validation and execution


def validate_query(sql: str, dataset: Dataset) -> QueryValidationReport:
    return sqlsubset.validate(sql, dataset.field_names, dataset.name)


def execute_query(sql: str, dataset: Dataset) -> SubTable:
    """Run a validated subset query; caller must have checked ``validate_query``."""
    query = sqlsubset.parse_query(sql)

    lowered_rows = [
        {f.name.lower(): cell for f, cell in zip(dataset.fields, row)}
        for row in dataset.rows
    ]
    kept = [
        (index, row)
        for index, row in enumerate(dataset.rows)
        if sqlsubset.evaluate_predicate(query.where, lowered_rows[index])
    ]
    if query.order_by:
        name_index = {f.name.lower(): i for i, f in enumerate(dataset.fields)}
        for column, ascending, _ in reversed(query.order_by):
            column_index = name_index[column.lower()]
            kept.sort(
                key=lambda item: sqlsubset.directed_order_key(item[1][column_index], ascending)
            )
    limit = min(query.limit if query.limit is not None else sqlsubset.MAX_ROWS, sqlsubset.MAX_ROWS)
    kept = kept[:limit]

    if query.columns is None:
        selected = list(range(len(dataset.fields)))
    else:
        lookup = {f.name.lower(): i for i, f in enumerate(dataset.fields)}
        selected = [lookup[name.lower()] for name, _ in query.columns]

    rows = [[row[i] for i in selected] for _, row in kept]
    fields = []
    for position, source_index in enumerate(selected):
        descriptor = dataset.fields[source_index]
        samples: list[Cell] = []
        for row in rows:
            cell = row[position]
            if cell is not None and cell not in samples:
                samples.append(cell)
            if len(samples) == 5:
                break
        fields.append(
            FieldDescriptor(
                name=descriptor.name,
                kind=descriptor.kind,
                dataset_id=descriptor.dataset_id,
                sample_values=tuple(samples),
            )
        )
    return SubTable(
        source_dataset=dataset.id, fields=fields, rows=rows, generating_query=sql
    )
