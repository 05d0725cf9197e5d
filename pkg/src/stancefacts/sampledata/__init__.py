"""Bundled indicator samples in the long WDI-style layout."""

from __future__ import annotations

from pathlib import Path

from ..datastore import DatasetStore

_HERE = Path(__file__).parent

WDI_SAMPLE = _HERE / "wdi_indicators.csv"
LABOR_SAMPLE = _HERE / "labor_participation.csv"
WIDE_SAMPLE = _HERE / "wdi_wide_export.csv"


def load_sample_store() -> DatasetStore:
    """A store holding the two bundled long-format datasets."""
    store = DatasetStore()
    store.ingest_dataset(
        WDI_SAMPLE.read_text(encoding="utf-8"),
        name="wdi_indicators",
        provenance="bundled sample, World Development Indicators layout",
    )
    store.ingest_dataset(
        LABOR_SAMPLE.read_text(encoding="utf-8"),
        name="labor_participation",
        provenance="bundled sample, labor force participation rates",
    )
    return store
