from __future__ import annotations

import pytest

from canned import build_canned_runtime, record_canned_transcript, run_canned_session


@pytest.fixture
def canned_runtime():
    return build_canned_runtime()


@pytest.fixture
def canned_tree(canned_runtime):
    return run_canned_session(canned_runtime, depth=1)


@pytest.fixture
def canned_transcript_path(tmp_path):
    path = tmp_path / "transcript.jsonl"
    record_canned_transcript(path)
    return path
