"""Shared fixtures and strategies for the test suite"""

import os
import sys

import numpy as np
import pytest
from hypothesis import strategies as st

# Add the repository root to the path so `src` imports resolve without installing
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from src.mergepath import MergeInput, TaggedKey  # noqa: E402

keys = st.integers(min_value=-50, max_value=50)
sorted_lists = st.lists(keys, max_size=60).map(sorted)
worker_counts = st.integers(min_value=1, max_value=9)


@st.composite
def merge_inputs(draw: st.DrawFn) -> MergeInput:
    return MergeInput(draw(sorted_lists), draw(sorted_lists))


def tagged(values: list[int], source: str) -> list[TaggedKey]:
    """Keys tagged with (source, position) so merge order of equal keys is visible"""
    return [TaggedKey(v, (source, k)) for k, v in enumerate(values)]


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def random_pair(rng: np.random.Generator) -> MergeInput:
    a = np.sort(rng.integers(-(2**62), 2**62, 500))
    b = np.sort(rng.integers(-(2**62), 2**62, 700))
    return MergeInput(a, b)


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch: pytest.MonkeyPatch) -> None:
    for name in ("LOG_LEVEL", "MERGEPATH_THREADS", "MERGEPATH_CACHE_ELEMS", "MERGEPATH_VALIDATE"):
        monkeypatch.delenv(name, raising=False)
