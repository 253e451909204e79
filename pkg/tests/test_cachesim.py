#!/usr/bin/env python3
"""
Tests for the cache simulator, merge traces and the conflict-freedom check
"""

import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pydantic import ValidationError

from src.cachesim import (
    AccessKind,
    ArrayId,
    CacheConfig,
    Layout,
    MemAccess,
    Parallel,
    Policy,
    SetAssociativeCache,
    Segmented,
    Sequential,
    dump_trace,
    load_trace,
    lru_touch_overhead,
    safe_window_len,
    simulate,
    trace_merge,
    verify_conflict_freedom,
)
from src.errors import InputValidationError, InvalidArgumentError
from src.mergepath import ComparisonCounter, MergeInput, diagonal_search


def reads(array: ArrayId, *indices: int) -> list[MemAccess]:
    return [MemAccess(array, i, AccessKind.READ) for i in indices]


def lru_stack_hits(lines: list[int], capacity_lines: int) -> int:
    """Fully-associative LRU hits from reuse distances"""
    hits = 0
    for t, line in enumerate(lines):
        previous = max((s for s in range(t) if lines[s] == line), default=None)
        if previous is not None and len(set(lines[previous + 1 : t])) < capacity_lines:
            hits += 1
    return hits


def random_input(rng: np.random.Generator, size_a: int, size_b: int) -> MergeInput:
    return MergeInput(np.sort(rng.integers(0, 10**6, size_a)), np.sort(rng.integers(0, 10**6, size_b)))


class TestCacheConfig:
    def test_sets(self) -> None:
        config = CacheConfig(capacity=48, associativity=3, line_size=4)
        assert (config.lines, config.sets) == (12, 4)

    def test_capacity_not_multiple_of_line(self) -> None:
        with pytest.raises(ValidationError):
            CacheConfig(capacity=10, associativity=1, line_size=4)

    def test_lines_not_divisible_into_sets(self) -> None:
        with pytest.raises(ValidationError):
            CacheConfig(capacity=8, associativity=3)

    def test_fully_associative(self) -> None:
        full = CacheConfig(capacity=12, associativity=3, policy=Policy.FIFO).fully_associative()
        assert (full.sets, full.policy) == (1, Policy.LRU)


class TestLayout:
    def test_overlap_rejected(self) -> None:
        layout = Layout(base_a=0, base_b=2, base_s=100, size_a=5, size_b=5, size_s=10)
        with pytest.raises(InvalidArgumentError):
            simulate([], layout, CacheConfig(capacity=3))

    def test_out_of_range_index(self) -> None:
        with pytest.raises(InvalidArgumentError):
            Layout.contiguous(2, 2).address(MemAccess(ArrayId.A, 2, AccessKind.READ))

    def test_set_aligned_bases_share_sets(self) -> None:
        config = CacheConfig(capacity=48, associativity=3)
        layout = Layout.set_aligned(20, 30, config)
        stride = config.sets * config.line_size
        assert layout.base_b % stride == 0 and layout.base_s % stride == 0
        layout.check_disjoint()


class TestSimulate:
    def test_both_lines_fit(self) -> None:
        config = CacheConfig(capacity=2, associativity=2)
        stats = simulate(reads(ArrayId.A, 0, 1, 0), Layout.contiguous(2, 0), config)
        assert (stats.compulsory, stats.hits, stats.misses) == (2, 1, 2)

    def test_direct_mapped_ping_pong(self) -> None:
        config = CacheConfig(capacity=4, associativity=1)
        stats = simulate(reads(ArrayId.A, 0, 4, 0, 4), Layout.contiguous(8, 0), config)
        assert stats.misses == 4
        assert (stats.compulsory, stats.conflict_misses, stats.capacity_misses) == (2, 2, 0)

    def test_capacity_miss(self) -> None:
        config = CacheConfig(capacity=2, associativity=2)
        stats = simulate(reads(ArrayId.A, 0, 1, 2, 0), Layout.contiguous(3, 0), config)
        assert (stats.compulsory, stats.capacity_misses, stats.conflict_misses) == (3, 1, 0)

    def test_fifo_ignores_hits(self) -> None:
        lru = SetAssociativeCache(CacheConfig(capacity=2, associativity=2))
        fifo = SetAssociativeCache(CacheConfig(capacity=2, associativity=2, policy=Policy.FIFO))
        for cache in (lru, fifo):
            for line in (0, 1, 0, 2):
                cache.access(line)
        assert lru.access(0) is True
        assert fifo.access(0) is False

    def test_writes_allocate(self) -> None:
        config = CacheConfig(capacity=4, associativity=4)
        trace = [MemAccess(ArrayId.S, 0, AccessKind.WRITE), MemAccess(ArrayId.S, 0, AccessKind.READ)]
        layout = Layout(base_a=0, base_b=0, base_s=0, size_a=0, size_b=0, size_s=1)
        assert simulate(trace, layout, config).hits == 1

    @settings(max_examples=50)
    @given(st.lists(st.integers(0, 15), max_size=120), st.sampled_from([1, 2, 4, 8]))
    def test_fully_associative_matches_stack_distance(self, indices: list[int], ways: int) -> None:
        config = CacheConfig(capacity=ways, associativity=ways)
        stats = simulate(reads(ArrayId.A, *indices), Layout.contiguous(16, 0), config)
        assert stats.hits == lru_stack_hits(indices, ways)
        assert stats.conflict_misses == 0
        assert stats.balanced()

    @settings(max_examples=50)
    @given(st.lists(st.integers(0, 31), max_size=120), st.sampled_from([1, 2, 3]))
    def test_misses_are_fully_classified(self, indices: list[int], ways: int) -> None:
        config = CacheConfig(capacity=6 * ways, associativity=ways, line_size=2)
        stats = simulate(reads(ArrayId.B, *indices), Layout.contiguous(0, 32), config)
        assert stats.balanced()
        assert stats.compulsory == len({i // 2 for i in indices})


class TestTrace:
    def test_sequential_two_elements(self) -> None:
        trace = trace_merge(MergeInput([1], [2]), Sequential())
        assert [(a.array, a.index, a.kind) for a in trace] == [
            (ArrayId.A, 0, AccessKind.READ),
            (ArrayId.B, 0, AccessKind.READ),
            (ArrayId.S, 0, AccessKind.WRITE),
            (ArrayId.S, 1, AccessKind.WRITE),
        ]

    def test_sequential_reads_each_input_once(self, rng: np.random.Generator) -> None:
        inp = random_input(rng, 40, 60)
        trace = trace_merge(inp, Sequential())
        input_reads = [(a.array, a.index) for a in trace if a.kind is AccessKind.READ]
        assert len(input_reads) == len(set(input_reads)) == inp.n
        assert sorted(a.index for a in trace if a.array is ArrayId.S) == list(range(inp.n))

    def test_parallel_searches_precede_merge_writes(self) -> None:
        inp = MergeInput([1, 3, 5, 7], [2, 4, 6, 8])
        trace = trace_merge(inp, Parallel(2))
        first_write = next(k for k, a in enumerate(trace) if a.kind is AccessKind.WRITE)
        counter = ComparisonCounter()
        diagonal_search(inp, 4, counter)
        probes = trace[: 2 * counter.partitioning]
        assert all(a.worker == 1 and a.kind is AccessKind.READ for a in probes)
        assert 2 * counter.partitioning <= first_write

    def test_segmented_windows_stay_within_window(self) -> None:
        inp = MergeInput(list(range(0, 8, 2)), list(range(1, 8, 2)))
        trace = trace_merge(inp, Segmented(1, 6))
        windows: list[list[MemAccess]] = [[]]
        for access in trace:
            windows[-1].append(access)
            if access.kind is AccessKind.WRITE and (access.index + 1) % 2 == 0:
                windows.append([])
        windows = [w for w in windows if w]
        assert len(windows) == 4
        for window in windows:
            assert len({a.index for a in window if a.array is ArrayId.A}) <= 2
            assert len({a.index for a in window if a.array is ArrayId.B}) <= 2

    def test_shared_output_lines_at_segment_boundaries(self) -> None:
        inp = MergeInput(list(range(5)), list(range(5, 10)))
        config = CacheConfig(capacity=24, associativity=3, line_size=4)
        trace = trace_merge(inp, Parallel(2), line_size=4)
        assert simulate(trace, Layout.contiguous(5, 5), config).shared_output_lines == 1

    def test_worker_count_checked(self) -> None:
        with pytest.raises(InvalidArgumentError):
            trace_merge(MergeInput([1], [2]), Parallel(0))

    def test_regular_misses_near_compulsory(self, rng: np.random.Generator) -> None:
        inp = random_input(rng, 300, 300)
        p = 4
        config = CacheConfig(capacity=48, associativity=3)
        stats = simulate(trace_merge(inp, Parallel(p)), Layout.contiguous(300, 300), config)
        assert stats.misses <= 2 * inp.n + 2 * p * ((300 + 1).bit_length() - 1 + 3)

    def test_dump_and_load(self) -> None:
        trace = trace_merge(MergeInput([1, 4], [2, 3]), Parallel(2))
        stream = io.StringIO()
        dump_trace(trace, stream)
        stream.seek(0)
        assert load_trace(stream) == [a._replace(worker=None) for a in trace]

    def test_load_rejects_garbage(self) -> None:
        with pytest.raises(InputValidationError):
            load_trace(io.StringIO("A 0 r\nQ 1 x\n"))


class TestConflictFreedom:
    def test_small_segmented_merge(self, rng: np.random.Generator) -> None:
        report = verify_conflict_freedom(random_input(rng, 8, 8), 2, 12)
        assert report.window_len == 4
        assert report.passed and report.conflict_misses == 0

    def test_contiguous_layout(self, rng: np.random.Generator) -> None:
        inp = random_input(rng, 50, 50)
        assert verify_conflict_freedom(inp, 4, 48).passed

    def test_identical_set_sequences(self, rng: np.random.Generator) -> None:
        inp = random_input(rng, 50, 50)
        layout = Layout.set_aligned(50, 50, CacheConfig(capacity=48, associativity=3))
        assert verify_conflict_freedom(inp, 4, 48, layout=layout).passed

    def test_six_way(self, rng: np.random.Generator) -> None:
        inp = random_input(rng, 70, 50)
        assert verify_conflict_freedom(inp, 3, 48, associativity=6).passed

    def test_direct_mapped_control_detects_conflicts(self, rng: np.random.Generator) -> None:
        inp = random_input(rng, 50, 50)
        layout = Layout.set_aligned(50, 50, CacheConfig(capacity=48, associativity=1))
        report = verify_conflict_freedom(inp, 4, 48, associativity=1, layout=layout)
        assert not report.passed
        assert report.conflict_misses > 0

    def test_fifo_rejected(self, rng: np.random.Generator) -> None:
        with pytest.raises(InvalidArgumentError):
            verify_conflict_freedom(random_input(rng, 20, 20), 2, 48, policy=Policy.FIFO)

    def test_safe_window_len(self) -> None:
        assert safe_window_len(CacheConfig(capacity=48, associativity=3)) == 16
        assert safe_window_len(CacheConfig(capacity=48, associativity=4)) == 12
        assert safe_window_len(CacheConfig(capacity=96, associativity=3, line_size=2)) == 31
        with pytest.raises(InvalidArgumentError):
            safe_window_len(CacheConfig(capacity=48, associativity=2))


class TestTouchOverhead:
    def test_unit_lines_add_half_again(self, rng: np.random.Generator) -> None:
        ratio = lru_touch_overhead(random_input(rng, 1500, 1500), 48, 1)
        assert ratio == pytest.approx(1.5, abs=0.05)

    def test_wide_lines_make_it_negligible(self, rng: np.random.Generator) -> None:
        ratio = lru_touch_overhead(random_input(rng, 10000, 10000), 3072, 16)
        assert 1.0 < ratio <= 1.05

    def test_wide_lines_need_long_windows(self, rng: np.random.Generator) -> None:
        inp = random_input(rng, 3000, 3000)
        short = lru_touch_overhead(inp, 48, 16)
        long = lru_touch_overhead(inp, 3072, 16)
        assert short > long > 1.0

    def test_off_is_identity(self, rng: np.random.Generator) -> None:
        assert lru_touch_overhead(random_input(rng, 10, 10), 12, touch=False) == 1.0


def _layouts(rng: np.random.Generator, size_a: int, size_b: int, config: CacheConfig) -> list[Layout]:
    layouts = [Layout.contiguous(size_a, size_b), Layout.set_aligned(size_a, size_b, config)]
    for _ in range(3):
        base_a = int(rng.integers(0, 1000))
        base_b = base_a + size_a + int(rng.integers(0, 100))
        base_s = base_b + size_b + int(rng.integers(0, 100))
        layouts.append(
            Layout(base_a=base_a, base_b=base_b, base_s=base_s, size_a=size_a, size_b=size_b, size_s=size_a + size_b)
        )
    return layouts


@pytest.mark.parametrize("associativity", [3, 6])
@pytest.mark.parametrize("cache_elems", [48, 96])
def test_no_conflict_misses_across_inputs_and_layouts(associativity: int, cache_elems: int) -> None:
    rng = np.random.default_rng(associativity * 1000 + cache_elems)
    config = CacheConfig(capacity=cache_elems, associativity=associativity)
    for case in range(100):
        size_a, size_b = (int(s) for s in rng.integers(0, 120, 2))
        inp = random_input(rng, size_a, size_b)
        p = 1 + case % 5
        for layout in _layouts(rng, size_a, size_b, config):
            report = verify_conflict_freedom(inp, p, cache_elems, associativity=associativity, layout=layout)
            assert report.conflict_misses == 0, (case, layout)
