#!/usr/bin/env python3
"""
Tests for the merge path geometry: merge matrix, diagonal search,
partitioning and the segment merge kernels
"""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import keys, merge_inputs, sorted_lists, tagged, worker_counts
from src.errors import InputValidationError, InvalidArgumentError
from src.mergepath import (
    ORIGIN,
    ComparisonCounter,
    MergeInput,
    Move,
    PartitionPoint,
    diagonal_search,
    equispaced_diagonals,
    is_sorted,
    merge_matrix_entry,
    partition,
    path_trace,
    reference_merge,
    sequential_merge,
)


def prefix_point(inp: MergeInput, d: int) -> PartitionPoint:
    """Count the sources of the first d outputs of a stable merge"""
    merged = sorted(
        [(v, 0, k) for k, v in enumerate(inp.a)] + [(v, 1, k) for k, v in enumerate(inp.b)]
    )
    from_a = sum(1 for _, src, _ in merged[:d] if src == 0)
    return PartitionPoint(from_a, d - from_a)


class TestMergeMatrix:
    def test_strictly_greater_is_one(self) -> None:
        assert merge_matrix_entry(MergeInput([5], [3]), 0, 0) is True

    def test_equal_is_zero(self) -> None:
        assert merge_matrix_entry(MergeInput([3], [3]), 0, 0) is False

    def test_out_of_range_index(self) -> None:
        with pytest.raises(IndexError):
            merge_matrix_entry(MergeInput([1, 2], [3]), 2, 0)

    @given(merge_inputs())
    def test_rows_and_columns_are_monotone(self, inp: MergeInput) -> None:
        for i in range(len(inp.a)):
            row = [merge_matrix_entry(inp, i, j) for j in range(len(inp.b))]
            assert row == sorted(row, reverse=True)
        for j in range(len(inp.b)):
            column = [merge_matrix_entry(inp, i, j) for i in range(len(inp.a))]
            assert column == sorted(column)

    @given(st.lists(keys, max_size=32).map(sorted), st.lists(keys, max_size=32).map(sorted))
    def test_cross_diagonals_are_monotone(self, a: list[int], b: list[int]) -> None:
        inp = MergeInput(a, b)
        for s in range(len(a) + len(b) - 1):
            # walk from the top right corner down-left; zeros come before ones
            cells = [
                merge_matrix_entry(inp, i, s - i)
                for i in range(max(0, s - len(b) + 1), min(s, len(a) - 1) + 1)
            ]
            assert cells == sorted(cells)


class TestDiagonalSearch:
    @pytest.mark.parametrize(
        ("a", "b", "d", "expected"),
        [
            ([], [7, 8], 1, PartitionPoint(0, 1)),
            ([1, 2], [3, 4], 2, PartitionPoint(2, 0)),
            ([1, 3, 5, 7], [2, 4, 6, 8], 4, PartitionPoint(2, 2)),
            ([2, 2, 2], [2, 2], 3, PartitionPoint(3, 0)),
        ],
    )
    def test_examples(self, a: list[int], b: list[int], d: int, expected: PartitionPoint) -> None:
        assert diagonal_search(MergeInput(a, b), d) == expected

    def test_diagonal_out_of_range(self) -> None:
        with pytest.raises(InvalidArgumentError):
            diagonal_search(MergeInput([1], [2]), 3)

    @given(merge_inputs(), st.data())
    def test_matches_stable_merge_prefix(self, inp: MergeInput, data: st.DataObject) -> None:
        d = data.draw(st.integers(min_value=0, max_value=inp.n))
        point = diagonal_search(inp, d)
        assert point == prefix_point(inp, d)
        assert point.d == d

    @given(merge_inputs())
    def test_comparison_bound(self, inp: MergeInput) -> None:
        bound = (min(len(inp.a), len(inp.b)) + 1).bit_length() - 1 + 2
        for d in range(inp.n + 1):
            counter = ComparisonCounter()
            diagonal_search(inp, d, counter)
            assert counter.partitioning <= bound

    def test_windowed_search_is_absolute(self) -> None:
        inp = MergeInput([1, 3, 5, 7, 9, 11], [2, 4, 6, 8, 10, 12])
        origin = diagonal_search(inp, 4)
        assert diagonal_search(inp, 2, origin=origin, extent=4) == diagonal_search(inp, 6)

    def test_windowed_search_rejects_diagonal_beyond_extent(self) -> None:
        inp = MergeInput(list(range(10)), list(range(10)))
        with pytest.raises(InvalidArgumentError):
            diagonal_search(inp, 5, extent=2)


class TestPartition:
    def test_single_worker_spans_path(self) -> None:
        inp = MergeInput([4, 5, 6], [1])
        parts = partition(inp, 1)
        assert parts.points == (ORIGIN, PartitionPoint(3, 1))
        assert parts.workers == 1

    def test_two_workers(self) -> None:
        parts = partition(MergeInput([1, 3, 5, 7], [2, 4, 6, 8]), 2)
        assert parts.points == (PartitionPoint(0, 0), PartitionPoint(2, 2), PartitionPoint(4, 4))

    def test_empty_b_uses_floor_rule(self) -> None:
        parts = partition(MergeInput([1, 2, 3, 4, 5], []), 2)
        assert [pt.d for pt in parts.points] == [0, 2, 5]
        assert parts.points[1] == PartitionPoint(2, 0)

    def test_zero_workers(self) -> None:
        with pytest.raises(InvalidArgumentError):
            partition(MergeInput([1], [2]), 0)

    @given(merge_inputs(), worker_counts)
    def test_points_are_monotone_and_balanced(self, inp: MergeInput, p: int) -> None:
        parts = partition(inp, p)
        assert len(parts.points) == p + 1
        assert [pt.d for pt in parts.points] == equispaced_diagonals(inp.n, p)
        for prev, cur in zip(parts.points, parts.points[1:]):
            assert prev.a_off <= cur.a_off and prev.b_off <= cur.b_off
        lengths = parts.segment_lengths()
        assert sum(lengths) == inp.n
        assert max(lengths) - min(lengths) <= 1

    def test_regular_single_worker_makes_no_comparisons(self) -> None:
        counter = ComparisonCounter()
        partition(MergeInput(list(range(50)), list(range(50))), 1, counter)
        assert counter.partitioning == 0


class TestSequentialMerge:
    def test_full_merge(self) -> None:
        assert sequential_merge(MergeInput([1, 3], [2, 4]), ORIGIN, 4) == [1, 2, 3, 4]

    def test_suffix(self) -> None:
        assert sequential_merge(MergeInput([1, 3], [2, 4]), PartitionPoint(1, 1), 2) == [3, 4]

    def test_ties_take_a_first(self) -> None:
        a, b = tagged([2, 2], "a"), tagged([2], "b")
        out = sequential_merge(MergeInput(a, b), ORIGIN, 3)
        assert [k.tag for k in out] == [("a", 0), ("a", 1), ("b", 0)]

    def test_overrun(self) -> None:
        with pytest.raises(InvalidArgumentError):
            sequential_merge(MergeInput([1], [2]), PartitionPoint(1, 0), 2)

    def test_counts_one_merge_step_per_output(self) -> None:
        counter = ComparisonCounter()
        sequential_merge(MergeInput([1, 3, 5], [2, 4]), ORIGIN, 5, counter)
        assert counter.merging == 5

    @given(merge_inputs(), st.data())
    def test_segment_equals_oracle_slice(self, inp: MergeInput, data: st.DataObject) -> None:
        d = data.draw(st.integers(min_value=0, max_value=inp.n))
        length = data.draw(st.integers(min_value=0, max_value=inp.n - d))
        out = sequential_merge(inp, diagonal_search(inp, d), length)
        assert list(out) == reference_merge(inp.a, inp.b)[d : d + length]

    @given(sorted_lists, sorted_lists, st.data())
    def test_vectorized_kernel_matches_scalar(self, a: list[int], b: list[int], data: st.DataObject) -> None:
        scalar = MergeInput(a, b)
        vector = MergeInput(np.array(a, dtype=np.int64), np.array(b, dtype=np.int64))
        d = data.draw(st.integers(min_value=0, max_value=scalar.n))
        length = data.draw(st.integers(min_value=0, max_value=scalar.n - d))
        out = sequential_merge(vector, diagonal_search(vector, d), length)
        assert isinstance(out, np.ndarray)
        assert out.tolist() == list(sequential_merge(scalar, diagonal_search(scalar, d), length))


class TestPathTrace:
    def test_down_then_right(self) -> None:
        assert path_trace(MergeInput([1], [2])) == [Move.DOWN, Move.RIGHT]

    def test_boundary_forces_direction(self) -> None:
        assert path_trace(MergeInput([], [1, 2])) == [Move.RIGHT, Move.RIGHT]

    def test_alternating(self) -> None:
        moves = path_trace(MergeInput([1, 3, 5, 7], [2, 4, 6, 8]))
        assert "".join(m.value for m in moves) == "DRDRDRDR"

    @given(merge_inputs())
    def test_path_crosses_each_diagonal_at_search_point(self, inp: MergeInput) -> None:
        moves = path_trace(inp)
        assert len(moves) == inp.n
        i = j = 0
        for d, move in enumerate(moves, start=1):
            i, j = (i + 1, j) if move is Move.DOWN else (i, j + 1)
            assert diagonal_search(inp, d) == PartitionPoint(i, j)


class TestValidation:
    def test_unsorted_operand(self) -> None:
        with pytest.raises(InputValidationError):
            MergeInput([2, 1], [3]).validate()

    def test_sorted_check(self) -> None:
        assert is_sorted([]) and is_sorted([1, 1, 2])
        assert not is_sorted(np.array([3, 2]))
