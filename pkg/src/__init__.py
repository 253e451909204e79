"""
Merge Path Package

Parallel merging and sorting by Merge Path partitioning, the cache-efficient
segmented merge, a set-associative cache simulator, a benchmark CLI and an
MCP server that exposes them.
"""

__version__ = "0.1.0"

from .main import MergePathMCPServer, main
from .mergepath import MergeInput, PartitionPoint, diagonal_search, partition, sequential_merge
from .parallel import parallel_merge, segmented_parallel_merge
from .sorters import cache_efficient_parallel_sort, parallel_merge_sort

__all__ = [
    "main",
    "MergePathMCPServer",
    "MergeInput",
    "PartitionPoint",
    "diagonal_search",
    "partition",
    "sequential_merge",
    "parallel_merge",
    "segmented_parallel_merge",
    "parallel_merge_sort",
    "cache_efficient_parallel_sort",
]
