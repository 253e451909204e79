#!/usr/bin/env python3
"""
Merge Path MCP Server

Exposes the parallel merge, the parallel sorts and the cache simulator as MCP
tools over stdio. Inputs arrive as JSON integer arrays; every tool answers with
a JSON text payload. Computation runs in a worker thread so the event loop
keeps serving the transport.
"""

import asyncio
import json
import logging
import sys
from typing import Any

import mcp.server.stdio
import mcp.types as types
import numpy as np
from mcp.server import Server
from mcp.server.lowlevel.server import NotificationOptions
from mcp.server.models import InitializationOptions

from .cachesim import (
    CacheConfig,
    Layout,
    MergeVariant,
    Parallel,
    Policy,
    Segmented,
    Sequential,
    simulate,
    trace_merge,
    verify_conflict_freedom,
)
from .config import Settings, configure_logging
from .errors import InvalidArgumentError
from .mergepath import MergeInput
from .parallel import parallel_merge, segmented_parallel_merge
from .sorters import SortReport, cache_efficient_parallel_sort, parallel_merge_sort

logger = logging.getLogger(__name__)

SERVER_NAME = "mergepath-mcp-server"
SERVER_VERSION = "0.1.0"

_INT_ARRAY = {"type": "array", "items": {"type": "integer"}}


def _keys(arguments: dict[str, Any], name: str) -> np.ndarray:
    values = arguments.get(name)
    if not isinstance(values, list):
        raise InvalidArgumentError(f"'{name}' must be an array of integers")
    return np.asarray(values, dtype=np.int64)


class MergePathMCPServer:
    """MCP server for Merge Path merging, sorting and cache simulation"""

    def __init__(self, settings: Settings | None = None) -> None:
        self.settings = settings or Settings.from_env()
        self.server = Server(SERVER_NAME)
        self._setup_handlers()

    def _setup_handlers(self) -> None:
        """Set up MCP handlers"""

        @self.server.list_tools()
        async def handle_list_tools() -> list[types.Tool]:
            return self.tools()

        @self.server.call_tool()
        async def handle_call_tool(name: str, arguments: dict[str, Any]) -> list[types.TextContent]:
            return await self.call_tool(name, arguments)

    def tools(self) -> list[types.Tool]:
        return [
            types.Tool(
                name="merge_arrays",
                description="Merge two sorted integer arrays with the parallel or segmented Merge Path merge",
                inputSchema={
                    "type": "object",
                    "properties": {
                        "a": {**_INT_ARRAY, "description": "First sorted array"},
                        "b": {**_INT_ARRAY, "description": "Second sorted array"},
                        "threads": {
                            "type": "integer",
                            "description": "Worker count",
                            "minimum": 1,
                        },
                        "variant": {
                            "type": "string",
                            "enum": ["regular", "segmented"],
                            "default": "regular",
                        },
                        "cache_elems": {
                            "type": "integer",
                            "description": "Cache size in elements (segmented variant)",
                            "minimum": 3,
                        },
                    },
                    "required": ["a", "b"],
                },
            ),
            types.Tool(
                name="sort_array",
                description="Sort an integer array with the parallel merge-sort or the cache-efficient sort",
                inputSchema={
                    "type": "object",
                    "properties": {
                        "data": {**_INT_ARRAY, "description": "Keys to sort"},
                        "threads": {"type": "integer", "minimum": 1},
                        "variant": {
                            "type": "string",
                            "enum": ["plain", "cache_efficient"],
                            "default": "plain",
                        },
                        "cache_elems": {"type": "integer", "minimum": 3},
                    },
                    "required": ["data"],
                },
            ),
            types.Tool(
                name="simulate_cache",
                description="Replay a merge through a set-associative cache and classify the misses",
                inputSchema={
                    "type": "object",
                    "properties": {
                        "a": _INT_ARRAY,
                        "b": _INT_ARRAY,
                        "variant": {
                            "type": "string",
                            "enum": ["sequential", "parallel", "segmented"],
                            "default": "segmented",
                        },
                        "threads": {"type": "integer", "minimum": 1, "default": 1},
                        "cache_elems": {"type": "integer", "minimum": 3},
                        "associativity": {"type": "integer", "minimum": 1, "default": 3},
                        "line_size": {"type": "integer", "minimum": 1, "default": 1},
                        "policy": {"type": "string", "enum": [p.value for p in Policy], "default": Policy.LRU.value},
                        "touch": {
                            "type": "boolean",
                            "description": "Refresh unconsumed input lines before every window",
                            "default": False,
                        },
                    },
                    "required": ["a", "b", "cache_elems"],
                },
            ),
            types.Tool(
                name="verify_conflict_freedom",
                description="Check that the segmented merge takes no conflict misses on a k-way LRU cache",
                inputSchema={
                    "type": "object",
                    "properties": {
                        "a": _INT_ARRAY,
                        "b": _INT_ARRAY,
                        "threads": {"type": "integer", "minimum": 1, "default": 1},
                        "cache_elems": {"type": "integer", "minimum": 3},
                        "associativity": {"type": "integer", "minimum": 1, "default": 3},
                        "line_size": {"type": "integer", "minimum": 1, "default": 1},
                    },
                    "required": ["a", "b", "cache_elems"],
                },
            ),
        ]

    async def call_tool(self, name: str, arguments: dict[str, Any]) -> list[types.TextContent]:
        handlers = {
            "merge_arrays": self._merge_arrays,
            "sort_array": self._sort_array,
            "simulate_cache": self._simulate_cache,
            "verify_conflict_freedom": self._verify_conflict_freedom,
        }
        try:
            handler = handlers.get(name)
            if handler is None:
                result = f"Unknown tool: {name}"
            else:
                payload = await asyncio.to_thread(handler, arguments or {})
                result = json.dumps(payload)
            return [types.TextContent(type="text", text=result)]

        except Exception as e:
            error_msg = f"Error executing {name}: {str(e)}"
            logger.error(error_msg, exc_info=True)
            return [types.TextContent(type="text", text=error_msg)]

    def _threads(self, arguments: dict[str, Any]) -> int:
        return int(arguments.get("threads", self.settings.threads))

    def _cache_elems(self, arguments: dict[str, Any]) -> int:
        return int(arguments.get("cache_elems", self.settings.cache_elems))

    def _merge_arrays(self, arguments: dict[str, Any]) -> dict[str, Any]:
        inp = MergeInput(_keys(arguments, "a"), _keys(arguments, "b"))
        inp.validate()
        p = self._threads(arguments)
        variant = arguments.get("variant", "regular")
        if variant == "regular":
            output = parallel_merge(inp, p, validate=False)
        elif variant == "segmented":
            output = segmented_parallel_merge(inp, p, self._cache_elems(arguments), validate=False)
        else:
            raise InvalidArgumentError(f"unknown merge variant: {variant}")
        report = output.report
        logger.info(f"merge_arrays: {variant} N={inp.n} p={report.workers}")
        return {
            "merged": np.asarray(output.s).tolist(),
            "variant": report.variant,
            "workers": report.workers,
            "window_len": report.window_len,
            "windows": len(report.windows),
            "comparisons": {
                "partitioning": report.counts.partitioning,
                "merging": report.counts.merging,
            },
            "partition_points": [[s.start.a_off, s.start.b_off] for s in report.segments],
        }

    def _sort_array(self, arguments: dict[str, Any]) -> dict[str, Any]:
        data = _keys(arguments, "data")
        p = self._threads(arguments)
        variant = arguments.get("variant", "plain")
        report = SortReport()
        if variant == "plain":
            result = parallel_merge_sort(data, p, report)
        elif variant == "cache_efficient":
            result = cache_efficient_parallel_sort(data, p, self._cache_elems(arguments), report)
        else:
            raise InvalidArgumentError(f"unknown sort variant: {variant}")
        logger.info(f"sort_array: {variant} N={len(data)} p={p} rounds={len(report.rounds)}")
        return {
            "sorted": np.asarray(result).tolist(),
            "variant": variant,
            "rounds": [
                {"phase": r.phase, "width": r.width, "pairs": r.pairs, "mode": r.mode}
                for r in report.rounds
            ],
        }

    def _cache_config(self, arguments: dict[str, Any]) -> CacheConfig:
        return CacheConfig(
            capacity=self._cache_elems(arguments),
            associativity=int(arguments.get("associativity", 3)),
            line_size=int(arguments.get("line_size", 1)),
            policy=Policy(arguments.get("policy", Policy.LRU.value)),
        )

    def _simulate_cache(self, arguments: dict[str, Any]) -> dict[str, Any]:
        inp = MergeInput(_keys(arguments, "a"), _keys(arguments, "b"))
        inp.validate()
        config = self._cache_config(arguments)
        p = int(arguments.get("threads", 1))
        name = arguments.get("variant", "segmented")
        variant: MergeVariant
        if name == "sequential":
            variant = Sequential()
        elif name == "parallel":
            variant = Parallel(p)
        elif name == "segmented":
            variant = Segmented(p, config.capacity)
        else:
            raise InvalidArgumentError(f"unknown merge variant: {name}")
        trace = trace_merge(inp, variant, touch=bool(arguments.get("touch", False)), line_size=config.line_size)
        stats = simulate(trace, Layout.contiguous(len(inp.a), len(inp.b)), config)
        return {"variant": name, "config": config.model_dump(mode="json"), "stats": stats.model_dump()}

    def _verify_conflict_freedom(self, arguments: dict[str, Any]) -> dict[str, Any]:
        inp = MergeInput(_keys(arguments, "a"), _keys(arguments, "b"))
        inp.validate()
        config = self._cache_config(arguments)
        report = verify_conflict_freedom(
            inp,
            int(arguments.get("threads", 1)),
            config.capacity,
            associativity=config.associativity,
            line_size=config.line_size,
        )
        return report.model_dump()

    async def run(self) -> None:
        """Run the MCP server"""
        logger.info("Starting Merge Path MCP Server")
        async with mcp.server.stdio.stdio_server() as (read_stream, write_stream):
            await self.server.run(
                read_stream,
                write_stream,
                InitializationOptions(
                    server_name=SERVER_NAME,
                    server_version=SERVER_VERSION,
                    capabilities=self.server.get_capabilities(
                        notification_options=NotificationOptions(),
                        experimental_capabilities={},
                    ),
                ),
            )


async def serve() -> None:
    try:
        settings = Settings.from_env()
        configure_logging(settings.log_level)
        server = MergePathMCPServer(settings)
        await server.run()
    except KeyboardInterrupt:
        logger.info("Server interrupted")
    except Exception as e:
        logger.error(f"Server error: {e}", exc_info=True)
        sys.exit(1)


def main() -> None:
    """Main entry point"""
    asyncio.run(serve())


if __name__ == "__main__":
    main()
