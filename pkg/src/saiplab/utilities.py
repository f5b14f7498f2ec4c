import sys
import time
import tracemalloc
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any, Iterator

import numpy as np
from loguru import logger
from vivarium.framework.randomness import get_hash


def get_stream_seed(seed: Any, key: str) -> int:
    """Derives the seed of a keyed sub-stream, e.g. one per sampling chain."""
    return get_hash(f"{seed}_{key}")


def configure_logging_to_terminal(verbose: bool = False):
    logger.remove()  # Clear default configuration
    add_logging_sink(sys.stdout, verbose, colorize=True)


def add_logging_sink(sink, verbose, colorize=False, serialize=False):
    message_format = (
        "<green>{time:YYYY-MM-DD HH:mm:ss.SSS}</green> | "
        "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> "
        "- <level>{message}</level>"
    )
    level = "DEBUG" if verbose else "INFO"
    logger.add(sink, colorize=colorize, level=level, format=message_format, serialize=serialize)


@dataclass
class ResourceUsage:
    wall_time_seconds: float = 0.0
    peak_extra_memory_bytes: int = 0


@contextmanager
def measure_resources(track_memory: bool = False) -> Iterator[ResourceUsage]:
    """
    Measures wall time (and, when requested, the peak of newly traced
    allocations) of the enclosed block. Memory tracking is best effort: it only
    sees allocations made through the Python and numpy allocators.
    """
    usage = ResourceUsage()
    started_tracing = False
    if track_memory and not tracemalloc.is_tracing():
        tracemalloc.start()
        started_tracing = True
    if track_memory:
        tracemalloc.reset_peak()
        baseline, _ = tracemalloc.get_traced_memory()
    start = time.perf_counter()
    try:
        yield usage
    finally:
        usage.wall_time_seconds = time.perf_counter() - start
        if track_memory:
            _, peak = tracemalloc.get_traced_memory()
            usage.peak_extra_memory_bytes = max(0, int(peak - baseline))
            if started_tracing:
                tracemalloc.stop()


def relative_error(estimate: np.ndarray, reference: np.ndarray) -> float:
    return float(
        np.linalg.norm(np.asarray(estimate) - np.asarray(reference))
        / (np.linalg.norm(reference) + 1e-12)
    )
