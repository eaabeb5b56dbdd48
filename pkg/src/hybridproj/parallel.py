"""Deterministic data-parallel candidate evaluation.

Each solver phase evaluates a family of candidate points and selects the one
furthest from the current iterate. The family is split into contiguous index
chunks that worker threads evaluate independently; every candidate value and
distance is computed elementwise, so it does not depend on the chunk layout.
The reduction walks chunks in index order and keeps a strictly greater
maximum, which reproduces a global first-occurrence argmax. Results are
therefore identical for any worker count, including 1.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["Furthest", "chunk_ranges", "furthest_candidate"]

# Batch evaluator contract: evaluate(lo, hi) returns the candidate points for
# members lo..hi-1 as an array of shape (hi - lo, d). The returned array is
# owned by the caller and may be mutated.
ChunkEvaluator = Callable[[int, int], np.ndarray]

# Cap on rows per chunk. Keeping chunk temporaries a few megabytes large lets
# the allocator reuse them instead of remapping fresh pages every pass, which
# costs several times the arithmetic at multi-million-member scale.
TARGET_CHUNK_ROWS = 262_144


@dataclass(frozen=True)
class Furthest:
    """Winning candidate of a phase: first index attaining the max distance."""

    index: int
    point: np.ndarray
    dist2: float

    @property
    def distance(self) -> float:
        return float(np.sqrt(self.dist2))


def chunk_ranges(count: int, parts: int) -> list[tuple[int, int]]:
    """Split ``range(count)`` into at most ``parts`` contiguous chunks."""
    if count <= 0:
        return []
    parts = max(1, min(parts, count))
    bounds = np.linspace(0, count, parts + 1, dtype=np.int64)
    return [(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]


def _chunk_best(evaluate: ChunkEvaluator, lo: int, hi: int, x: np.ndarray) -> Furthest:
    points = np.asarray(evaluate(lo, hi), dtype=np.float64)
    if points.shape != (hi - lo, x.size):
        raise ValueError(
            f"evaluator returned shape {points.shape}, expected {(hi - lo, x.size)}"
        )
    diff = points - x
    dist2 = np.einsum("ij,ij->i", diff, diff)
    k = int(np.argmax(dist2))
    return Furthest(index=lo + k, point=np.array(points[k]), dist2=float(dist2[k]))


def furthest_candidate(
    evaluate: ChunkEvaluator,
    count: int,
    x: np.ndarray,
    pool: ThreadPoolExecutor | None = None,
    workers: int = 1,
) -> Furthest:
    """Evaluate ``count`` candidates and return the furthest one from ``x``.

    Ties break toward the smallest index. When a pool is given the chunks run
    on its threads; the reduction order stays fixed either way.
    """
    if count <= 0:
        raise ValueError("candidate family must be nonempty")
    parts = max(workers if pool is not None else 1, -(-count // TARGET_CHUNK_ROWS))
    ranges = chunk_ranges(count, parts)
    if pool is None or len(ranges) == 1:
        results = [_chunk_best(evaluate, lo, hi, x) for lo, hi in ranges]
    else:
        futures = [pool.submit(_chunk_best, evaluate, lo, hi, x) for lo, hi in ranges]
        results = [f.result() for f in futures]
    best = results[0]
    for candidate in results[1:]:
        if candidate.dist2 > best.dist2:
            best = candidate
    return best
