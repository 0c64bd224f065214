"""Farthest-first and closest-first traversal over latent vectors.

Distances are Euclidean, computed as a left-to-right sum of squared
coordinate differences followed by one square root, so every path here
yields bit-identical values for the same pair.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .coverage import ConfigError

FULL_MATRIX_LIMIT = 4096
DEFAULT_K = 5000


class RankEntry(NamedTuple):
    index: int
    distance: float


def _as_points(points):
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError("points must all share one dimension")
    return arr


def _dist_rows(points, rows):
    """Distances between ``points[rows]`` and every point, shape (len(rows), n)."""
    acc = np.zeros((len(rows), points.shape[0]))
    sub = points[rows]
    for d in range(points.shape[1]):
        diff = sub[:, d, None] - points[None, :, d]
        acc += diff * diff
    return np.sqrt(acc)


def pairwise_distances(points):
    try:
        arr = _as_points(points)
    except ValueError as exc:
        raise ValueError(f"dimension mismatch: {exc}") from None
    return _dist_rows(arr, np.arange(arr.shape[0]))


def _extreme_pair(points, farthest, chunk=512):
    """(i, j) with i < j at maximal (or minimal) distance; lexicographically
    lowest pair among ties."""
    n = points.shape[0]
    best, best_pair = None, (0, 1)
    fill = -np.inf if farthest else np.inf
    for start in range(0, n - 1, chunk):
        rows = np.arange(start, min(start + chunk, n - 1))
        # only columns right of the first row can hold an upper-triangle pair
        cols = slice(start + 1, n)
        sub, rest = points[rows], points[cols]
        acc = np.zeros((len(rows), n - start - 1))
        buf = np.empty_like(acc)
        for d in range(points.shape[1]):
            np.subtract(sub[:, d, None], rest[None, :, d], out=buf)
            buf *= buf
            acc += buf
        np.sqrt(acc, out=acc)
        acc[np.arange(n - start - 1)[None, :] + start + 1 <= rows[:, None]] = fill
        flat = int(np.argmax(acc) if farthest else np.argmin(acc))
        val = acc.flat[flat]
        if best is None or (val > best if farthest else val < best):
            best = val
            best_pair = (int(rows[flat // acc.shape[1]]), start + 1 + flat % acc.shape[1])
    return best_pair


def _traverse(points, farthest, limit):
    pts = _as_points(points) if len(points) else np.zeros((0, 1))
    n = pts.shape[0]
    if n == 0:
        return []
    if n == 1:
        return [RankEntry(0, 0.0)]
    limit = n if limit is None else min(limit, n)
    if n <= FULL_MATRIX_LIMIT:
        dmat = _dist_rows(pts, np.arange(n))
        row = dmat.__getitem__
    else:
        dmat = None
        row = lambda i: _dist_rows(pts, np.array([i]))[0]  # noqa: E731
    i, j = _extreme_pair(pts, farthest)
    first = row(i)
    order = [RankEntry(i, 0.0), RankEntry(j, float(first[j]))]
    mind = np.minimum(first, row(j))
    taken = np.zeros(n, dtype=bool)
    taken[[i, j]] = True
    while len(order) < limit:
        cand = np.where(taken, -np.inf if farthest else np.inf, mind)
        nxt = int(np.argmax(cand) if farthest else np.argmin(cand))
        order.append(RankEntry(nxt, float(mind[nxt])))
        taken[nxt] = True
        np.minimum(mind, row(nxt), out=mind)
    return order[:limit]


def fft_order(points, limit=None):
    """Farthest-first traversal.

    Starts with a maximally distant pair, then repeatedly appends the point
    whose minimal distance to everything already chosen is largest. Ties go
    to the lowest index, which also pushes exact duplicates to the tail.
    The first entry's distance is 0.0; every later entry records its minimal
    distance to the earlier ones. ``limit`` stops after that many entries.
    """
    return _traverse(points, True, limit)


def cft_order(points, limit=None):
    """Closest-first traversal: the dual of ``fft_order``."""
    return _traverse(points, False, limit)


def dedup_indices(keys):
    """Indices of the first occurrence of every distinct key, in order."""
    seen = set()
    keep = []
    for i, key in enumerate(keys):
        if key not in seen:
            seen.add(key)
            keep.append(i)
    return keep


def cull(records, k=DEFAULT_K, key=lambda r: r.latent):
    """Keep the ``k`` most representative records (the FFT prefix)."""
    if k < 2:
        raise ConfigError(f"k must be at least 2, got {k}")
    records = list(records)
    if len(records) <= k:
        return records
    order = fft_order(np.stack([np.asarray(key(r), dtype=np.float64) for r in records]), limit=k)
    return [records[e.index] for e in order]


def hamming_points(traces):
    """Raw-trace coordinates whose Euclidean distance orders like Hamming
    distance: one-hot of each position's class, so squared distance equals
    twice the number of differing positions."""
    classes = np.stack([t.classes for t in traces]).astype(np.int64)
    onehot = np.zeros((classes.shape[0], classes.shape[1] * 8))
    onehot[np.arange(classes.shape[0])[:, None], np.arange(classes.shape[1]) * 8 + classes] = 1.0
    return onehot
