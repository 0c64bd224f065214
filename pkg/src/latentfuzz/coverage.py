"""Edge-coverage maps with AFL-style hit-count bucketing."""
from __future__ import annotations

import hashlib
import struct
import zlib
from dataclasses import dataclass

import numpy as np

N_CLASSES = 8
DEFAULT_MAP_SIZE = 1024
FULL_MAP_SIZE = 65536
TRACE_MAGIC = b"GNT1"

# upper bound (inclusive) of the raw hit count for classes 0..6; 7 is >= 32
_BUCKET_EDGES = np.array([0, 1, 2, 3, 7, 15, 31])


class ConfigError(ValueError):
    pass


def is_power_of_two(n):
    return isinstance(n, (int, np.integer)) and n > 0 and (n & (n - 1)) == 0


def check_map_size(map_size):
    if not is_power_of_two(map_size):
        raise ConfigError(f"map_size must be a power of two, got {map_size}")
    return int(map_size)


def edge_index(prev_loc, cur_loc, map_size):
    check_map_size(map_size)
    if prev_loc < 0 or cur_loc < 0:
        raise ValueError("locations must be nonnegative")
    return (cur_loc ^ (prev_loc >> 1)) % map_size


def bucketize(count):
    """Map a raw hit count to one of the 8 classes.

    0, 1, 2, 3 map to themselves; 4-7 -> 4, 8-15 -> 5, 16-31 -> 6, 32+ -> 7.
    Accepts a scalar or an integer array.
    """
    counts = np.asarray(count)
    if np.any(counts < 0):
        raise ValueError("hit counts are nonnegative")
    classes = np.searchsorted(_BUCKET_EDGES, counts, side="left").astype(np.uint8)
    if classes.ndim == 0:
        return int(classes)
    return classes


def site_id(target, name):
    """Stable 16-bit location id of an instrumentation point."""
    return zlib.crc32(f"{target}:{name}".encode()) & 0xFFFF


class SiteTable(dict):
    """Lazily assigned instrumentation locations for one target."""

    def __init__(self, target):
        super().__init__()
        self.target = target

    def __missing__(self, name):
        loc = site_id(self.target, name)
        self[name] = loc
        return loc


class Tracer:
    """Per-execution coverage map. Never shared between executions."""

    __slots__ = ("map_size", "mask", "counts", "prev")

    def __init__(self, map_size=DEFAULT_MAP_SIZE):
        self.map_size = check_map_size(map_size)
        self.mask = self.map_size - 1
        self.counts = {}
        self.prev = 0

    def hit(self, loc):
        idx = (loc ^ (self.prev >> 1)) & self.mask
        self.counts[idx] = self.counts.get(idx, 0) + 1
        self.prev = loc

    def trace(self):
        raw = np.zeros(self.map_size, dtype=np.int64)
        if self.counts:
            idx = np.fromiter(self.counts.keys(), dtype=np.int64, count=len(self.counts))
            raw[idx] = np.fromiter(self.counts.values(), dtype=np.int64, count=len(self.counts))
        return CoverageTrace(bucketize(raw))


@dataclass(frozen=True, eq=False)
class CoverageTrace:
    classes: np.ndarray

    def __post_init__(self):
        classes = np.asarray(self.classes, dtype=np.uint8)
        if classes.ndim != 1:
            raise ValueError("trace must be one-dimensional")
        check_map_size(classes.size)
        if classes.size and classes.max() >= N_CLASSES:
            raise ValueError("trace classes must lie in [0, 7]")
        classes.setflags(write=False)
        object.__setattr__(self, "classes", classes)

    @property
    def map_size(self):
        return self.classes.size

    def __eq__(self, other):
        return isinstance(other, CoverageTrace) and np.array_equal(self.classes, other.classes)

    def __hash__(self):
        return hash(self.classes.tobytes())

    def digest(self):
        return hashlib.sha256(self.classes.tobytes()).hexdigest()

    def nonzero(self):
        return int(np.count_nonzero(self.classes))

    def to_bytes(self):
        return TRACE_MAGIC + struct.pack("<I", self.map_size) + self.classes.tobytes()

    @classmethod
    def from_bytes(cls, blob):
        if len(blob) < 8 or blob[:4] != TRACE_MAGIC:
            raise ValueError("not a GNT1 trace (bad magic)")
        (size,) = struct.unpack("<I", blob[4:8])
        if len(blob) != 8 + size:
            raise ValueError(f"GNT1 trace length mismatch: header says {size}, "
                             f"payload has {len(blob) - 8}")
        return cls(np.frombuffer(blob[8:], dtype=np.uint8).copy())


def write_trace(path, trace):
    with open(path, "wb") as f:
        f.write(trace.to_bytes())


def read_trace(path):
    with open(path, "rb") as f:
        return CoverageTrace.from_bytes(f.read())
