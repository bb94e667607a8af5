"""
Shadow memory: timestamp maps over the cell space

Three-level lookup tables (primary -> secondary -> leaf chunk), so that space
follows the chunks actually touched instead of the address-space size. Leaf
chunks are numpy arrays of fixed-width unsigned timestamps; unallocated
chunks read as 0, the "never accessed" sentinel.

Per-cell access goes through a flat chunk-key index of memoryviews onto the
leaves, so the hot path is one dict lookup and one buffer index. The
three-level tables own allocation and ordered iteration.
"""

import logging
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from trmsprof.errors import ConfigError, CounterWidthExceeded

log = logging.getLogger(__name__)

# Writer tag for cells last written through a kernelWrite; thread writers
# are tagged with their (non-negative) thread id.
KERNEL_WRITER = -1
NO_WRITER = -2

DEFAULT_PRIMARY_SIZE = 2048
DEFAULT_SECONDARY_SIZE = 16 * 1024
DEFAULT_CHUNK_SIZE = 64 * 1024


def _bits(size: int, what: str) -> int:
    if size < 1 or size & (size - 1):
        raise ConfigError(f"{what} must be a power of two, got {size}")
    return size.bit_length() - 1


def timestamp_dtype(width: int):
    """Smallest unsigned dtype holding `width`-bit timestamps"""
    if width <= 8:
        return np.uint8
    if width <= 16:
        return np.uint16
    if width <= 32:
        return np.uint32
    return np.uint64


class TimestampTable:
    """
    Sparse cell -> timestamp map laid out as a three-level lookup table

    Cell ids past the primary table's reach are kept in an auxiliary map
    keyed by primary index, so every non-negative cell id is addressable.
    """

    def __init__(self, width: int = 32,
                 primary_size: int = DEFAULT_PRIMARY_SIZE,
                 secondary_size: int = DEFAULT_SECONDARY_SIZE,
                 chunk_size: int = DEFAULT_CHUNK_SIZE,
                 tagged: bool = False):
        self.width = width
        self.limit = 1 << width
        self.dtype = timestamp_dtype(width)
        self.primary_size = primary_size
        self.secondary_size = secondary_size
        self.chunk_size = chunk_size
        self.tagged = tagged

        _bits(primary_size, "primary_size")
        self._chunk_bits = _bits(chunk_size, "chunk_size")
        self._secondary_bits = _bits(secondary_size, "secondary_size")
        self._chunk_mask = chunk_size - 1
        self._secondary_mask = secondary_size - 1
        self._primary_shift = self._chunk_bits + self._secondary_bits

        self._primary: List[Optional[list]] = [None] * primary_size
        self._aux: Dict[int, list] = {}
        # chunk key -> memoryview of the leaf (and of its tags)
        self._views: Dict[int, memoryview] = {}
        self._tag_views: Dict[int, memoryview] = {}
        self.allocated_chunks = 0

    def geometry(self) -> Tuple[int, int, int]:
        return (self.primary_size, self.secondary_size, self.chunk_size)

    # ------------------------------------------------------------------------
    # Chunk lookup
    # ------------------------------------------------------------------------

    def _secondary(self, p: int, create: bool) -> Optional[list]:
        if p < self.primary_size:
            secondary = self._primary[p]
            if secondary is None and create:
                secondary = self._primary[p] = [None] * self.secondary_size
        else:
            secondary = self._aux.get(p)
            if secondary is None and create:
                secondary = self._aux[p] = [None] * self.secondary_size
        return secondary

    def chunk(self, key: int) -> Optional[np.ndarray]:
        """Leaf chunk with chunk key `key` (= cell >> chunk bits), if allocated"""
        secondary = self._secondary(key >> self._secondary_bits, create=False)
        if secondary is None:
            return None
        return secondary[key & self._secondary_mask]

    def _leaf(self, cell: int, create: bool) -> Optional[np.ndarray]:
        key = cell >> self._chunk_bits
        secondary = self._secondary(key >> self._secondary_bits, create)
        if secondary is None:
            return None
        leaf = secondary[key & self._secondary_mask]
        if leaf is None and create:
            leaf = secondary[key & self._secondary_mask] = np.zeros(self.chunk_size, dtype=self.dtype)
            self._views[key] = memoryview(leaf)
            if self.tagged:
                self._tag_views[key] = memoryview(np.full(self.chunk_size, NO_WRITER, dtype=np.int64))
            self.allocated_chunks += 1
        return leaf

    # ------------------------------------------------------------------------
    # Cell access
    # ------------------------------------------------------------------------

    def get(self, cell: int) -> int:
        """Stored timestamp, or 0 for a never-written cell"""
        view = self._views.get(cell >> self._chunk_bits)
        if view is None:
            return 0
        return view[cell & self._chunk_mask]

    def set(self, cell: int, timestamp: int) -> None:
        """
        Store a timestamp, allocating the chunk path on demand

        Raises:
            CounterWidthExceeded: timestamp needs more than `width` bits
        """
        if timestamp >= self.limit or timestamp < 0:
            raise CounterWidthExceeded(timestamp, self.width)
        key = cell >> self._chunk_bits
        view = self._views.get(key)
        if view is None:
            self._leaf(cell, create=True)
            view = self._views[key]
        view[cell & self._chunk_mask] = timestamp

    def get_tag(self, cell: int) -> int:
        tags = self._tag_views.get(cell >> self._chunk_bits)
        if tags is None:
            return NO_WRITER
        return tags[cell & self._chunk_mask]

    def set_tagged(self, cell: int, timestamp: int, tag: int) -> None:
        self.set(cell, timestamp)
        self._tag_views[cell >> self._chunk_bits][cell & self._chunk_mask] = tag

    def get_tagged(self, cell: int) -> Tuple[int, int]:
        """(timestamp, tag); (0, NO_WRITER) for a never-written cell"""
        key = cell >> self._chunk_bits
        view = self._views.get(key)
        if view is None:
            return 0, NO_WRITER
        offset = cell & self._chunk_mask
        return view[offset], self._tag_views[key][offset]

    # ------------------------------------------------------------------------
    # Iteration
    # ------------------------------------------------------------------------

    def iter_chunks(self) -> Iterator[Tuple[int, np.ndarray]]:
        """Yield (chunk key, leaf array) for every allocated chunk, in cell order"""
        tables = [(p, self._primary[p]) for p in range(self.primary_size)]
        tables += sorted(self._aux.items())
        for p, secondary in tables:
            if secondary is None:
                continue
            for s, leaf in enumerate(secondary):
                if leaf is not None:
                    yield (p << self._secondary_bits) | s, leaf

    def iterate_nonzero(self) -> Iterator[Tuple[int, int]]:
        """Yield (cell, timestamp) for each cell holding a nonzero timestamp"""
        for key, leaf in self.iter_chunks():
            base = key << self._chunk_bits
            for offset in np.flatnonzero(leaf):
                yield base + int(offset), int(leaf[offset])

    @property
    def memory_bytes(self) -> int:
        leaf_bytes = self.chunk_size * np.dtype(self.dtype).itemsize
        if self.tagged:
            leaf_bytes += self.chunk_size * 8
        return self.allocated_chunks * leaf_bytes


class GlobalShadow:
    """Global write timestamps wts[cell] plus the last writer of each cell"""

    def __init__(self, width: int = 32,
                 primary_size: int = DEFAULT_PRIMARY_SIZE,
                 secondary_size: int = DEFAULT_SECONDARY_SIZE,
                 chunk_size: int = DEFAULT_CHUNK_SIZE):
        self.wts = TimestampTable(width, primary_size, secondary_size, chunk_size, tagged=True)

    def get(self, cell: int) -> int:
        return self.wts.get(cell)

    def writer(self, cell: int) -> Optional[int]:
        """Thread id or KERNEL_WRITER of the latest write, None if never written"""
        if self.wts.get(cell) == 0:
            return None
        return self.wts.get_tag(cell)

    def record_write(self, cell: int, timestamp: int, writer: int) -> None:
        self.wts.set_tagged(cell, timestamp, writer)
