"""Set-index and page-color arithmetic for physically-indexed caches.

A physical address decomposes into |tag|set index|line offset|.  Page
coloring exploits the set-index bits above the page offset: the OS controls
them through frame allocation, so pages can be steered into disjoint cache
partitions.  Colors usable for L2 partitioning exclude bits that also index
the L1, otherwise an L2 partition would constrain L1 placement too.
"""

from dataclasses import dataclass


def _is_pow2(n):
    return n > 0 and (n & (n - 1)) == 0


def _log2(n, what):
    if not _is_pow2(n):
        raise ValueError(f"{what} must be a power of two, got {n}")
    return n.bit_length() - 1


@dataclass(frozen=True)
class CacheGeometry:
    """total_bytes of capacity split into `ways` ways of `line_bytes` lines."""

    total_bytes: int
    ways: int
    line_bytes: int

    def __post_init__(self):
        _log2(self.total_bytes, "total_bytes")
        _log2(self.ways, "ways")
        _log2(self.line_bytes, "line_bytes")
        if self.total_bytes < self.ways * self.line_bytes:
            raise ValueError("cache smaller than one line per way")

    @property
    def sets(self):
        return self.total_bytes // (self.ways * self.line_bytes)


def set_index_bits(geom):
    """Inclusive (lo, hi) physical address bit range of the set index.

    lo = log2(line size); hi = lo + log2(sets) - 1.  A cache with a single
    set (fully associative, or direct-mapped with one line) has no index
    bits, returned as the empty range (lo, lo - 1).
    """
    lo = _log2(geom.line_bytes, "line_bytes")
    n_set_bits = _log2(geom.sets, "sets")
    return (lo, lo + n_set_bits - 1)


def color_bits(geom, page_bytes=4096):
    """Set-index bits the OS controls via page placement (bits >= log2(page))."""
    page_shift = _log2(page_bytes, "page_bytes")
    lo, hi = set_index_bits(geom)
    return [b for b in range(lo, hi + 1) if b >= page_shift]


def usable_colors(l2, l1, page_bytes=4096):
    """Color bits usable for L2 partitioning without constraining L1 placement.

    Returns (bits, count): the L2 color bits minus any that also color the
    L1, and 2**len(bits).
    """
    l2_bits = color_bits(l2, page_bytes)
    l1_bits = set(color_bits(l1, page_bytes))
    bits = [b for b in l2_bits if b not in l1_bits]
    return bits, 1 << len(bits)


def color_of(pfn, bits, page_bytes=4096):
    """Color of a physical page frame: its address bits at `bits`, packed LSB-first."""
    page_shift = _log2(page_bytes, "page_bytes")
    addr = pfn << page_shift
    color = 0
    for i, b in enumerate(sorted(bits)):
        color |= ((addr >> b) & 1) << i
    return color


def color_table(bits, page_bytes=4096, pfn_count=None):
    """Colors of consecutive PFNs over one full cycle (or pfn_count pages)."""
    if pfn_count is None:
        period = 1
        if bits:
            page_shift = _log2(page_bytes, "page_bytes")
            period = 1 << (max(bits) - page_shift + 1)
        pfn_count = period
    return [color_of(pfn, bits, page_bytes) for pfn in range(pfn_count)]
