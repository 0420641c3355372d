"""Set partitions in order-of-appearance normal form.

A partition of {1, ..., n} is stored as a tuple of blocks, each block an
ascending tuple of 1-based indices, with blocks ordered by their least
element.  This is the normal form induced by reading a sequence left to
right and grouping equal values, so the k-th block collects the indices of
the k-th distinct value to appear.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

from .errors import DomainError

# Enumeration guard: the number of partitions is the Bell number, which is
# 4,213,597 at n=12 and grows too fast beyond that for exhaustive sweeps.
MAX_ENUMERATION_N = 12


@dataclass(frozen=True)
class PartitionState:
    """A partition of {1,...,n} in order-of-appearance normal form."""

    blocks: tuple[tuple[int, ...], ...]
    n: int

    @property
    def length(self) -> int:
        """Number of blocks."""
        return len(self.blocks)

    @classmethod
    def from_blocks(cls, blocks: Sequence[Sequence[int]], validate: bool = True) -> "PartitionState":
        blocks_t = tuple(tuple(int(i) for i in b) for b in blocks)
        n = sum(len(b) for b in blocks_t)
        p = cls(blocks_t, n)
        if validate:
            p.validate()
        return p

    def validate(self) -> None:
        """Raise DomainError unless this is a valid normal-form partition."""
        seen: set[int] = set()
        prev_least = 0
        for b in self.blocks:
            if not b:
                raise DomainError("empty block")
            if list(b) != sorted(b):
                raise DomainError(f"block {b} not sorted ascending")
            if b[0] <= prev_least:
                raise DomainError("blocks not ordered by least element")
            prev_least = b[0]
            for i in b:
                if i in seen:
                    raise DomainError(f"index {i} appears twice")
                seen.add(i)
        if seen != set(range(1, self.n + 1)):
            raise DomainError(f"blocks do not cover 1..{self.n}")

    def block_of(self, i: int) -> int:
        """1-based index of the block containing observation i."""
        for k, b in enumerate(self.blocks, start=1):
            if i in b:
                return k
        raise DomainError(f"index {i} not in partition of size {self.n}")

    def block_sizes(self) -> tuple[int, ...]:
        return tuple(len(b) for b in self.blocks)

    def __str__(self) -> str:
        inner = ";".join("(" + ",".join(str(i) for i in b) + ")" for b in self.blocks)
        return f"[{inner}]"


def induced_partition(tags: Sequence) -> PartitionState:
    """Group 1-based indices of `tags` by exact value equality.

    Blocks appear in the order their value first occurs, so the result
    depends only on the equality pattern of the tags, not their values.
    """
    if len(tags) == 0:
        raise DomainError("cannot induce a partition from an empty tag list")
    block_of_value: dict = {}
    blocks: list[list[int]] = []
    for i, t in enumerate(tags, start=1):
        k = block_of_value.get(t)
        if k is None:
            block_of_value[t] = len(blocks)
            blocks.append([i])
        else:
            blocks[k].append(i)
    return PartitionState(tuple(tuple(b) for b in blocks), len(tags))


def augment_into_block(p: PartitionState, j: int) -> PartitionState:
    """Extend the partition by placing element n+1 into block j (1-based)."""
    if not 1 <= j <= p.length:
        raise DomainError(f"block index {j} out of range 1..{p.length}")
    blocks = list(p.blocks)
    blocks[j - 1] = blocks[j - 1] + (p.n + 1,)
    return PartitionState(tuple(blocks), p.n + 1)


def augment_new_block(p: PartitionState) -> PartitionState:
    """Extend the partition by a new singleton block {n+1}."""
    return PartitionState(p.blocks + ((p.n + 1,),), p.n + 1)


def enumerate_partitions(n: int) -> Iterator[PartitionState]:
    """Yield every partition of {1,...,n} exactly once, in normal form.

    Iterates over restricted growth strings: a[0]=0 and
    a[i] <= max(a[0..i-1]) + 1, which are in bijection with normal-form
    partitions.
    """
    if not 1 <= n <= MAX_ENUMERATION_N:
        raise DomainError(f"n={n} outside supported range 1..{MAX_ENUMERATION_N}")
    a = [0] * n
    b = [1] * n  # b[i] = 1 + max(a[0..i-1]); a[i] may range over 0..b[i]
    while True:
        L = max(a) + 1
        blocks: list[list[int]] = [[] for _ in range(L)]
        for i, k in enumerate(a, start=1):
            blocks[k].append(i)
        yield PartitionState(tuple(tuple(blk) for blk in blocks), n)
        i = n - 1
        while i > 0 and a[i] == b[i]:
            i -= 1
        if i == 0:
            return
        a[i] += 1
        nb = max(b[i], a[i] + 1)
        for j in range(i + 1, n):
            a[j] = 0
            b[j] = nb
