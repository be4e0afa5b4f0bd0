"""Content-addressed block tree.

A chain is identified with its tip block, so every ``ChainRef`` in this
package is simply a block id (a hex digest).  All ancestry questions are
answered by walking parent links in a :class:`BlockTree`.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Iterator

ChainRef = str
"""A chain is named by the id of its tip block."""

GENESIS_SLOT = -1


class ChainStoreError(Exception):
    pass


class UnknownParent(ChainStoreError):
    pass


class UnknownBlock(ChainStoreError):
    pass


class SlotNotIncreasing(ChainStoreError):
    pass


class ChainTooLong(ChainStoreError):
    pass


def block_digest(parent: str | None, slot: int, body: Iterable[str]) -> str:
    """Canonical digest of ``(parent, slot, sorted body)``.

    The serialization is a plain text line so that the id of a block never
    depends on set iteration order or on the platform.
    """
    canon = "{}|{}|{}".format(parent or "", slot, ",".join(sorted(body)))
    return hashlib.sha256(canon.encode()).hexdigest()[:20]


@dataclass(frozen=True)
class Block:
    id: str
    parent: str | None
    slot: int
    body: frozenset[str] = frozenset()

    @classmethod
    def make(cls, parent: str | None, slot: int, body: Iterable[str] = ()) -> "Block":
        body = frozenset(body)
        return cls(block_digest(parent, slot, body), parent, slot, body)

    def __hash__(self) -> int:
        return hash(self.id)


GENESIS = Block.make(None, GENESIS_SLOT)


@dataclass
class BlockTree:
    """All blocks known to one simulation, indexed by id.

    ``children`` keeps child ids sorted so that iteration order is canonical.
    ``memo`` is scratch space for pure functions whose results only depend
    on content-addressed inputs (the FFG lattice is cached here).
    """

    blocks: dict[str, Block] = field(default_factory=dict)
    children: dict[str, list[str]] = field(default_factory=dict)
    memo: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.blocks:
            self.blocks[GENESIS.id] = GENESIS
            self.children[GENESIS.id] = []

    @property
    def genesis(self) -> str:
        return GENESIS.id

    def __contains__(self, block_id: object) -> bool:
        return block_id in self.blocks

    def __len__(self) -> int:
        return len(self.blocks)

    def get(self, block_id: str) -> Block:
        try:
            return self.blocks[block_id]
        except KeyError:
            raise UnknownBlock(block_id) from None

    def slot(self, block_id: str) -> int:
        return self.get(block_id).slot

    def ancestors(self, block_id: str) -> Iterator[Block]:
        """Yield the block itself and then every ancestor down to genesis."""
        b: Block | None = self.get(block_id)
        while b is not None:
            yield b
            b = self.blocks[b.parent] if b.parent is not None else None

    def copy(self) -> "BlockTree":
        return BlockTree(dict(self.blocks), {k: list(v) for k, v in self.children.items()})


def insert_block(tree: BlockTree, b: Block) -> ChainRef:
    if b.id in tree.blocks:
        return b.id
    if b.parent is None:
        # Only the genesis block may lack a parent, and it is pre-inserted.
        raise UnknownParent(f"block {b.id} has no parent")
    parent = tree.blocks.get(b.parent)
    if parent is None:
        raise UnknownParent(b.parent)
    if parent.slot >= b.slot:
        raise SlotNotIncreasing(f"parent slot {parent.slot} >= block slot {b.slot}")
    tree.blocks[b.id] = b
    tree.children[b.id] = []
    siblings = tree.children[b.parent]
    siblings.append(b.id)
    siblings.sort()
    return b.id


def ancestor_at(tree: BlockTree, c: ChainRef, max_slot: int) -> Block:
    """Deepest block on chain ``c`` whose slot is at most ``max_slot``."""
    for b in tree.ancestors(c):
        if b.slot <= max_slot:
            return b
    return GENESIS  # unreachable: genesis has slot -1


def is_prefix(tree: BlockTree, a: ChainRef, b: ChainRef) -> bool:
    """``a ⪯ b``: chain ``a`` is ``b`` or one of its ancestors."""
    if a == b:
        tree.get(a)
        return True
    slot_a = tree.slot(a)
    for blk in tree.ancestors(b):
        if blk.slot <= slot_a:
            return blk.id == a
    return False


def conflicts(tree: BlockTree, a: ChainRef, b: ChainRef) -> bool:
    return not is_prefix(tree, a, b) and not is_prefix(tree, b, a)


def common_prefix(tree: BlockTree, a: ChainRef, b: ChainRef) -> ChainRef:
    """The longest chain that is a prefix of both ``a`` and ``b``."""
    on_a = {blk.id for blk in tree.ancestors(a)}
    for blk in tree.ancestors(b):
        if blk.id in on_a:
            return blk.id
    return tree.genesis


def kappa_deep_prefix(tree: BlockTree, c: ChainRef, k: int, t: int) -> ChainRef:
    if k < 0:
        raise ValueError("k must be non-negative")
    return ancestor_at(tree, c, t - k).id


def chain_leq(tree: BlockTree, a: ChainRef, b: ChainRef) -> bool:
    return tree.slot(a) <= tree.slot(b)


def max_chain(tree: BlockTree, chains: Iterable[ChainRef]) -> ChainRef:
    """Maximum under the slot pre-order; equal slots resolve to the smallest id."""
    best: ChainRef | None = None
    best_key: tuple[int, str] | None = None
    for c in chains:
        key = (-tree.slot(c), c)
        if best_key is None or key < best_key:
            best, best_key = c, key
    if best is None:
        raise ValueError("max_chain of an empty set")
    return best


def chain_txs(tree: BlockTree, c: ChainRef) -> set[str]:
    txs: set[str] = set()
    for blk in tree.ancestors(c):
        txs |= blk.body
    return txs


def chain_contains_tx(tree: BlockTree, c: ChainRef, tx: str) -> bool:
    return any(tx in blk.body for blk in tree.ancestors(c))


def extend(tree: BlockTree, c: ChainRef, t: int, pool: Iterable[str]) -> Block:
    """Build the slot-``t`` child of ``c`` carrying every pool transaction not yet on ``c``.

    The block is returned, not inserted; callers decide when it becomes
    visible.
    """
    if tree.slot(c) >= t:
        raise ChainTooLong(f"chain tip slot {tree.slot(c)} is not below {t}")
    body = frozenset(pool) - chain_txs(tree, c)
    return Block.make(c, t, body)
