"""Small builders shared by the unit tests."""

from __future__ import annotations

from ebbflow.chain_store import GENESIS, Block, BlockTree, insert_block
from ebbflow.messages import Checkpoint, FfgVote, View, VoteMsg

G = GENESIS.id


def chain(tree: BlockTree, parent: str, *slots: int, tag: str = "") -> list[str]:
    """Append one block per slot on top of ``parent``; return the new ids."""
    ids = []
    for s in slots:
        blk = Block.make(parent, s, frozenset({f"{tag}{s}"}) if tag else frozenset())
        insert_block(tree, blk)
        ids.append(blk.id)
        parent = blk.id
    return ids


def cp(tree: BlockTree, block: str, c: int) -> Checkpoint:
    return Checkpoint(block, c, tree.slot(block))


def link(tree: BlockTree, src: tuple[str, int], tgt: tuple[str, int], sender: int, slot: int | None = None) -> VoteMsg:
    s, t = cp(tree, *src), cp(tree, *tgt)
    return VoteMsg(tgt[0], FfgVote(s, t, sender), t.c if slot is None else slot, sender)


def view_of(tree: BlockTree, msgs=()) -> View:
    v = View(tree)
    for b in tree.blocks.values():
        if b.parent is not None:
            v.insert(b)
    for m in msgs:
        v.insert(m)
    return v
