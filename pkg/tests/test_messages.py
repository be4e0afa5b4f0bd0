import itertools

from hypothesis import given, settings, strategies as st

from ebbflow.chain_store import Block, BlockTree
from ebbflow.messages import (
    GENESIS_CHECKPOINT,
    AckMsg,
    Checkpoint,
    FfgVote,
    ProposeRlmd,
    View,
    VoteMsg,
    checkpoint_leq,
    checkpoint_lt,
    equivocators,
    ffg_vote_valid,
    max_checkpoint,
    quorum_cert_valid,
    supermajority,
    view_insert,
)
from helpers import G, chain, cp, view_of


def test_supermajority_rounds_up():
    assert [supermajority(n) for n in (1, 2, 3, 4, 6, 9, 10, 12)] == [1, 2, 2, 3, 4, 6, 7, 8]


def test_ffg_vote_validity():
    tree = BlockTree()
    b0, = chain(tree, G, 0)
    a, = chain(tree, G, 1, tag="a")
    b, = chain(tree, G, 2, tag="b")
    assert ffg_vote_valid(FfgVote(GENESIS_CHECKPOINT, cp(tree, b0, 1), 0), tree)
    assert not ffg_vote_valid(FfgVote(cp(tree, b, 2), cp(tree, b, 2), 0), tree)
    assert not ffg_vote_valid(FfgVote(cp(tree, a, 1), cp(tree, b, 2), 0), tree)
    # A checkpoint whose cached proposal slot disagrees with the block is malformed.
    lying = Checkpoint(b0, 1, 3)
    assert not ffg_vote_valid(FfgVote(GENESIS_CHECKPOINT, lying, 0), tree)


def test_checkpoint_order_is_lexicographic():
    tree = BlockTree()
    a0, = chain(tree, G, 0, tag="a")
    b1, = chain(tree, G, 1, tag="b")
    assert checkpoint_leq(cp(tree, a0, 1), cp(tree, b1, 2))
    assert checkpoint_leq(cp(tree, a0, 2), cp(tree, b1, 2))
    assert not checkpoint_leq(cp(tree, a0, 3), cp(tree, b1, 2))
    assert checkpoint_lt(cp(tree, a0, 2), cp(tree, b1, 2))
    assert not checkpoint_lt(cp(tree, b1, 2), cp(tree, b1, 2))
    assert max_checkpoint([GENESIS_CHECKPOINT, cp(tree, a0, 2), cp(tree, b1, 2)]) == cp(tree, b1, 2)


def test_equivocators():
    tree = BlockTree()
    a, = chain(tree, G, 0, tag="a")
    b, = chain(tree, G, 1, tag="b")
    assert equivocators(View(tree)) == set()
    assert equivocators([VoteMsg(a, None, 3, 1), VoteMsg(b, None, 3, 1)]) == {1}
    assert equivocators([VoteMsg(a, None, 3, 1), VoteMsg(a, None, 4, 1)]) == set()
    v = view_of(tree, [VoteMsg(a, None, 3, 1), VoteMsg(b, None, 3, 1)])
    assert equivocators(v) == {1}


def test_quorum_certificates():
    tree = BlockTree()
    c, = chain(tree, G, 2)
    c1, c2 = chain(tree, c, 3, tag="x")[0], chain(tree, c, 3, tag="y")[0]
    cert = [VoteMsg(c1, None, 4, 0), VoteMsg(c2, None, 4, 1)]
    assert quorum_cert_valid(cert, c, 4, 3, tree)
    assert quorum_cert_valid([], G, 4, 3, tree)
    assert not quorum_cert_valid([], c, 4, 3, tree)
    assert quorum_cert_valid([], c, 4, 3, tree, empty_fallback=c)
    assert not quorum_cert_valid([VoteMsg(c1, None, 4, 0), VoteMsg(c, None, 4, 0)], c, 4, 3, tree)
    assert not quorum_cert_valid(cert, c1, 4, 3, tree)
    assert not quorum_cert_valid(cert, c, 5, 3, tree)


def test_rlmd_proposal_carries_its_view():
    tree = BlockTree()
    a, = chain(tree, G, 0)
    sender_view = view_of(tree, [VoteMsg(a, None, 0, 2), VoteMsg(a, None, 0, 3)])
    prop = ProposeRlmd(a, sender_view.snapshot(), 1, 2)
    receiver = View(tree)
    view_insert(receiver, prop)
    assert prop in receiver and a in receiver.blocks
    assert receiver.votes == sender_view.votes


def test_reinsert_is_a_no_op():
    tree = BlockTree()
    a, = chain(tree, G, 0)
    v = view_of(tree)
    vote = VoteMsg(a, None, 0, 1)
    assert v.insert(vote)
    before = v.content()
    assert not v.insert(vote)
    assert v.content() == before


def test_vote_before_block_is_buffered():
    tree = BlockTree()
    blk = Block.make(G, 0, {"late"})
    vote = VoteMsg(blk.id, None, 0, 1)
    v = View(tree)
    assert not v.insert(vote)
    assert vote not in v and v.pending
    v.insert(blk)
    assert vote in v and not v.pending
    assert blk.id in v.blocks


def _universe():
    tree = BlockTree()
    blocks = [Block.make(G, 0, {"a"}), Block.make(G, 1, {"b"})]
    blocks.append(Block.make(blocks[0].id, 2, {"c"}))
    msgs = list(blocks)
    for b in blocks:
        for s in range(2):
            msgs.append(VoteMsg(b.id, FfgVote(GENESIS_CHECKPOINT, Checkpoint(b.id, 3, b.slot), s), 3, s))
    msgs.append(AckMsg(GENESIS_CHECKPOINT, 0, 1))
    return tree, msgs


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_view_insert_is_order_insensitive(data):
    tree, msgs = _universe()
    chosen = data.draw(st.lists(st.sampled_from(msgs), max_size=12))
    shuffled = data.draw(st.permutations(chosen))
    a, b = View(tree), View(BlockTree())
    for m in chosen:
        a.insert(m)
    for m in shuffled + shuffled:
        b.insert(m)
    assert a.content() == b.content()


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_equivocators_only_grow(data):
    tree, msgs = _universe()
    votes = [m for m in msgs if isinstance(m, VoteMsg)]
    small = data.draw(st.lists(st.sampled_from(votes), max_size=6))
    extra = data.draw(st.lists(st.sampled_from(votes), max_size=6))
    assert equivocators(small) <= equivocators(small + extra)


def test_checkpoint_order_is_total_with_genesis_least():
    tree = BlockTree()
    ids = chain(tree, G, 0, 1, 2)
    cps = [GENESIS_CHECKPOINT] + [cp(tree, b, c) for b in ids for c in range(3) if c >= tree.slot(b)]
    for x, y in itertools.product(cps, repeat=2):
        assert checkpoint_leq(x, y) or checkpoint_leq(y, x)
        assert checkpoint_leq(GENESIS_CHECKPOINT, x)
