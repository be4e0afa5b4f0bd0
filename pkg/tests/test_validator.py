import pytest

from ebbflow.chain_store import GENESIS, Block, BlockTree, is_prefix
from ebbflow.messages import GENESIS_CHECKPOINT, AckMsg, ProposeTob, VoteMsg
from ebbflow.simnet import SimConfig, run
from ebbflow.validator import (
    Phase,
    ProtocolParams,
    RoundClock,
    Status,
    Validator,
    Variant,
    activation_round,
    observer_finalize,
    voting_round,
)
from helpers import G, chain, cp, link


def make(variant=Variant.TOB_3SF, n=4, vid=0, tree=None, **kw):
    tree = tree if tree is not None else BlockTree()
    return Validator(vid, ProtocolParams(n=n, variant=variant, **kw), tree, lambda t: vid)


def test_clock_phases():
    phases = [RoundClock(r, 2).phase for r in range(8)]
    assert phases == [Phase.PROPOSE, Phase.OTHER, Phase.VOTE, Phase.OTHER,
                      Phase.FASTCONFIRM, Phase.OTHER, Phase.MERGE, Phase.OTHER]
    assert RoundClock(9, 2).slot == 1
    assert voting_round(3, 1) == 13


def test_activation_window():
    # Waking at voting(t-1)+Δ still makes the vote of slot t; one round later does not.
    for delta in (1, 2):
        t = 3
        edge = voting_round(t - 1, delta) + delta
        assert activation_round(edge, delta) == voting_round(t, delta)
        assert activation_round(edge + 1, delta) == voting_round(t + 1, delta)


def test_wake_is_a_no_op_when_active():
    v = make()
    v.on_wake(7)
    assert v.status is Status.ACTIVE and v.is_active(0)


def test_joining_validator_stays_silent_until_activation():
    v = make()
    v.on_sleep()
    v.on_wake(3)
    assert v.status is Status.JOINING and v.activation == 9
    assert v.step(5, []) == []
    assert not v.is_active(5)
    assert v.step(v.activation, []) != []
    assert v.status is Status.ACTIVE


def test_non_phase_round_does_nothing():
    v = make(delta=2)
    before = (v.chainava, v.chainfin, v.view.content())
    assert v.step(1, []) == []
    assert (v.chainava, v.chainfin, v.view.content()) == before


@pytest.mark.parametrize("variant", list(Variant))
def test_first_proposal_extends_genesis_with_pool(variant):
    v = make(variant)
    block, prop = v.phase_propose(0, ["tx1", "tx2"])
    assert isinstance(block, Block) and block.parent == G and block.slot == 0
    assert block.body == {"tx1", "tx2"}
    assert prop.chain_p == block.id and prop.slot == 0


def test_vote_without_proposal_falls_back_to_fork_choice():
    v = make(Variant.TOB)
    vote = v.phase_vote(0)
    assert vote.chain == G and vote.slot == 0 and vote.ffg is None


def test_forged_certificate_is_ignored():
    tree = BlockTree()
    c, = chain(tree, G, 0)
    p, = chain(tree, c, 1)
    v = make(Variant.TOB, tree=tree)
    forged = ProposeTob(p, c, frozenset({VoteMsg(c, None, 0, 1)}), GENESIS_CHECKPOINT, 1, 0)
    assert not v.proposal_valid(forged, 1)
    v.receive(tree.blocks[c], 5)
    v.receive(tree.blocks[p], 5)
    v.receive(forged, 5)
    assert v.chain_frozen == G
    honest = ProposeTob(p, c, frozenset(VoteMsg(c, None, 0, s) for s in range(3)), GENESIS_CHECKPOINT, 1, 0)
    v.receive(honest, 5)
    assert v.chain_frozen == c


def test_rlmd_3sf_proposal_builds_on_the_justified_branch():
    tree = BlockTree()
    j, = chain(tree, G, 0, tag="j")
    h, = chain(tree, G, 1, tag="h")
    v = make(Variant.RLMD_3SF, n=3, tree=tree)
    for b in (j, h):
        v.receive(tree.blocks[b], 0)
    for s in (0, 1):
        v.receive(link(tree, (G, 0), (j, 1), s), 5)
    for s in range(3):
        v.receive(VoteMsg(h, None, 2, s), 9)
    block, _ = v.phase_propose(3, [])
    assert is_prefix(tree, j, block.id)


def test_observer_finalization_threshold():
    tree = BlockTree()
    c, = chain(tree, G, 0)
    v = make(n=3, tree=tree)
    v.receive(tree.blocks[c], 0)
    target = cp(tree, c, 1)
    assert observer_finalize([], v.view, 3) == set()
    acks = [AckMsg(target, 1, s) for s in (0, 1)]
    assert observer_finalize(acks, v.view, 3) == set()
    for s in (0, 1):
        v.receive(link(tree, (G, 0), (c, 1), s), 5)
    assert observer_finalize(acks, v.view, 3) == {target}
    assert observer_finalize(acks[:1], v.view, 3) == set()


@pytest.fixture(scope="module")
def honest_slot():
    return run(SimConfig(n=4, num_slots=4, variant=Variant.TOB_3SF, acks=True, txs=((0, "tx0"),)))


def test_full_honest_slot_sequence(honest_slot):
    trace = honest_slot
    p0 = trace.proposals[0]
    kinds = {}
    for s in trace.sends:
        if s.round < 4:
            kinds.setdefault(s.round, []).append(type(s.msg).__name__)
    assert sorted(kinds[0]) == ["Block", "ProposeTob"]
    assert kinds[1] == ["VoteMsg"] * 4
    votes = [s.msg for s in trace.sends if s.round == 1]
    assert {v.chain for v in votes} == {p0.chain}
    assert all(trace.available(vid, 2) == p0.chain for vid in range(4))
    assert trace.tree.blocks[trace.proposals[1].chain].parent == p0.chain


def test_acks_only_when_justified_in_the_same_slot(honest_slot):
    acks = [s.msg for s in honest_slot.sends if isinstance(s.msg, AckMsg)]
    assert acks
    assert all(a.checkpoint.c == a.slot for a in acks)
    assert all(s.round % 4 == 2 for s in honest_slot.sends if isinstance(s.msg, AckMsg))
