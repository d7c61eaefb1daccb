from hypothesis import given, strategies as st

from ssbrb import scenario
from ssbrb.brb import BrbEntry
from ssbrb.irc import IrcWire
from ssbrb.node import EMPTY, Node, WireMessage, decode, encode, tag_value, untag, value_round
from ssbrb.params import SENTINEL, Params
from ssbrb.scenario import parse_scenario, run_seed

P = Params()

values = st.binary(min_size=1, max_size=8)
pairs = st.sets(st.tuples(st.integers(0, 6), values), max_size=4)
wires = st.builds(
    WireMessage,
    st.integers(0, 5),
    st.builds(BrbEntry, st.sets(values, max_size=2), pairs, pairs),
    st.builds(IrcWire, st.booleans(), st.integers(-1, 31), st.integers(0, 32)),
)


def same(a, b):
    return (a.instance, a.brb.init, a.brb.echo, a.brb.ready, a.irc) == (b.instance, b.brb.init, b.brb.echo, b.brb.ready, b.irc)


@given(wires)
def test_encode_decode_roundtrip(w):
    data = encode(w)
    assert same(decode(data), w)
    assert encode(decode(data)) == data


def test_encoding_is_order_independent():
    a = WireMessage(0, BrbEntry([b"x"], [(2, b"b"), (1, b"a")]), IrcWire(True, 3, 1))
    b = WireMessage(0, BrbEntry([b"x"], [(1, b"a"), (2, b"b")]), IrcWire(True, 3, 1))
    assert encode(a) == encode(b)


def test_decode_rejects_truncated_and_trailing():
    data = encode(WireMessage(1, BrbEntry([b"v"]), IrcWire(False, -1, 0)))
    for bad in (data[:-1], data + b"\0"):
        try:
            decode(bad)
        except ValueError:
            continue
        raise AssertionError("accepted a malformed message")


def test_round_tag_helpers():
    m = tag_value(7, b"abc")
    assert value_round(m) == 7 and untag(m) == b"abc"
    assert value_round(b"x") == -2


def test_tick_sends_one_message_per_peer_and_instance():
    assert len(Node(0, Params(delta=1)).tick()) == 3
    out = Node(0, Params(delta=2)).tick()
    assert len(out) == 6
    assert sorted({w.instance for _, w in out}) == [0, 1]
    assert all(j != 0 for j, _ in out)


def test_repeated_broadcast_uses_free_instances_then_queues():
    nd = Node(0, P)
    assert nd.repeated_broadcast(b"a") == 0
    assert nd.repeated_broadcast(b"b") == 1
    assert nd.repeated_broadcast(b"c") is None
    assert list(nd.pending) == [b"c"]
    inst = nd.instances[0]
    assert inst.own_pending and inst.irc.cur[0] == 0
    assert inst.objs[0].entries[0].init == {tag_value(0, b"a")}


def test_queued_value_starts_only_after_round_completes():
    nd = Node(0, Params(delta=1))
    nd.repeated_broadcast(b"a")
    nd.repeated_broadcast(b"b")
    nd.tick()
    assert list(nd.pending) == [b"b"]  # own value not delivered, no round trips yet


def test_request_gets_a_reply_and_recycles_on_new_round():
    nd = Node(0, P)
    req = WireMessage(0, BrbEntry([tag_value(0, b"v")]), IrcWire(True, 0, 0))
    j, reply = nd.on_message(1, req)
    assert j == 1 and reply.instance == 0
    assert reply.irc == IrcWire(False, SENTINEL, 0)
    assert reply.brb.is_empty()
    inst = nd.instances[0]
    assert inst.irc.cur[1] == 0
    # the payload is merged before the counter sees the new round
    assert not inst.objs[1].entries[1].init
    nd.on_message(1, req)
    assert inst.objs[1].entries[1].init == {tag_value(0, b"v")}


def test_value_tagged_with_other_round_is_not_merged():
    nd = Node(0, P)
    nd.on_message(1, WireMessage(0, EMPTY, IrcWire(True, 4, 0)))
    nd.on_message(1, WireMessage(0, BrbEntry([tag_value(3, b"old")]), IrcWire(True, 4, 0)))
    assert not nd.instances[0].objs[1].entries[1].init


def test_out_of_range_instance_is_rejected():
    nd = Node(0, P)
    assert nd.on_message(1, WireMessage(9, EMPTY, IrcWire(True, 0, 0))) is None
    assert nd.rejected == 1


def test_self_test_recycles_wrongly_tagged_object():
    nd = Node(0, P)
    inst = nd.instances[0]
    inst.irc.cur[2] = 5
    inst.objs[2].entries[3].echo = {(2, tag_value(9, b"z"))}
    inst.objs[2].was_delivered[2] = True
    inst.mark_all_dirty()
    nd.tick()
    assert not inst.objs[2].entries[3].echo
    assert not inst.objs[2].was_delivered[2]


def deliverable(nd, a, k, r, v):
    inst = nd.instances[a]
    inst.irc.cur[k] = r
    m = tag_value(r, v)
    obj = inst.objs[k]
    obj.entries[k].init = {m}
    for j in range(nd.params.n):
        obj.entries[j].echo = {(k, m)}
        obj.entries[j].ready = {(k, m)}
    inst.touch(k)


def test_fifo_poll_drains_in_label_order():
    nd = Node(0, Params(delta=3), fifo=True)
    deliverable(nd, 1, 2, 0, b"second")
    assert nd.fifo_poll(2) == []  # label 0 not ready, label 1 must wait
    deliverable(nd, 0, 2, 0, b"first")
    assert nd.fifo_poll(2) == [(0, b"first"), (1, b"second")]
    assert nd.fifo_next[2] == 2


def test_fifo_assigns_instances_round_robin():
    nd = Node(0, Params(delta=3), fifo=True)
    assert nd.repeated_broadcast(b"a") == 0
    assert nd.repeated_broadcast(b"b") == 1


class NoShortcuts(Node):
    """Steps and polls every object on every tick."""

    def tick(self):
        for inst in self.instances:
            inst.mark_all_dirty()
        return super().tick()


def test_skipping_clean_objects_does_not_change_the_trace(monkeypatch):
    sc = parse_scenario("run.mode = integrated\nworkload.rounds = 3\nnetwork.p_loss = 0.2\n")
    fast = run_seed(sc, 5).trace
    monkeypatch.setattr(scenario, "Node", NoShortcuts)
    slow = run_seed(sc, 5).trace
    assert fast == slow
    assert any("|deliver|" in ln for ln in fast)


def test_integrated_run_delivers_everything():
    sc = parse_scenario("run.mode = integrated\nworkload.rounds = 3\n")
    res = run_seed(sc, 1)
    assert not res.violated
    assert "stopped=1" in res.trace[-1]
    delivers = [ln for ln in res.trace if "|deliver|" in ln]
    assert len(delivers) == 4 * 4 * 3 * P.delta


def test_corrupting_one_instance_leaves_the_others_intact():
    from ssbrb.trace import parse_trace

    sc = parse_scenario("run.mode = integrated\nparams.delta = 3\nworkload.rounds = 6\n"
                        "run.horizon = 150000\ntransient.at = 2000\ntransient.instances = 0\n")
    res = run_seed(sc, 0)
    view = parse_trace(res.trace)
    correct = view.correct
    for a in (1, 2):
        sent = {(e.int("k"), e.int("round"), e.kv["value"]) for e in view.named("broadcast") if e.int("inst") == a}
        got = [(e.nid, e.int("k"), e.int("round"), e.kv["value"]) for e in view.named("deliver") if e.int("inst") == a]
        assert sorted(got) == sorted((i, *b) for i in correct for b in sent)
