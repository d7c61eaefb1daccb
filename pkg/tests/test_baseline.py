from collections import Counter

from ssbrb.baseline import Arrival, Broadcast, BtState, Echo, Init, NdState, Ready, bt_handle, nd_handle
from ssbrb.params import Params
from ssbrb.simnet import BaselineWorld

P4 = Params()


def test_nd_broadcast_emits_init():
    out, d = nd_handle(NdState(0, P4), Broadcast(b"v"))
    assert out == [Init(b"v")] and d is None


def test_nd_echoes_first_init_only():
    s = NdState(1, P4)
    assert nd_handle(s, Arrival(0, Init(b"a"))).outgoing == [Echo(0, b"a")]
    assert nd_handle(s, Arrival(0, Init(b"b"))).outgoing == []


def test_nd_delivers_on_three_distinct_echoes():
    s = NdState(0, P4)
    assert nd_handle(s, Arrival(1, Echo(2, b"m"))).delivery is None
    assert nd_handle(s, Arrival(1, Echo(2, b"m"))).delivery is None  # same sender again
    assert nd_handle(s, Arrival(3, Echo(2, b"m"))).delivery is None
    assert nd_handle(s, Arrival(0, Echo(2, b"m"))).delivery == (2, b"m")
    assert nd_handle(s, Arrival(2, Echo(2, b"m"))).delivery is None


def test_bt_two_readies_amplify_three_deliver():
    s = BtState(0, P4)
    assert bt_handle(s, Arrival(1, Ready(2, b"m"))) == ([], None)
    out, d = bt_handle(s, Arrival(3, Ready(2, b"m")))
    assert out == [Ready(2, b"m")] and d is None
    out, d = bt_handle(s, Arrival(2, Ready(2, b"m")))
    assert out == [] and d == (2, b"m")
    assert bt_handle(s, Arrival(0, Ready(2, b"m"))).delivery is None


def test_bt_ready_precedes_delivery_on_echo_path():
    s = BtState(0, P4)
    sent = []
    for j in (1, 2, 3):
        out, d = bt_handle(s, Arrival(j, Echo(1, b"m")))
        sent += out
        assert d is None
    assert sent == [Ready(1, b"m")]
    got = [bt_handle(s, Arrival(j, Ready(1, b"m"))).delivery for j in (0, 1, 2)]
    assert got == [None, None, (1, b"m")]
    assert s.sent_ready == {(1, b"m")}


def test_bt_world_fault_free_everyone_delivers_everything():
    p = Params(n=7, t=2)
    w = BaselineWorld(p, 5, bt_handle, lambda i: BtState(i, p))
    for i in (0, 3, 6):
        w.broadcast(i, bytes([i]) * 3)
    w.run(10 ** 6)
    for st in w.states:
        assert st.delivered == {0: b"\0\0\0", 3: b"\3\3\3", 6: b"\6\6\6"}
    assert Counter(x.split("|")[2] for x in w.trace) == Counter(broadcast=3, deliver=21)


def test_nd_no_conflicting_delivery_over_all_interleavings():
    """n=4, node 3 equivocates: init a to node 0, init b to nodes 1 and 2,
    and echoes both values to everyone.  Every order and every subset of
    arrivals is explored; no two correct nodes may deliver different values."""
    correct = (0, 1, 2)
    byz = [(3, 0, Init(b"a")), (3, 1, Init(b"b")), (3, 2, Init(b"b"))]
    byz += [(3, d, Echo(3, v)) for v in (b"a", b"b") for d in correct]

    def fresh():
        return {i: NdState(i, P4) for i in correct}

    def clone(states):
        out = {}
        for i, s in states.items():
            c = NdState(i, P4, set(s.init_seen), {k: set(v) for k, v in s.echoed.items()}, dict(s.delivered))
            out[i] = c
        return out

    seen: set[frozenset] = set()
    outcomes: set[tuple] = set()

    def dfs(states, pending, done):
        if done in seen:
            return
        seen.add(done)
        vals = {v for s in states.values() for k, v in s.delivered.items() if k == 3}
        assert len(vals) <= 1, vals
        outcomes.add(tuple(sorted(vals)))
        for m in pending:
            src, dst, msg = m
            nxt = clone(states)
            out, _ = nd_handle(nxt[dst], Arrival(src, msg))
            more = {(dst, d, o) for o in out for d in correct}
            dfs(nxt, (pending - {m}) | more, done | {m})

    dfs(fresh(), frozenset(byz), frozenset())
    assert len(seen) > 1000
    # delivery of b is reachable, delivery of a never is
    assert outcomes == {(), (b"b",)}
