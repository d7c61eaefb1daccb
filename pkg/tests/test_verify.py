import pytest

from ssbrb import brb, verify
from ssbrb.brb import BrbEntry
from ssbrb.irc import IrcWire
from ssbrb.node import BrbNode, WireMessage
from ssbrb.params import Params
from ssbrb.scenario import parse_scenario, run_checks, run_seed
from ssbrb.simnet import World
from ssbrb.trace import TraceError, header_lines, parse_trace

P = Params()


def forge(records, byz=(), mode="single-brb-async", strategy="", at=0):
    correct = [i for i in range(P.n) if i not in byz]
    lines = header_lines(mode, P, 0, correct, list(byz), strategy, at)
    return parse_trace(lines + [f"{s}|{rest}" for s, rest in enumerate(records, 1)])


def verdicts(reports):
    return {r.name: r.verdict for r in reports}


def by_name(reports, name):
    return next(r for r in reports if r.name == name)


def test_two_values_for_one_slot_violate_no_duplicity():
    tv = forge(["0|deliver|k=3,inst=0,round=-1,value=aa",
                "1|deliver|k=3,inst=0,round=-1,value=bb"], byz=[3])
    rep = by_name(verify.check_brb(tv), "brb-no-duplicity")
    assert rep.verdict == verify.VIOLATED
    assert rep.witness == [2, 3]


def test_delivery_without_broadcast_violates_validity():
    tv = forge(["0|deliver|k=1,inst=0,round=-1,value=aa"])
    assert verdicts(verify.check_brb(tv))["brb-validity"] == verify.VIOLATED


def test_double_delivery_violates_integrity():
    tv = forge(["1|broadcast|k=1,inst=0,round=-1,value=aa",
                "0|deliver|k=1,inst=0,round=-1,value=aa",
                "0|deliver|k=1,inst=0,round=-1,value=aa"])
    assert verdicts(verify.check_brb(tv))["brb-integrity"] == verify.VIOLATED


def test_missing_delivery_is_inconclusive_unless_stuck():
    recs = ["1|broadcast|k=1,inst=0,round=-1,value=aa"] + \
        [f"{i}|deliver|k=1,inst=0,round=-1,value=aa" for i in (0, 1, 2)]
    v = verdicts(verify.check_brb(forge(recs)))
    assert v["brb-completion-1"] == verify.INCONCLUSIVE
    assert v["brb-completion-2"] == verify.INCONCLUSIVE
    assert v["brb-validity"] == v["brb-no-duplicity"] == verify.HOLDS
    v = verdicts(verify.check_brb(forge(recs + ["-|fixpoint|"])))
    assert v["brb-completion-1"] == verify.VIOLATED


def test_events_before_the_cut_are_ignored():
    tv = forge(["0|deliver|k=1,inst=0,round=-1,value=aa", "-|corrupt|nodes=0,seed=1"])
    assert tv.cut == 3
    assert verdicts(verify.check_brb(tv))["brb-validity"] == verify.HOLDS


def test_unsettled_corruption_downgrades_everything():
    tv = forge(["-|corrupt|nodes=0,seed=1", "0|deliver|k=1,inst=0,round=-1,value=aa"])
    assert tv.unsettled
    reps = run_checks(tv, ("brb",))
    assert {r.verdict for r in reps} == {verify.INCONCLUSIVE}
    assert by_name(reps, "stabilization").witness == [2]
    settled = forge(["-|corrupt|nodes=0,seed=1", "-|settled|round=50", "0|deliver|k=1,inst=0,round=-1,value=aa"])
    assert not settled.unsettled
    assert verdicts(run_checks(settled, ("brb",)))["brb-validity"] == verify.VIOLATED


def inc(node, r, inst=0):
    return f"{node}|increment|inst={inst},round={r}"


def fetch(node, k, r, inst=0):
    return f"{node}|fetch|k={k},inst={inst},round={r}"


def test_fetch_of_never_incremented_round_violates_irc_validity():
    tv = forge([inc(1, 0), fetch(0, 1, 5)], mode="integrated")
    assert verdicts(verify.check_irc(tv))["irc-validity"] == verify.VIOLATED


def test_increment_before_everyone_fetched_violates_preemption():
    recs = [inc(1, 0)] + [fetch(i, 1, 0) for i in (0, 1, 3)] + [inc(1, 1)]
    rep = by_name(verify.check_irc(forge(recs, mode="integrated")), "irc-preemption")
    assert rep.verdict == verify.VIOLATED
    assert rep.witness == [2, 6]
    recs = [inc(1, 0)] + [fetch(i, 1, 0) for i in range(4)] + [inc(1, 1)]
    assert verdicts(verify.check_irc(forge(recs, mode="integrated")))["irc-preemption"] == verify.HOLDS


def test_skipped_round_violates_integrity_1():
    recs = [inc(1, 0), fetch(0, 1, 0), inc(1, 1), inc(1, 2), fetch(0, 1, 2)]
    assert verdicts(verify.check_irc(forge(recs, mode="integrated")))["irc-integrity-1"] == verify.VIOLATED


def test_wraparound_successor_is_fine():
    recs = [inc(1, 31), fetch(0, 1, 31), inc(1, 0), fetch(0, 1, 0)]
    assert verdicts(verify.check_irc(forge(recs, mode="integrated")))["irc-integrity-1"] == verify.HOLDS


def test_open_round_leaves_irc_completion_inconclusive():
    v = verdicts(verify.check_irc(forge([inc(1, 0)], mode="integrated")))
    assert v["irc-completion"] == verify.INCONCLUSIVE
    v = verdicts(verify.check_irc(forge([inc(1, 0), "1|enabled|inst=0,round=0"], mode="integrated")))
    assert v["irc-completion"] == verify.HOLDS


def test_mute_node_unsuspected_mid_interval_is_inconclusive():
    tv = forge([inc(0, 0)], byz=[3], mode="integrated", strategy="mute-after")
    assert verdicts(verify.check_muteness(tv))["mute-completeness"] == verify.INCONCLUSIVE


def test_mute_node_trusted_for_a_whole_round_violates_completeness():
    tv = forge([inc(0, 0), inc(0, 1)], byz=[3], mode="integrated", strategy="mute-after")
    assert verdicts(verify.check_muteness(tv))["mute-completeness"] == verify.VIOLATED
    tv = forge([inc(0, 0), "0|suspect|inst=0,peer=3", inc(0, 1)], byz=[3], mode="integrated", strategy="mute-after")
    assert verdicts(verify.check_muteness(tv))["mute-completeness"] != verify.VIOLATED


def test_suspecting_a_correct_node_violates_accuracy():
    tv = forge(["0|suspect|inst=0,peer=2"], mode="integrated")
    assert verdicts(verify.check_muteness(tv))["mute-accuracy"] == verify.VIOLATED


def test_fifo_label_gap_is_a_violation():
    tv = forge(["0|fifo|k=1,label=0", "0|fifo|k=1,label=2"], mode="integrated")
    assert verdicts(verify.check_fifo(tv))["fifo-order"] == verify.VIOLATED


def test_checkers_are_pure():
    res = run_seed(parse_scenario("run.mode = integrated\nworkload.rounds = 2\n"), 2)
    tv = parse_trace(res.trace)
    snapshot = list(tv.events)
    a = [r.line() for r in run_checks(tv, ("brb", "irc", "muteness"))]
    b = [r.line() for r in run_checks(tv, ("brb", "irc", "muteness"))]
    assert a == b and tv.events == snapshot


def test_malformed_trace_is_a_hard_error():
    with pytest.raises(TraceError):
        parse_trace(["no header here"])
    with pytest.raises(TraceError):
        parse_trace(["1|-|end|"])


def brb_world():
    return World(P, [BrbNode(i, P) for i in range(P.n)], list(range(P.n)), 0)


def test_empty_world_is_consistent():
    assert all(verify.check_consistency(brb_world()).values())


def test_unjustified_ready_is_inconsistent_until_next_step():
    w = brb_world()
    w.nodes[0].brb.entries[0].ready.add((1, b"m"))
    assert verify.check_consistency(w)[0] is False
    brb.local_step(w.nodes[0].brb, P)
    assert verify.check_consistency(w)[0] is True


def test_conflicting_pairs_in_a_channel_break_channel_consistency():
    w = brb_world()
    w.nodes[1].brb.entries[0].echo.add((2, b"a"))
    w.send(0, 1, WireMessage(0, BrbEntry(echo=[(2, b"b")]), IrcWire(True, -1, 0)))
    assert verify.check_consistency(w)[1] is False
    w.deliver(0 * P.n + 1)
    assert not w.channel(0, 1)
    assert verify.check_consistency(w)[1] is False  # the row now holds both values
    brb.local_step(w.nodes[1].brb, P)
    assert verify.check_consistency(w)[1] is True


def test_differential_oracle():
    a = forge(["0|deliver|k=1,inst=0,round=-1,value=aa"])
    assert verify.differential_oracle(a, a) is None
    b = forge(["0|deliver|k=1,inst=0,round=-1,value=bb"])
    assert "node 0" in verify.differential_oracle(a, b)
    c = forge([], byz=[3])
    with pytest.raises(verify.ScheduleMismatch):
        verify.differential_oracle(a, c)
