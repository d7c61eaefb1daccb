"""Property checkers over traces and live worlds.

Every checker is a pure function of its input and returns ``PropertyReport``
records.  A horizon-bounded "eventually" property that could still be met
after the trace ends is reported as inconclusive, never as violated.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional

from . import brb
from .node import BrbNode, Node, value_round
from .params import SENTINEL, Params
from .trace import Event, TraceView

HOLDS = "holds"
VIOLATED = "violated"
INCONCLUSIVE = "inconclusive"


@dataclass
class PropertyReport:
    name: str
    verdict: str = HOLDS
    witness: list[int] = field(default_factory=list)
    detail: str = ""

    def violate(self, detail: str, *witness: int) -> None:
        if self.verdict != VIOLATED:
            self.verdict = VIOLATED
            self.detail = detail
            self.witness = sorted(set(witness))

    def unsure(self, detail: str, *witness: int) -> None:
        if self.verdict == HOLDS:
            self.verdict = INCONCLUSIVE
            self.detail = detail
            self.witness = sorted(set(witness))

    def line(self) -> str:
        w = ";".join(map(str, self.witness))
        return f"{self.name}|{self.verdict}|{w}"


def suspend(reports: Iterable[PropertyReport], witness: int) -> list[PropertyReport]:
    """Downgrade every verdict to inconclusive; used when the trace has no legal suffix."""
    out = list(reports)
    for r in out:
        r.verdict = INCONCLUSIVE
        r.detail = "no legal suffix after the corruption"
        r.witness = [witness]
    return out


def any_violated(reports: Iterable[PropertyReport]) -> bool:
    return any(r.verdict == VIOLATED for r in reports)


def format_reports(reports: list[PropertyReport]) -> str:
    lines = [r.line() for r in reports]
    c = Counter(r.verdict for r in reports)
    lines.append(f"summary|holds={c[HOLDS]},violated={c[VIOLATED]},inconclusive={c[INCONCLUSIVE]}")
    return "\n".join(lines) + "\n"


# --- broadcast task --------------------------------------------------------

def check_brb(trace: TraceView, params: Optional[Params] = None, cut: Optional[int] = None) -> list[PropertyReport]:
    p = params or trace.params
    start = trace.cut if cut is None else cut
    correct = set(trace.correct)
    validity = PropertyReport("brb-validity")
    integrity = PropertyReport("brb-integrity")
    nodup = PropertyReport("brb-no-duplicity")
    comp1 = PropertyReport("brb-completion-1")
    comp2 = PropertyReport("brb-completion-2")

    epoch_of: dict[tuple, tuple[int, str, int]] = {}  # (k, inst, round) -> (epoch, value, event)
    next_epoch: Counter = Counter()
    byz_seen: Counter = Counter()
    broadcasts: dict[tuple, tuple[str, int]] = {}  # key -> (value, event index)
    closed: set[tuple] = set()
    exempt: set[tuple] = set()
    deliveries: dict[tuple, dict[int, tuple[str, int]]] = defaultdict(dict)

    # a closed fixpoint at the end turns every open slot into a final verdict
    frozen = any(e.node == "-" and e.name == "fixpoint" for e in trace.events)
    for e in trace.events:
        if e.node == "-":
            continue
        if e.name == "broadcast":
            # broadcasts before the cut still count as sources for validity,
            # but their completion is not required
            k, inst, r = e.int("k"), e.int("inst"), e.int("round")
            if (k, inst) in next_epoch:
                prev = (k, inst, next_epoch[(k, inst)] - 1)
                closed.add(prev)
            ep = next_epoch[(k, inst)]
            next_epoch[(k, inst)] += 1
            epoch_of[(k, inst, r)] = (ep, e.kv["value"], e.index)
            if e.index > start:
                broadcasts[(k, inst, ep)] = (e.kv["value"], e.index)
            else:
                exempt.add((k, inst, ep))
        elif e.index <= start:
            continue
        elif e.name == "deliver":
            i = e.nid
            if i not in correct:
                continue
            k, inst, r, v = e.int("k"), e.int("inst"), e.int("round"), e.kv["value"]
            if k in correct:
                got = epoch_of.get((k, inst, r))
                if got is None:
                    validity.violate(f"node {i} delivered {v} from {k} with no broadcast", e.index)
                    continue
                ep, bv, bidx = got
                if bv != v:
                    validity.violate(f"node {i} delivered {v} from {k}, broadcast was {bv}", bidx, e.index)
                key = (k, inst, ep)
            else:
                occ = byz_seen[(i, k, inst, r)]
                byz_seen[(i, k, inst, r)] += 1
                key = (k, inst, ("byz", r, occ) if r != SENTINEL else ("byz", r, 0))
            seen = deliveries[key]
            if i in seen:
                integrity.violate(f"node {i} delivered twice for {key}", seen[i][1], e.index)
                continue
            seen[i] = (v, e.index)

    for key, seen in sorted(deliveries.items(), key=lambda kv: str(kv[0])):
        vals = {v for v, _ in seen.values()}
        if len(vals) > 1:
            nodup.violate(f"different values for {key}: {sorted(vals)}", *(ix for _, ix in seen.values()))
        missing = correct - set(seen)
        if missing and key not in exempt:
            witness = [ix for _, ix in seen.values()]
            if key in closed or frozen:
                comp2.violate(f"nodes {sorted(missing)} never delivered {key}", *witness)
            else:
                comp2.unsure(f"nodes {sorted(missing)} had not delivered {key} at horizon", *witness)
    for key, (v, bidx) in sorted(broadcasts.items()):
        if key[0] not in correct:
            continue
        missing = correct - set(deliveries.get(key, {}))
        if missing:
            if key in closed or frozen:
                comp1.violate(f"nodes {sorted(missing)} never delivered {key}", bidx)
            else:
                comp1.unsure(f"nodes {sorted(missing)} had not delivered {key} at horizon", bidx)
    return [validity, integrity, nodup, comp1, comp2]


# --- round counter ---------------------------------------------------------

def check_irc(trace: TraceView, params: Optional[Params] = None, cut: Optional[int] = None) -> list[PropertyReport]:
    p = params or trace.params
    start = trace.cut if cut is None else cut
    correct = set(trace.correct)
    b = p.big_b
    validity = PropertyReport("irc-validity")
    integ1 = PropertyReport("irc-integrity-1")
    integ2 = PropertyReport("irc-integrity-2")
    preempt = PropertyReport("irc-preemption")
    completion = PropertyReport("irc-completion")

    incs: dict[tuple, list[Event]] = defaultdict(list)
    latest_inc: dict[tuple, Event] = {}
    fetches: dict[tuple, list[tuple[Event, Optional[Event]]]] = defaultdict(list)
    enabled: dict[tuple, list[int]] = defaultdict(list)
    for e in trace.events:
        if e.node == "-" or e.nid not in correct:
            continue
        if e.name == "increment":
            key = (e.nid, e.int("inst"))
            latest_inc[(key, e.int("round"))] = e
            if e.index > start:
                incs[key].append(e)
        elif e.name == "enabled" and e.index > start:
            enabled[(e.nid, e.int("inst"))].append(e.index)
        elif e.name == "fetch" and e.index > start:
            k = e.int("k")
            if k not in correct:
                continue
            inst, r = e.int("inst"), e.int("round")
            src = latest_inc.get(((k, inst), r))
            if src is None:
                validity.violate(f"node {e.node} fetched {r} from {k} never incremented", e.index)
            fetches[(e.nid, k, inst)].append((e, src))

    for key, fl in sorted(fetches.items()):
        for (f1, s1), (f2, s2) in zip(fl, fl[1:]):
            r1, r2 = f1.int("round"), f2.int("round")
            if r2 != (r1 + 1) % b:
                integ1.violate(f"node {key[0]} fetched {r1} then {r2} from {key[1]}", f1.index, f2.index)
            if s1 is not None and s2 is not None and not s1.index < s2.index:
                integ2.violate(f"node {key[0]} fetch order differs from increment order", f1.index, f2.index)

    fetch_idx: dict[tuple, list[tuple[int, int]]] = {
        key: [(f.index, f.int("round")) for f, _ in fl] for key, fl in fetches.items()
    }
    for (k, inst), il in sorted(incs.items()):
        for a, nx in zip(il, il[1:]):
            r = a.int("round")
            for j in sorted(correct):
                ok = any(a.index < ix < nx.index and rr == r for ix, rr in fetch_idx.get((j, k, inst), ()))
                if not ok:
                    preempt.violate(f"{k} advanced past {r} before node {j} fetched it", a.index, nx.index)
        last = il[-1]
        if not any(ix > last.index for ix in enabled.get((k, inst), ())):
            completion.unsure(f"node {k} instance {inst}: round {last.int('round')} open at horizon", last.index)
    return [validity, integ1, integ2, preempt, completion]


# --- muteness detector ------------------------------------------------------

def check_muteness(trace: TraceView, params: Optional[Params] = None, cut: Optional[int] = None) -> list[PropertyReport]:
    start = trace.cut if cut is None else cut
    correct = set(trace.correct)
    complete = PropertyReport("mute-completeness")
    accuracy = PropertyReport("mute-accuracy")
    mute = trace.strategy in ("mute-after", "crash-at")
    muted = set(trace.byz) if mute else set()
    at = trace.adversary_at

    per: dict[tuple, list[Event]] = defaultdict(list)
    for e in trace.events:
        if e.node == "-" or e.nid not in correct:
            continue
        if e.name in ("suspect", "trust", "increment"):
            per[(e.nid, e.int("inst"))].append(e)
        if e.name == "suspect" and e.index > start and e.int("peer") in correct:
            accuracy.violate(f"node {e.node} suspected correct node {e.kv['peer']}", e.index)

    checked = 0
    for (i, inst), evs in sorted(per.items()):
        bounds = [e for e in evs if e.name == "increment"]
        for m in sorted(muted):
            for x, b0 in enumerate(bounds):
                if b0.step < at:
                    continue
                end = bounds[x + 1] if x + 1 < len(bounds) else None
                inside = [e for e in evs if e.index > b0.index and (end is None or e.index < end.index)
                          and e.name in ("suspect", "trust") and e.int("peer") == m]
                sus = [e for e in inside if e.name == "suspect"]
                checked += 1
                if not sus:
                    if end is None:
                        complete.unsure(f"node {i}: {m} not yet suspected in open round", b0.index)
                    else:
                        complete.violate(f"node {i}: {m} trusted for a whole round", b0.index, end.index)
                    continue
                back = [e for e in inside if e.name == "trust" and e.index > sus[0].index]
                if back:
                    complete.violate(f"node {i}: {m} trusted again within the round", sus[0].index, back[0].index)
    if muted and not checked:
        complete.unsure("no round started after the muteness onset")
    return [complete, accuracy]


# --- FIFO extension ---------------------------------------------------------

def check_fifo(trace: TraceView, params: Optional[Params] = None) -> list[PropertyReport]:
    p = params or trace.params
    correct = set(trace.correct)
    rep = PropertyReport("fifo-order")
    expect: dict[tuple, int] = defaultdict(int)
    for e in trace.named("fifo"):
        if e.nid not in correct:
            continue
        key = (e.nid, e.int("k"))
        lab = e.int("label")
        if lab != expect[key]:
            rep.violate(f"node {e.node} returned label {lab} from {key[1]}, expected {expect[key]}", e.index)
        expect[key] = (lab + 1) % p.delta
    return [rep]


# --- state consistency ------------------------------------------------------

def _views(nd: Any) -> list[tuple[brb.BrbState, Optional[int], Optional[int]]]:
    if isinstance(nd, BrbNode):
        return [(nd.brb, None, None)]
    if isinstance(nd, Node):
        return [(obj, a, k) for a, inst in enumerate(nd.instances) for k, obj in enumerate(inst.objs)]
    return []


def check_consistency(world: Any, params: Optional[Params] = None) -> dict[int, bool]:
    """Per correct node: brb.i on the rows of correct nodes, brb.ii on its own row, and
    no in-flight message from a correct node conflicts with the receiver's view of
    its sender (brb.iii).

    Rows of Byzantine nodes are left out of brb.i: they may hold conflicting pairs
    between two local steps of the receiver, which scrubs them itself.  For the
    same reason brb.ii is only checked when every node is correct: a ready that
    leaned on a Byzantine row loses support once that row is scrubbed, and the
    owner repairs it at its next step.
    """
    p = params or world.params
    out = {}
    rows = world.correct
    strict = len(world.correct) == world.n
    for i in world.correct:
        out[i] = all(brb.is_consistent(st, p, rows, strict) for st, _, _ in _views(world.nodes[i]))
    for src in world.correct:
        for dst in world.correct:
            if src == dst:
                continue
            rcv = world.nodes[dst]
            for msg, _ in world.channel(src, dst):
                if _conflicts(rcv, src, msg):
                    out[dst] = False
                    break
    return out


def correct_fixpoint(world: Any, params: Optional[Params] = None) -> bool:
    """True when the correct single-object nodes can make no further progress on their own.

    Every correct node takes one local step, then merges the current payload of
    every other correct node and the in-flight messages from correct nodes, and
    steps again.  If no state changes and no new delivery becomes possible, an
    adversary that falls silent from now on keeps the system here forever, so a
    delivery still missing is missing for good.
    """
    p = params or world.params
    nodes = [world.nodes[i] for i in world.correct]
    if not all(isinstance(nd, BrbNode) for nd in nodes):
        return False
    first = {}
    payload = {}
    for i in world.correct:
        st = world.nodes[i].brb.copy()
        payload[i] = brb.local_step(st, p)
        first[i] = st
    for i in world.correct:
        st = first[i].copy()
        for j in world.correct:
            if j == i:
                continue
            brb.merge_incoming(st, j, payload[j], p)
            for msg, _ in world.channel(j, i):
                brb.merge_incoming(st, j, msg.brb, p)
        brb.local_step(st, p)
        if st.entries != first[i].entries:
            return False
        done = world.nodes[i].last_delivered
        for k in range(p.n):
            m = brb.brb_deliver(st.copy(), k, True, p)
            if m is not None and m != done[k]:
                return False
    return True


def _conflicts(rcv: Any, src: int, msg: Any) -> bool:
    for kind in ("echo", "ready"):
        pairs = getattr(msg.brb, kind)
        if not pairs:
            continue
        if isinstance(rcv, BrbNode):
            if brb.has_conflict(pairs | getattr(rcv.brb.entries[src], kind)):
                return True
        elif isinstance(rcv, Node):
            if not 0 <= msg.instance < len(rcv.instances):
                continue
            inst = rcv.instances[msg.instance]
            by_k: dict[int, set] = defaultdict(set)
            for k, m in pairs:
                if 0 <= k < len(inst.objs):
                    by_k[k].add((k, m))
            for k, ps in by_k.items():
                if brb.has_conflict(ps | getattr(inst.objs[k].entries[src], kind)):
                    return True
    return False


# --- differential oracle ----------------------------------------------------

class ScheduleMismatch(ValueError):
    pass


def delivered_multisets(trace: TraceView) -> dict[int, Counter]:
    out: dict[int, Counter] = {i: Counter() for i in trace.correct}
    for e in trace.named("deliver"):
        if e.node != "-" and e.nid in out:
            out[e.nid][(e.int("k"), e.kv["value"])] += 1
    return out


def differential_oracle(trace_ss: TraceView, trace_bt: TraceView) -> Optional[str]:
    """None when every correct node delivered the same (broadcaster, value) multiset."""
    if (trace_ss.seed, trace_ss.params.n, trace_ss.params.t, sorted(trace_ss.correct)) != (
        trace_bt.seed, trace_bt.params.n, trace_bt.params.t, sorted(trace_bt.correct)
    ):
        raise ScheduleMismatch("traces come from different schedules")
    a = delivered_multisets(trace_ss)
    b = delivered_multisets(trace_bt)
    for i in sorted(a):
        if a[i] != b.get(i, Counter()):
            only_ss = sorted((a[i] - b[i]).elements())
            only_bt = sorted((b[i] - a[i]).elements())
            return f"node {i}: only self-stabilizing {only_ss}, only baseline {only_bt}"
    return None
