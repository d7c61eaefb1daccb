"""Deterministic discrete-event world with bounded lossy channels.

Each step either ticks a node (its do-forever iteration) or delivers one
in-flight message picked at random from a random non-empty channel.  All
randomness flows from one seeded generator, so a (config, seed) pair fully
determines the trace.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from . import brb, irc, muteness
from .brb import BrbEntry
from .irc import IrcWire
from .node import BrbNode, Node, WireMessage, tag_value
from .params import SENTINEL, NodeId, Params


@dataclass
class NetConfig:
    p_loss: float = 0.0
    p_dup: float = 0.0
    fairness_k: Optional[int] = None
    capacity: Optional[int] = None  # None: use params.capacity; 0: unbounded
    bml: bool = True
    theta_bound: bool = True
    trace_messages: bool = False


@dataclass
class CorruptionSpec:
    nodes: Optional[list[NodeId]] = None  # None: every correct node
    brb: bool = True
    irc: bool = True
    muteness: bool = True
    channels: bool = True
    instances: Optional[list[int]] = None
    pool: int = 3

    def is_empty(self) -> bool:
        return self.nodes == [] or not (self.brb or self.irc or self.muteness or self.channels)


def _kv(kv: dict[str, Any]) -> str:
    return ",".join(f"{k}={v}" for k, v in kv.items())


class World:
    def __init__(self, params: Params, nodes: list, correct: list[NodeId], seed: int,
                 net: Optional[NetConfig] = None):
        self.params = params
        self.n = params.n
        self.nodes = nodes
        self.correct = list(correct)
        self.correct_set = set(correct)
        self.net = net or NetConfig()
        self.rng = random.Random(seed)
        self.seed = seed
        self.clock = 0
        self.trace: list[str] = []
        n = self.n
        cap = self.net.capacity
        self.capacity = params.capacity if cap is None else cap
        self.channels: list[list[tuple[WireMessage, int]]] = [[] for _ in range(n * n)]
        self._nonempty: list[int] = []
        self._pos = [-1] * (n * n)
        self.fairness_k = self.net.fairness_k or 4 * n
        self.last_tick = [0] * n
        self.rounds = 0
        self._ticked: set[NodeId] = set()
        self.drops = 0
        self.losses = 0
        self.purged = 0
        self.held = 0
        # off from a corruption until the run settles: the bound is a property
        # of legal runs, and holding replies could pin a corrupted node
        self.theta_hold = self.net.theta_bound
        self.on_round: Optional[Callable[[World], None]] = None
        for i, nd in enumerate(nodes):
            nd.emit = self._emitter(i)

    # trace --------------------------------------------------------------
    def log(self, node: Any, event: str, **kv: Any) -> None:
        self.trace.append(f"{self.clock}|{node}|{event}|{_kv(kv)}")

    def _emitter(self, i: NodeId) -> Callable[..., None]:
        def emit(event: str, **kv: Any) -> None:
            self.trace.append(f"{self.clock}|{i}|{event}|{_kv(kv)}")
        return emit

    # channels -----------------------------------------------------------
    def channel(self, src: NodeId, dst: NodeId) -> list[tuple[WireMessage, int]]:
        return self.channels[src * self.n + dst]

    def _mark(self, idx: int) -> None:
        if self._pos[idx] < 0:
            self._pos[idx] = len(self._nonempty)
            self._nonempty.append(idx)

    def _unmark(self, idx: int) -> None:
        p = self._pos[idx]
        last = self._nonempty.pop()
        if last != idx:
            self._nonempty[p] = last
            self._pos[last] = p
        self._pos[idx] = -1

    @staticmethod
    def _take(ch: list, i: int) -> Any:
        item = ch[i]
        last = ch.pop()
        if i < len(ch):
            ch[i] = last
        return item

    def send(self, src: NodeId, dst: NodeId, msg: WireMessage) -> None:
        idx = src * self.n + dst
        ch = self.channels[idx]
        if self.capacity and len(ch) >= self.capacity:
            self._take(ch, self.rng.randrange(len(ch)))
            self.drops += 1
        origin = self.nodes[src].round_of(msg.instance) if src in self.correct_set else SENTINEL
        ch.append((msg, origin))
        if len(ch) == 1:
            self._mark(idx)
        if self.net.trace_messages:
            from .node import encode
            self.log(src, "send", to=dst, msg=encode(msg).hex())

    def in_flight(self) -> int:
        return sum(len(c) for c in self.channels)

    # BML ----------------------------------------------------------------
    def _purge_from(self, src: NodeId, instance: Optional[int] = None) -> int:
        p = self.params
        node = self.nodes[src]
        count = 0
        for dst in range(self.n):
            idx = src * self.n + dst
            ch = self.channels[idx]
            if not ch:
                continue
            keep = []
            for item in ch:
                msg, origin = item
                if instance is not None and msg.instance != instance:
                    keep.append(item)
                    continue
                cur = node.round_of(msg.instance)
                if irc.behind(1, origin, cur, p):
                    keep.append(item)
                else:
                    count += 1
            if len(keep) != len(ch):
                self.channels[idx] = keep
                if not keep:
                    self._unmark(idx)
        self.purged += count
        return count

    def enforce_bml(self) -> int:
        """Remove in-flight messages of correct senders older than lambda rounds."""
        return sum(self._purge_from(i) for i in self.correct)

    # steps --------------------------------------------------------------
    def tick(self, i: NodeId) -> None:
        nd = self.nodes[i]
        bml = self.net.bml and i in self.correct_set
        if bml:
            before = [nd.round_of(a) for a in range(self.params.delta)]
        for dst, msg in nd.tick():
            self.send(i, dst, msg)
        self.last_tick[i] = self.clock
        if bml:
            for a in range(self.params.delta):
                if nd.round_of(a) != before[a]:
                    self._purge_from(i, a)
        if i in self.correct_set:
            self._ticked.add(i)
            if len(self._ticked) == len(self.correct):
                self._ticked.clear()
                self.rounds += 1
                if self.on_round is not None:
                    self.on_round(self)

    def _brink(self, dst: NodeId, instance: int) -> set[NodeId]:
        """Correct peers that ``dst`` would suspect after one more round trip with someone else."""
        md_of = getattr(self.nodes[dst], "md_of", None)
        md = md_of(instance) if md_of is not None else None
        if md is None or md.trust_all:
            return set()
        p = self.params
        return {j for j in self.correct if j != dst
                and muteness.excess_sum(md.rt[j], dst, p.t) >= p.theta - 1}

    def _held(self, src: NodeId, dst: NodeId, msg: WireMessage) -> bool:
        if msg.irc.ack or dst not in self.correct_set:
            return False
        brink = self._brink(dst, msg.instance)
        return bool(brink) and src not in brink

    def deliver(self, idx: int) -> None:
        ch = self.channels[idx]
        rng = self.rng
        i = rng.randrange(len(ch)) if len(ch) > 1 else 0
        net = self.net
        src, dst = divmod(idx, self.n)
        if self.theta_hold and self._held(src, dst, ch[i][0]):
            free = [x for x in range(len(ch)) if not self._held(src, dst, ch[x][0])]
            if not free:
                self.held += 1
                return
            i = free[rng.randrange(len(free))] if len(free) > 1 else free[0]
        if net.p_loss and rng.random() < net.p_loss:
            self._take(ch, i)
            self.losses += 1
            if not ch:
                self._unmark(idx)
            return
        if net.p_dup and rng.random() < net.p_dup:
            msg = ch[i][0]
        else:
            msg = self._take(ch, i)[0]
            if not ch:
                self._unmark(idx)
        reply = self.nodes[dst].on_message(src, msg)
        if reply is not None:
            self.send(dst, reply[0], reply[1])

    def step(self) -> None:
        self.clock += 1
        n = self.n
        k = self.fairness_k
        clock = self.clock
        for i in range(n):
            if clock - self.last_tick[i] >= k:
                self.tick(i)
                return
        r = self.rng.randrange(n + len(self._nonempty))
        if r < n:
            self.tick(r)
        else:
            self.deliver(self._nonempty[r - n])

    def run(self, horizon: int, stop: Optional[Callable[[World], bool]] = None, every: int = 64) -> int:
        while self.clock < horizon:
            self.step()
            if stop is not None and self.clock % every == 0 and stop(self):
                break
        return self.clock

    # transient faults ---------------------------------------------------
    def inject_transient(self, spec: CorruptionSpec, seed: int) -> None:
        """Rewrite selected state of correct nodes and channels with random type-correct values."""
        if spec.is_empty():
            return
        self.theta_hold = False
        rng = random.Random(seed)
        p = self.params
        targets = self.correct if spec.nodes is None else [i for i in spec.nodes if i in self.correct_set]
        pool = [bytes(rng.randrange(256) for _ in range(rng.randint(1, 4))) for _ in range(spec.pool)]
        integrated = any(isinstance(self.nodes[i], Node) for i in targets)

        def val() -> bytes:
            v = rng.choice(pool)
            return tag_value(rng.randrange(p.big_b), v) if integrated else v

        def entry() -> BrbEntry:
            return BrbEntry(
                {val() for _ in range(rng.randint(0, 2))},
                {(rng.randrange(p.n), val()) for _ in range(rng.randint(0, 3))},
                {(rng.randrange(p.n), val()) for _ in range(rng.randint(0, 3))},
            )

        def rnd_round() -> int:
            return rng.randrange(-1, p.big_b)

        insts = spec.instances
        for i in targets:
            nd = self.nodes[i]
            if isinstance(nd, BrbNode):
                if spec.brb:
                    nd.brb.entries = [entry() for _ in range(p.n)]
                    nd.brb.was_delivered = [rng.random() < 0.5 for _ in range(p.n)]
                continue
            if not isinstance(nd, Node):
                continue
            for a, inst in enumerate(nd.instances):
                if insts is not None and a not in insts:
                    continue
                inst.mark_all_dirty()
                if spec.brb:
                    for obj in inst.objs:
                        obj.entries = [entry() for _ in range(p.n)]
                        obj.was_delivered = [rng.random() < 0.5 for _ in range(p.n)]
                if spec.irc:
                    inst.irc.cur = [rnd_round() for _ in range(p.n)]
                    inst.irc.nxt = [rnd_round() for _ in range(p.n)]
                    inst.irc.lbl = [rng.randint(0, p.big_b) for _ in range(p.n)]
                if spec.muteness:
                    inst.md.rt = [[0 if k == i or j == i else rng.randint(0, p.big_b) for j in range(p.n)]
                                  for k in range(p.n)]
        if spec.channels:
            tset = set(targets)
            for src in range(self.n):
                for dst in range(self.n):
                    if src == dst or not (src in tset or dst in tset):
                        continue
                    idx = src * self.n + dst
                    cap = self.capacity or 2
                    ch = []
                    for _ in range(rng.randint(0, cap)):
                        a = rng.randrange(p.delta) if insts is None else rng.choice(insts)
                        w = WireMessage(a, entry(), IrcWire(rng.random() < 0.5, rnd_round(), rng.randint(0, p.big_b)))
                        origin = self.nodes[src].round_of(a) if src in self.correct_set else SENTINEL
                        ch.append((w, origin))
                    if insts is not None:
                        ch = [it for it in self.channels[idx] if it[0].instance not in insts] + ch
                        ch = ch[-cap:] if self.capacity else ch
                    self.channels[idx] = ch
                    if ch:
                        self._mark(idx)
                    elif self._pos[idx] >= 0:
                        self._unmark(idx)
        self.log("-", "corrupt", nodes=";".join(map(str, targets)), seed=seed)

    def recycle_correct(self) -> None:
        """Bring single-object nodes to a post-recycle state w.r.t. every correct node.

        Stands in for the recycling mechanism: rows of correct nodes are
        cleared everywhere and their in-flight broadcast payloads dropped.
        """
        for i in self.correct:
            nd = self.nodes[i]
            for j in self.correct:
                brb.recycle(nd.brb, j)
            nd.forget_delivered()
        for src in self.correct:
            for dst in range(self.n):
                idx = src * self.n + dst
                ch = self.channels[idx]
                keep = [it for it in ch if it[0].brb.is_empty()]
                if len(keep) != len(ch):
                    self.channels[idx] = keep
                    if not keep:
                        self._unmark(idx)
        self.log("-", "recycle")


class BaselineWorld:
    """Reliable-channel world for the classic oracles: every message is delivered exactly once,
    in a random order drawn from the seeded generator."""

    def __init__(self, params: Params, seed: int, handler: Callable, state_factory: Callable):
        from .baseline import Arrival, Broadcast

        self._arrival = Arrival
        self._broadcast = Broadcast
        self.params = params
        self.n = params.n
        self.rng = random.Random(seed)
        self.handler = handler
        self.states = [state_factory(i) for i in range(params.n)]
        self.channels: list[list] = [[] for _ in range(params.n * params.n)]
        self._nonempty: list[int] = []
        self.clock = 0
        self.trace: list[str] = []

    def log(self, node: Any, event: str, **kv: Any) -> None:
        self.trace.append(f"{self.clock}|{node}|{event}|{_kv(kv)}")

    def _send_all(self, src: NodeId, msgs: list) -> None:
        for msg in msgs:
            for dst in range(self.n):
                idx = src * self.n + dst
                ch = self.channels[idx]
                if not ch:
                    self._nonempty.append(idx)
                ch.append(msg)

    def _apply(self, i: NodeId, event: Any) -> None:
        outgoing, delivery = self.handler(self.states[i], event)
        if delivery is not None:
            k, v = delivery
            self.log(i, "deliver", k=k, inst=0, round=SENTINEL, value=v.hex())
        self._send_all(i, outgoing)

    def broadcast(self, i: NodeId, v: bytes) -> None:
        self.log(i, "broadcast", k=i, inst=0, round=SENTINEL, value=v.hex())
        self._apply(i, self._broadcast(v))

    def step(self) -> bool:
        if not self._nonempty:
            return False
        self.clock += 1
        x = self.rng.randrange(len(self._nonempty))
        idx = self._nonempty[x]
        ch = self.channels[idx]
        msg = World._take(ch, self.rng.randrange(len(ch)) if len(ch) > 1 else 0)
        if not ch:
            last = self._nonempty.pop()
            if x < len(self._nonempty):
                self._nonempty[x] = last
        src, dst = divmod(idx, self.n)
        self._apply(dst, self._arrival(src, msg))
        return True

    def run(self, horizon: int) -> int:
        while self.clock < horizon and self.step():
            pass
        return self.clock
