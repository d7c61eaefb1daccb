"""Byzantine node automata driven by the simulator.

Adversaries are omniscient: they may read any honest node's state through the
world reference.  They share the node interface (``tick``, ``on_message``,
``round_of``).
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Any, Optional

from .brb import BrbEntry
from .irc import IrcWire
from .node import EMPTY, BrbNode, Node, WireMessage, _noop, tag_value
from .params import SENTINEL, NodeId, Params

STRATEGIES = ("equivocate-init", "fake-ready", "speculative-ack", "mute-after", "crash-at", "byz-random")


@dataclass(frozen=True)
class AdversarySpec:
    corrupt: tuple[NodeId, ...] = ()
    strategy: str = "byz-random"
    at: int = 0
    value: bytes = b"fake"

    def validate(self, params: Params) -> list[str]:
        out = []
        if len(set(self.corrupt)) > params.t:
            out.append("|corrupt| <= t")
        if any(not 0 <= c < params.n for c in self.corrupt):
            out.append("corrupt ids in [0, n)")
        if self.strategy not in STRATEGIES:
            out.append(f"strategy in {STRATEGIES}")
        return out


class Adversary:
    def __init__(self, me: NodeId, params: Params, rng: random.Random):
        self.me = me
        self.params = params
        self.rng = rng
        self.emit: Any = _noop
        self.world: Any = None
        # instances the honest nodes run; the single-object mode has just one
        self.instances = params.delta

    def round_of(self, instance: int) -> int:
        return SENTINEL

    def on_message(self, j: NodeId, w: WireMessage) -> Optional[tuple[NodeId, WireMessage]]:
        return None

    def tick(self) -> list[tuple[NodeId, WireMessage]]:
        return []

    def peers(self) -> list[NodeId]:
        return [j for j in range(self.params.n) if j != self.me]


_DUMMY = IrcWire(True, SENTINEL, 0)


class Equivocator(Adversary):
    """Sends init m to one part of the receivers and m' to the rest.

    Echo and ready support for each value goes only to random subsets of its
    part, which is what lets a weakened quorum split the correct nodes.
    """

    def __init__(self, me: NodeId, params: Params, rng: random.Random):
        super().__init__(me, params, rng)
        peers = self.peers()
        rng.shuffle(peers)
        cut = rng.randint(1, max(1, len(peers) - 1))
        self.values = (b"eq-a" + bytes([rng.randrange(256)]), b"eq-b" + bytes([rng.randrange(256)]))
        self.side = {j: (0 if x < cut else 1) for x, j in enumerate(peers)}
        self.echo_to = {j for j in peers if rng.random() < 0.6}
        self.ready_to = {j for j in peers if rng.random() < 0.5}

    def tick(self) -> list[tuple[NodeId, WireMessage]]:
        out = []
        for j in self.peers():
            m = self.values[self.side[j]]
            pair = {(self.me, m)}
            e = BrbEntry({m}, pair if j in self.echo_to else (), pair if j in self.ready_to else ())
            out.append((j, WireMessage(0, e, _DUMMY)))
        return out


class FakeReady(Adversary):
    def __init__(self, me: NodeId, params: Params, rng: random.Random, value: bytes = b"fake"):
        super().__init__(me, params, rng)
        self.value = value

    def tick(self) -> list[tuple[NodeId, WireMessage]]:
        e = BrbEntry((), (), {(k, self.value) for k in range(self.params.n)})
        return [(j, WireMessage(a, e, _DUMMY)) for a in range(self.instances) for j in self.peers()]


class RandomByz(Adversary):
    """Seeded random well-formed messages, mixing real honest values with junk."""

    def _pool(self) -> list[bytes]:
        vals = [b"junk", b"junk2"]
        w = self.world
        if w is not None:
            for i in w.correct:
                nd = w.nodes[i]
                if isinstance(nd, BrbNode):
                    vals.extend(sorted(nd.brb.entries[i].init))
        return vals

    def tick(self) -> list[tuple[NodeId, WireMessage]]:
        rng = self.rng
        p = self.params
        pool = self._pool()
        out = []
        for j in self.peers():
            if rng.random() < 0.3:
                continue
            e = BrbEntry(
                {rng.choice(pool)} if rng.random() < 0.5 else (),
                {(rng.randrange(p.n), rng.choice(pool)) for _ in range(rng.randint(0, 3))},
                {(rng.randrange(p.n), rng.choice(pool)) for _ in range(rng.randint(0, 3))},
            )
            wire = IrcWire(rng.random() < 0.5, rng.randrange(-1, p.big_b), rng.randint(0, p.big_b))
            out.append((j, WireMessage(rng.randrange(self.instances), e, wire)))
        return out


class RandomIntegratedByz(RandomByz):
    """Random messages for the integrated node: tagged values, random counters."""

    def _pool(self) -> list[bytes]:
        rng = self.rng
        vals = [tag_value(rng.randrange(self.params.big_b), b"junk")]
        w = self.world
        if w is not None:
            for i in w.correct:
                nd = w.nodes[i]
                if isinstance(nd, Node):
                    for inst in nd.instances:
                        vals.extend(sorted(inst.objs[i].entries[i].init))
        return vals


class Wrapped(Adversary):
    """Runs an honest inner node, then deviates from step ``at`` on."""

    def __init__(self, me: NodeId, params: Params, rng: random.Random, inner: Any, at: int, mode: str):
        self.inner = inner
        super().__init__(me, params, rng)
        self.at = at
        self.mode = mode
        self.announced = False
        self.frozen: list[int] = []

    @property
    def emit(self) -> Any:
        return self._emit

    @emit.setter
    def emit(self, f: Any) -> None:
        self._emit = f
        self.inner.emit = f

    def active(self) -> bool:
        return self.world is None or self.world.clock < self.at

    def round_of(self, instance: int) -> int:
        return self.inner.round_of(instance)

    def _announce(self) -> None:
        if not self.announced:
            self.announced = True
            self.frozen = [self.inner.round_of(a) for a in range(self.instances)]
            self.emit("mute" if self.mode == "mute-after" else "crash")

    def tick(self) -> list[tuple[NodeId, WireMessage]]:
        if self.active():
            return self.inner.tick()
        self._announce()
        if self.mode == "crash-at":
            return []
        return [(j, WireMessage(a, EMPTY, IrcWire(True, self.frozen[a], 0)))
                for a in range(self.instances) for j in self.peers()]

    def on_message(self, j: NodeId, w: WireMessage) -> Optional[tuple[NodeId, WireMessage]]:
        if self.active():
            return self.inner.on_message(j, w)
        self._announce()
        return None


class SpeculativeAcker(Wrapped):
    """Honest node that additionally acknowledges every peer's current round unasked."""

    def __init__(self, me: NodeId, params: Params, rng: random.Random, inner: Any, burst: int = 3):
        super().__init__(me, params, rng, inner, at=1 << 62, mode="speculative-ack")
        self.burst = burst

    def tick(self) -> list[tuple[NodeId, WireMessage]]:
        out = self.inner.tick()
        w = self.world
        if w is None:
            return out
        for j in self.peers():
            target = w.nodes[j]
            if not isinstance(target, Node):
                continue
            for a, inst in enumerate(target.instances):
                st = inst.irc
                for x in range(self.burst):
                    out.append((j, WireMessage(a, EMPTY, IrcWire(False, st.cur[j], st.lbl[self.me] + x))))
        return out


def make_adversary(spec: AdversarySpec, me: NodeId, params: Params, rng: random.Random, mode: str,
                   honest_factory: Any) -> Adversary:
    adv = _make(spec, me, params, rng, mode, honest_factory)
    if mode != "integrated":
        adv.instances = 1
    return adv


def _make(spec: AdversarySpec, me: NodeId, params: Params, rng: random.Random, mode: str,
          honest_factory: Any) -> Adversary:
    s = spec.strategy
    if s == "equivocate-init":
        return Equivocator(me, params, rng)
    if s == "fake-ready":
        return FakeReady(me, params, rng, spec.value)
    if s == "byz-random":
        return RandomIntegratedByz(me, params, rng) if mode == "integrated" else RandomByz(me, params, rng)
    inner = honest_factory(me)
    if s == "speculative-ack":
        return SpeculativeAcker(me, params, rng, inner)
    return Wrapped(me, params, rng, inner, spec.at, s)
