"""Trace records: ``step|node|event|key=value,...``, one per line."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional

from .params import Params


class Event(NamedTuple):
    index: int
    step: int
    node: str
    name: str
    kv: dict[str, str]

    def int(self, key: str) -> int:
        return int(self.kv[key])

    @property
    def nid(self) -> int:
        return int(self.node)


class TraceError(ValueError):
    pass


def parse_line(index: int, line: str) -> Event:
    parts = line.rstrip("\n").split("|", 3)
    if len(parts) != 4:
        raise TraceError(f"record {index}: expected 4 fields, got {len(parts)}")
    step, node, name, rest = parts
    kv = {}
    if rest:
        for item in rest.split(","):
            if "=" not in item:
                raise TraceError(f"record {index}: bad field {item!r}")
            k, v = item.split("=", 1)
            kv[k] = v
    try:
        st = int(step)
    except ValueError:
        raise TraceError(f"record {index}: bad step {step!r}") from None
    return Event(index, st, node, name, kv)


def _ids(s: str) -> list[int]:
    return [int(x) for x in s.split(";") if x]


@dataclass
class TraceView:
    events: list[Event]
    mode: str = "single-brb-async"
    params: Params = field(default_factory=Params)
    seed: int = 0
    correct: list[int] = field(default_factory=list)
    byz: list[int] = field(default_factory=list)
    strategy: str = ""
    adversary_at: int = 0
    fifo: bool = False
    horizon: int = 0
    end_step: int = 0
    stopped: bool = False

    @property
    def cut(self) -> int:
        """Event index of the legal-suffix marker: the last recycle marker, else the last
        end of a settle window, else the last corruption marker, else -1.  Checkers
        look only at events after it."""
        rec = settled = cor = -1
        for e in self.events:
            if e.node == "-":
                if e.name == "recycle":
                    rec = e.index
                elif e.name == "settled":
                    settled = e.index
                elif e.name == "corrupt":
                    cor = e.index
        if rec >= 0:
            return rec
        return settled if settled > cor else cor

    @property
    def unsettled(self) -> bool:
        """True when the last corruption is not followed by a settle or recycle marker."""
        last = -1
        for e in self.events:
            if e.node == "-":
                if e.name == "corrupt":
                    last = e.index
                elif e.name in ("settled", "recycle") and last >= 0:
                    last = -1
        return last >= 0

    def named(self, *names: str) -> Iterable[Event]:
        ns = set(names)
        return (e for e in self.events if e.name in ns)


def parse_trace(lines: Iterable[str]) -> TraceView:
    events = [parse_line(i, ln) for i, ln in enumerate(x for x in lines if x.strip())]
    tv = TraceView(events)
    seen_header = False
    for e in events:
        if e.node != "-":
            continue
        if e.name == "header":
            seen_header = True
            kv = e.kv
            tv.mode = kv.get("mode", tv.mode)
            tv.params = Params(
                n=int(kv["n"]), t=int(kv["t"]), capacity=int(kv["capacity"]), lam=int(kv["lambda"]),
                big_b=int(kv["big_b"]), theta=int(kv["theta"]), delta=int(kv["delta"]),
            )
            tv.seed = int(kv.get("seed", 0))
            tv.fifo = kv.get("fifo", "0") == "1"
            tv.horizon = int(kv.get("horizon", 0))
        elif e.name == "nodes":
            tv.correct = _ids(e.kv.get("correct", ""))
            tv.byz = _ids(e.kv.get("byz", ""))
            tv.strategy = e.kv.get("strategy", "")
            tv.adversary_at = int(e.kv.get("at", 0))
        elif e.name == "end":
            tv.end_step = e.step
            tv.stopped = e.kv.get("stopped", "0") == "1"
    if not seen_header:
        raise TraceError("trace has no header record")
    if not tv.correct:
        tv.correct = [i for i in range(tv.params.n) if i not in tv.byz]
    return tv


def read_trace(path: str) -> TraceView:
    with open(path) as fh:
        return parse_trace(fh)


def header_lines(mode: str, params: Params, seed: int, correct: list[int], byz: list[int],
                 strategy: str = "", at: int = 0, fifo: bool = False, horizon: int = 0) -> list[str]:
    p = params
    h = (f"0|-|header|mode={mode},n={p.n},t={p.t},capacity={p.capacity},lambda={p.lam},"
         f"big_b={p.big_b},theta={p.theta},delta={p.delta},seed={seed},fifo={int(fifo)},horizon={horizon}")
    nodes = (f"0|-|nodes|correct={';'.join(map(str, correct))},byz={';'.join(map(str, byz))},"
             f"strategy={strategy},at={at}")
    return [h, nodes]


def first(events: Iterable[Event], pred) -> Optional[Event]:
    for e in events:
        if pred(e):
            return e
    return None
