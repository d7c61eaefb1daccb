"""Protocol constants shared by every module."""

from __future__ import annotations

from dataclasses import dataclass, fields

NodeId = int
Value = bytes
SENTINEL = -1


@dataclass(frozen=True)
class Params:
    n: int = 4
    t: int = 1
    capacity: int = 2
    lam: int = 3
    big_b: int = 32
    theta: int = 12
    delta: int = 2
    max_value_len: int = 64

    @property
    def nodes(self) -> range:
        return range(self.n)

    def replace(self, **changes) -> Params:
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update(changes)
        return Params(**kw)


def validate(params: Params) -> list[str]:
    """Return the list of violated constraints; empty means the tuple is usable."""
    out = []
    p = params
    if p.n < 1:
        out.append("n >= 1")
    if p.t < 0:
        out.append("t >= 0")
    if 3 * p.t + 1 > p.n:
        out.append("3t+1 <= n")
    if p.capacity < 1:
        out.append("capacity >= 1")
    if not p.capacity < p.lam:
        out.append("capacity < lambda")
    if not 6 * p.lam < p.big_b:
        out.append("lambda < B/6")
    if p.theta < 1:
        out.append("theta >= 1")
    if p.delta < 1:
        out.append("delta >= 1")
    if p.max_value_len < 1:
        out.append("max_value_len >= 1")
    return out


def checked(params: Params) -> Params:
    bad = validate(params)
    if bad:
        raise ValueError("invalid parameters: " + ", ".join(bad))
    return params
