"""Deliberately broken variants used to check that the checkers are not vacuous."""

from __future__ import annotations

import contextlib
from typing import Iterator

from . import brb, irc

MUTANTS = ("delivery-2t", "echo-quorum-minus-1", "no-label-reset")


@contextlib.contextmanager
def mutant(name: str | None) -> Iterator[None]:
    """Patch the named rule for the duration of the block (``None`` is a no-op)."""
    if name is None:
        yield
        return
    if name not in MUTANTS:
        raise ValueError(f"unknown mutant {name!r}; choose from {MUTANTS}")
    saved = (brb.delivery_quorum, brb.echo_quorum, irc.RESET_LABELS_ON_INCREMENT)
    try:
        if name == "delivery-2t":
            brb.delivery_quorum = lambda p: 2 * p.t
        elif name == "echo-quorum-minus-1":
            brb.echo_quorum = lambda p: (p.n + p.t) // 2
        else:
            irc.RESET_LABELS_ON_INCREMENT = False
        yield
    finally:
        brb.delivery_quorum, brb.echo_quorum, irc.RESET_LABELS_ON_INCREMENT = saved
