"""Matmul FLOP instrumentation.

Every ``matmul`` reports ``2 * batch * m * p * n`` to the active counters under
the innermost scope label. Labels are slash-separated (``"interaction/ffn"``)
so totals can be taken per prefix.
"""

from __future__ import annotations

from collections import Counter
from contextlib import contextmanager
from typing import Iterator

_counters: list["FlopCounter"] = []
_scopes: list[str] = ["other"]


class FlopCounter:
    def __init__(self) -> None:
        self.counts: Counter[str] = Counter()

    def total(self, prefix: str = "") -> int:
        if not prefix:
            return sum(self.counts.values())
        return sum(v for k, v in self.counts.items() if k == prefix or k.startswith(prefix + "/"))

    def as_dict(self) -> dict[str, int]:
        return dict(sorted(self.counts.items()))


@contextmanager
def count_flops() -> Iterator[FlopCounter]:
    counter = FlopCounter()
    _counters.append(counter)
    try:
        yield counter
    finally:
        _counters.remove(counter)


@contextmanager
def flop_scope(label: str) -> Iterator[None]:
    _scopes.append(label)
    try:
        yield
    finally:
        _scopes.pop()


def record(flops: int) -> None:
    if not _counters:
        return
    label = _scopes[-1]
    for c in _counters:
        c.counts[label] += int(flops)
