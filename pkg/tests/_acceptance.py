"""Collects one pass/fail line per acceptance criterion for the terminal summary."""

from __future__ import annotations

from contextlib import contextmanager

LINES: list[str] = []


class Criterion:
    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title
        self.details: list[str] = []

    def note(self, text: str) -> None:
        self.details.append(text)


@contextmanager
def criterion(number: int, title: str):
    c = Criterion(number, title)
    try:
        yield c
    except BaseException as exc:
        first = str(exc).strip().splitlines()[0] if str(exc).strip() else type(exc).__name__
        c.note(f"failure: {first[:200]}")
        _emit(c, False)
        raise
    _emit(c, True)


def _emit(c: Criterion, ok: bool) -> None:
    line = f"criterion {c.number} [{'PASS' if ok else 'FAIL'}] {c.title}"
    if c.details:
        line += " | " + "; ".join(c.details)
    LINES.append(line)
    print(line)
