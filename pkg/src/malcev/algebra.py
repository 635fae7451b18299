"""Finite algebras given by operation tables.

An algebra is a finite universe {0, ..., n-1} together with a list of
named operations, each stored as a flat lookup table in row-major order
with the leftmost argument most significant.  Everything here is
immutable and pure; the heavier machinery (closure, circuits) lives in
the sibling modules and only consumes these tables.

File format (UTF-8, line oriented, ``#`` comments)::

    algebra <name>
    size <n>
    op <name> <arity>
    <n^arity integers, whitespace separated, may span lines>
    op ...

Elements are 0-based both in files and in the API.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

Element = int


class ParseError(ValueError):
    """Raised when a text input does not conform to its file format."""


def _check_universe_size(arity: int, length: int) -> int:
    """Return n with n**arity == length, or raise."""
    if arity < 1:
        raise ValueError("nullary operations are not supported")
    n = round(length ** (1.0 / arity))
    for cand in (n - 1, n, n + 1):
        if cand >= 1 and cand**arity == length:
            return cand
    raise ValueError(f"table length {length} is not a perfect {arity}-th power")


@dataclass(frozen=True)
class OperationTable:
    """A single finitary operation as a flat row-major lookup table."""

    name: str
    arity: int
    table: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "table", tuple(self.table))
        n = _check_universe_size(self.arity, len(self.table))
        bad = [v for v in self.table if not (0 <= v < n)]
        if bad:
            raise ValueError(f"op {self.name}: table entry {bad[0]} out of range 0..{n - 1}")

    @property
    def universe_size(self) -> int:
        return _check_universe_size(self.arity, len(self.table))

    def value(self, args: Sequence[Element]) -> Element:
        """Look up the table entry for ``args`` (leftmost most significant)."""
        n = self.universe_size
        if len(args) != self.arity:
            raise ValueError(f"op {self.name} expects {self.arity} arguments, got {len(args)}")
        idx = 0
        for a in args:
            if not (0 <= a < n):
                raise ValueError(f"element {a} out of range 0..{n - 1}")
            idx = idx * n + a
        return self.table[idx]

    def is_idempotent(self) -> bool:
        n = self.universe_size
        return all(self.value((x,) * self.arity) == x for x in range(n))


@dataclass(frozen=True)
class Algebra:
    """A finite algebra: universe {0..size-1} plus an ordered list of operations.

    Idempotence is checked eagerly at construction and cached in the
    ``idempotent`` flag; operations whose correctness depends on it
    (see the maltsev module) consult the flag instead of rescanning.
    """

    name: str
    size: int
    operations: tuple[OperationTable, ...]
    idempotent: bool = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "operations", tuple(self.operations))
        if self.size < 1:
            raise ValueError("universe must be nonempty")
        if not self.operations:
            raise ValueError("an algebra needs at least one operation")
        for op in self.operations:
            if op.arity < 1:
                raise ValueError(f"op {op.name}: nullary operations are not supported")
            if len(op.table) != self.size**op.arity:
                raise ValueError(
                    f"op {op.name}: expected {self.size ** op.arity} entries, got {len(op.table)}"
                )
            if any(not (0 <= v < self.size) for v in op.table):
                raise ValueError(f"op {op.name}: table entry out of range 0..{self.size - 1}")
        object.__setattr__(self, "idempotent", all(op.is_idempotent() for op in self.operations))

    def op_index(self, name: str) -> int:
        for i, op in enumerate(self.operations):
            if op.name == name:
                return i
        raise KeyError(f"no operation named {name!r}")

    def apply(self, op: int, args: Sequence[Element]) -> Element:
        """Apply operation ``op`` (by index) to a tuple of elements."""
        return self.operations[op].value(args)

    def apply_pointwise(
        self, op: int, tuples: Sequence[Sequence[Element]]
    ) -> tuple[Element, ...]:
        """Apply operation ``op`` coordinatewise to equal-length tuples."""
        table = self.operations[op]
        if len(tuples) != table.arity:
            raise ValueError(f"op {table.name} expects {table.arity} tuples, got {len(tuples)}")
        if not tuples:
            raise ValueError("no argument tuples")
        d = len(tuples[0])
        if any(len(t) != d for t in tuples):
            raise ValueError("argument tuples have mixed dimensions")
        return tuple(table.value([t[j] for t in tuples]) for j in range(d))

    def is_idempotent(self) -> bool:
        return self.idempotent

    def size_norm(self) -> int:
        """Input-size measure: the total number of table cells, sum of n**arity."""
        return sum(self.size**op.arity for op in self.operations)


def _tokens_with_lines(text: str) -> list[tuple[str, int]]:
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0]
        for tok in body.split():
            out.append((tok, lineno))
    return out


class _TokenStream:
    def __init__(self, text: str):
        self._toks = _tokens_with_lines(text)
        self._pos = 0

    def peek(self) -> str | None:
        if self._pos < len(self._toks):
            return self._toks[self._pos][0]
        return None

    def next(self, what: str) -> str:
        if self._pos >= len(self._toks):
            raise ParseError(f"unexpected end of input, expected {what}")
        tok, _ = self._toks[self._pos]
        self._pos += 1
        return tok

    def next_int(self, what: str) -> int:
        tok = self.next(what)
        try:
            return int(tok)
        except ValueError:
            raise ParseError(f"expected {what}, got {tok!r} (line {self.line()})") from None

    def line(self) -> int:
        i = min(self._pos, len(self._toks) - 1)
        return self._toks[i][1] if self._toks else 0


def parse_algebra(text: str) -> Algebra:
    """Parse the algebra file format; see the module docstring."""
    ts = _TokenStream(text)
    if ts.next("keyword 'algebra'") != "algebra":
        raise ParseError("algebra file must start with 'algebra <name>'")
    name = ts.next("algebra name")
    if ts.next("keyword 'size'") != "size":
        raise ParseError("expected 'size <n>' after the algebra name")
    size = ts.next_int("universe size")
    if size < 1:
        raise ParseError("universe size must be at least 1")
    ops: list[OperationTable] = []
    while ts.peek() is not None:
        if ts.next("keyword 'op'") != "op":
            raise ParseError(f"expected 'op', got stray token near line {ts.line()}")
        op_name = ts.next("operation name")
        arity = ts.next_int("operation arity")
        if arity < 1:
            raise ParseError(f"op {op_name}: nullary operations are forbidden")
        want = size**arity
        values = []
        for _ in range(want):
            v = ts.next_int(f"table entry for op {op_name}")
            if not (0 <= v < size):
                raise ParseError(f"op {op_name}: value {v} out of range 0..{size - 1}")
            values.append(v)
        ops.append(OperationTable(op_name, arity, tuple(values)))
    if not ops:
        raise ParseError("an algebra needs at least one operation")
    try:
        return Algebra(name, size, tuple(ops))
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def serialize_algebra(algebra: Algebra) -> str:
    """Inverse of parse_algebra; round-trips exactly."""
    lines = [f"algebra {algebra.name}", f"size {algebra.size}"]
    for op in algebra.operations:
        lines.append(f"op {op.name} {op.arity}")
        row = max(algebra.size, 1)
        for start in range(0, len(op.table), row):
            lines.append(" ".join(str(v) for v in op.table[start : start + row]))
    return "\n".join(lines) + "\n"
