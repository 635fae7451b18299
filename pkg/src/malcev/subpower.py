"""Subuniverse generation in finite powers, with derivation bookkeeping.

``generate`` closes a set of d-tuples under the coordinatewise action of
an algebra's operations.  The schedule is normative so that derivations
(and the circuits built from them) are reproducible: elements live in a
worklist in discovery order; each pass takes every operation in declared
order and every argument tuple in lexicographic order over the elements
discovered before the pass, restricted to tuples that touch at least one
element not yet processed; unseen results are appended together with the
operation and parent indices that produced them.  Generation stops as
soon as the target appears, when a pass adds nothing (closed), or when a
budget runs out.

Internally the applications are evaluated in vectorized batches, which
does not change the observable schedule: results are deduplicated in
enumeration order, so element order, derivations and early exit are
bit-identical to the sequential description above.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from itertools import product
from typing import Sequence

import numpy as np

from malcev.algebra import Algebra

# Default budgets for brute-force decisions; every entry point that
# closes a subpower accepts an override.
DEFAULT_MAX_ELEMENTS = 10**6
DEFAULT_MAX_APPLICATIONS = 10**8


@dataclass(frozen=True)
class Budget:
    """Dual budget for closure runs: stored elements and raw applications."""

    max_elements: int = DEFAULT_MAX_ELEMENTS
    max_applications: int = DEFAULT_MAX_APPLICATIONS

    def __post_init__(self) -> None:
        if self.max_elements < 1 or self.max_applications < 0:
            raise ValueError("budgets must be positive")


@dataclass(frozen=True)
class Derivation:
    """Provenance for generated elements.

    ``steps[s]`` is ``(op_index, parents)`` where parents are 0-based
    indices into the element order: 0..g-1 are the (distinct) generators
    and g+s' refers to the element produced by step s' < s.
    """

    generator_count: int
    steps: tuple[tuple[int, tuple[int, ...]], ...]

    def __post_init__(self) -> None:
        for s, (_, parents) in enumerate(self.steps):
            limit = self.generator_count + s
            if any(p < 0 or p >= limit for p in parents):
                raise ValueError(f"step {s} references an element not yet derived")


@dataclass(frozen=True)
class GenerationResult:
    """Everything a closure run produced, in discovery order."""

    elements: tuple[tuple[int, ...], ...]
    derivation: Derivation
    target_index: int | None
    exhausted: bool
    applications: int

    @property
    def closed(self) -> bool:
        """True when the full closure was computed (no early exit, no budget cut)."""
        return self.target_index is None and not self.exhausted


class MemberStatus(Enum):
    YES = "yes"
    NO = "no"
    EXHAUSTED = "exhausted"


@dataclass(frozen=True)
class MemberResult:
    status: MemberStatus
    generation: GenerationResult

    @property
    def derivation(self) -> Derivation | None:
        return self.generation.derivation if self.status is MemberStatus.YES else None


def _pool_dtype(size: int):
    return np.uint8 if size <= 256 else np.uint16


class _BlockPool:
    """Append-only row store, block-allocated so growth never copies."""

    def __init__(self, dim: int, dtype, block_bytes: int = 64 << 20):
        self.dim = dim
        self.dtype = dtype
        itemsize = np.dtype(dtype).itemsize
        self.block_rows = max(1024, block_bytes // max(1, dim * itemsize))
        self.blocks: list[np.ndarray] = []
        self.count = 0

    def append(self, row: np.ndarray) -> int:
        i = self.count
        b, r = divmod(i, self.block_rows)
        if b == len(self.blocks):
            self.blocks.append(np.empty((self.block_rows, self.dim), dtype=self.dtype))
        self.blocks[b][r] = row
        self.count += 1
        return i

    def row(self, i: int) -> np.ndarray:
        b, r = divmod(i, self.block_rows)
        return self.blocks[b][r]

    def gather(self, idx: np.ndarray) -> np.ndarray:
        """Rows at the given indices, as a fresh [len(idx), dim] array."""
        out = np.empty((len(idx), self.dim), dtype=self.dtype)
        if len(self.blocks) == 1:
            out[:] = self.blocks[0][idx]
            return out
        blk = idx // self.block_rows
        for b in np.unique(blk):
            m = blk == b
            out[m] = self.blocks[b][idx[m] % self.block_rows]
        return out

    def all_rows(self) -> np.ndarray:
        if not self.blocks:
            return np.empty((0, self.dim), dtype=self.dtype)
        full, rest = divmod(self.count, self.block_rows)
        parts = self.blocks[:full]
        if rest:
            parts = parts + [self.blocks[full][:rest]]
        return np.concatenate(parts, axis=0) if parts else self.blocks[0][:0]


def _xor_fold(rows: np.ndarray) -> np.ndarray:
    """Cheap 64-bit content key per row (lossy; callers must verify)."""
    b = rows.shape[1] * rows.dtype.itemsize
    pad = (-b) % 8
    if pad:
        padded = np.zeros((rows.shape[0], b + pad), dtype=np.uint8)
        padded[:, :b] = rows.view(np.uint8).reshape(rows.shape[0], b)
        raw = padded
    else:
        raw = np.ascontiguousarray(rows).view(np.uint8).reshape(rows.shape[0], b)
    words = raw.view(np.uint64).reshape(rows.shape[0], -1)
    # multiply word i by an odd constant depending on position so that
    # permuted rows do not collide systematically
    mult = (np.arange(words.shape[1], dtype=np.uint64) * np.uint64(0x9E3779B97F4A7C15)) | np.uint64(1)
    return np.bitwise_xor.reduce(words * mult, axis=1)


class _Dedup:
    """Exact membership index over pool rows.

    When n**d fits in a machine word the mixed-radix code of a tuple is
    injective and used directly; otherwise rows are keyed by a 64-bit
    fold and verified byte-exactly against the pool on every hit.
    """

    def __init__(self, size: int, dim: int, pool: _BlockPool):
        self.pool = pool
        self.exact = dim * np.log2(max(size, 2)) < 63
        if self.exact:
            radix = np.uint64(size)
            powers = np.empty(dim, dtype=np.uint64)
            acc = np.uint64(1)
            for j in range(dim - 1, -1, -1):
                powers[j] = acc
                acc = acc * radix
            self.powers = powers
        self.index: dict[int, int | list[int]] = {}

    def keys_for(self, rows: np.ndarray) -> np.ndarray:
        if self.exact:
            return rows.astype(np.uint64) @ self.powers
        return _xor_fold(rows)

    def find(self, key: int, row: np.ndarray) -> int | None:
        hit = self.index.get(key)
        if hit is None:
            return None
        if self.exact:
            return hit if isinstance(hit, int) else hit[0]
        cands = [hit] if isinstance(hit, int) else hit
        for i in cands:
            if np.array_equal(self.pool.row(i), row):
                return i
        return None

    def insert(self, key: int, idx: int) -> None:
        hit = self.index.get(key)
        if hit is None:
            self.index[key] = idx
        elif isinstance(hit, int):
            self.index[key] = [hit, idx]
        else:
            hit.append(idx)


def _op_arrays(algebra: Algebra) -> list[np.ndarray]:
    dtype = _pool_dtype(algebra.size)
    return [np.asarray(op.table, dtype=dtype) for op in algebra.operations]


class _Generator:
    """One closure run; see the module docstring for the schedule."""

    def __init__(
        self,
        algebra: Algebra,
        dim: int,
        generators: Sequence[Sequence[int]],
        target: Sequence[int] | None,
        budget: Budget,
    ):
        if dim < 1:
            raise ValueError("dimension must be at least 1")
        if not generators:
            raise ValueError("at least one generator is required")
        n = algebra.size
        for g in generators:
            if len(g) != dim:
                raise ValueError(f"generator {tuple(g)} does not have dimension {dim}")
            if any(not (0 <= v < n) for v in g):
                raise ValueError(f"generator {tuple(g)} has entries outside 0..{n - 1}")
        if target is not None and len(target) != dim:
            raise ValueError("target dimension mismatch")

        self.algebra = algebra
        self.dim = dim
        self.budget = budget
        self.tables = _op_arrays(algebra)
        self.arities = [op.arity for op in algebra.operations]
        self.pool = _BlockPool(dim, _pool_dtype(n))
        self.dedup = _Dedup(n, dim, self.pool)
        self.steps: list[tuple[int, tuple[int, ...]]] = []
        self.apps = 0
        self.target_index: int | None = None
        self.exhausted = False

        self.target_row = None
        if target is not None:
            self.target_row = np.asarray(tuple(target), dtype=self.pool.dtype)

        for g in generators:
            row = np.asarray(tuple(g), dtype=self.pool.dtype)
            key = int(self.dedup.keys_for(row[None, :])[0])
            if self.dedup.find(key, row) is None:
                idx = self.pool.append(row)
                self.dedup.insert(key, idx)
        self.generator_count = self.pool.count
        if self.target_row is not None:
            for i in range(self.pool.count):
                if np.array_equal(self.pool.row(i), self.target_row):
                    self.target_index = i
                    break

    def run(self) -> GenerationResult:
        if self.target_index is None:
            processed = 0
            while True:
                snapshot = self.pool.count
                if processed == snapshot:
                    break  # closed: previous pass added nothing
                if not self._pass(processed, snapshot):
                    break  # early exit or budget
                processed = snapshot
        elems = tuple(tuple(int(v) for v in self.pool.row(i)) for i in range(self.pool.count))
        return GenerationResult(
            elements=elems,
            derivation=Derivation(self.generator_count, tuple(self.steps)),
            target_index=self.target_index,
            exhausted=self.exhausted,
            applications=self.apps,
        )

    def _pass(self, frontier_start: int, snapshot: int) -> bool:
        """One pass over ops x tuples; False means stop the whole run."""
        for op_i, arity in enumerate(self.arities):
            total = snapshot**arity
            chunk = max(256, min(1 << 16, (16 << 20) // max(1, self.dim * 4)))
            lo = 0
            while lo < total:
                hi = min(total, lo + chunk)
                ranks = np.arange(lo, hi, dtype=np.int64)
                parts = np.empty((hi - lo, arity), dtype=np.int64)
                r = ranks
                for j in range(arity - 1, -1, -1):
                    parts[:, j] = r % snapshot
                    r = r // snapshot
                if frontier_start > 0:
                    keep = (parts >= frontier_start).any(axis=1)
                    parts = parts[keep]
                if len(parts) == 0:
                    lo = hi
                    continue
                remaining = self.budget.max_applications - self.apps
                if remaining <= 0:
                    self.exhausted = True
                    return False
                truncated = len(parts) > remaining
                if truncated:
                    parts = parts[:remaining]
                if not self._apply_batch(op_i, parts):
                    return False
                if truncated:
                    self.exhausted = True
                    return False
                lo = hi
        return True

    def _apply_batch(self, op_i: int, parts: np.ndarray) -> bool:
        """Evaluate a batch of argument tuples; False means stop the run."""
        n = self.algebra.size
        arity = parts.shape[1]
        self.apps += len(parts)
        idx = self.pool.gather(parts[:, 0]).astype(np.int64)
        for j in range(1, arity):
            idx *= n
            idx += self.pool.gather(parts[:, j])
        rows = self.tables[op_i][idx]
        del idx

        keys = self.dedup.keys_for(rows)
        _, first_pos, inverse = np.unique(keys, return_index=True, return_inverse=True)
        if self.dedup.exact:
            cand_pos = np.sort(first_pos)
        else:
            rep = rows[first_pos[inverse]]
            collide = (rows != rep).any(axis=1)
            cand_pos = np.sort(np.concatenate([first_pos, np.nonzero(collide)[0]]))

        for pos in cand_pos:
            row = rows[pos]
            key = int(keys[pos])
            if self.dedup.find(key, row) is not None:
                continue
            if self.pool.count >= self.budget.max_elements:
                self.exhausted = True
                return False
            idx_new = self.pool.append(row)
            self.dedup.insert(key, idx_new)
            self.steps.append((op_i, tuple(int(p) for p in parts[pos])))
            if self.target_row is not None and np.array_equal(row, self.target_row):
                self.target_index = idx_new
                return False
        return True


def generate(
    algebra: Algebra,
    dim: int,
    generators: Sequence[Sequence[int]],
    target: Sequence[int] | None = None,
    budget: Budget | None = None,
) -> GenerationResult:
    """Close ``generators`` in algebra^dim, recording a derivation per element.

    Duplicate generators are dropped (first occurrence wins), so
    ``elements[:derivation.generator_count]`` are distinct.  The run
    stops immediately when ``target`` is generated, when the closure is
    complete, or when the budget is hit (``exhausted`` is then set and
    is a result state, not an error).
    """
    return _Generator(algebra, dim, generators, target, budget or Budget()).run()


def member(
    algebra: Algebra,
    generators: Sequence[Sequence[int]],
    target: Sequence[int],
    budget: Budget | None = None,
) -> MemberResult:
    """Decide membership of ``target`` in the subpower generated by ``generators``.

    ``NO`` is reported only when the closure completed within budget.
    """
    dim = len(target)
    res = generate(algebra, dim, generators, target=target, budget=budget)
    if res.target_index is not None:
        status = MemberStatus.YES
    elif res.exhausted:
        status = MemberStatus.EXHAUSTED
    else:
        status = MemberStatus.NO
    return MemberResult(status, res)


def naive_fixpoint_oracle(
    algebra: Algebra,
    dim: int,
    generators: Sequence[Sequence[int]],
    max_space: int = 1 << 20,
) -> set[tuple[int, ...]]:
    """Independent closure oracle: full re-scan until fixpoint.

    Deliberately simple and entirely separate from ``generate``; used to
    validate it on small instances.  Refuses instances whose ambient
    space n**dim exceeds ``max_space``.
    """
    if algebra.size**dim > max_space:
        raise ValueError(f"instance too large for the naive oracle (n^d > {max_space})")
    current: set[tuple[int, ...]] = {tuple(g) for g in generators}
    for g in current:
        if len(g) != dim:
            raise ValueError("generator dimension mismatch")
    while True:
        added = set()
        for op_i, op in enumerate(algebra.operations):
            for args in product(sorted(current), repeat=op.arity):
                result = algebra.apply_pointwise(op_i, args)
                if result not in current:
                    added.add(result)
        if not added:
            return current
        current |= added


def replay_derivation(
    algebra: Algebra,
    generators: Sequence[Sequence[int]],
    derivation: Derivation,
) -> list[tuple[int, ...]]:
    """Recompute the element sequence of a derivation with apply_pointwise.

    Returns generators (deduplicated, first occurrence wins) followed by
    one tuple per step; used by tests to check that results are sound.
    """
    elems: list[tuple[int, ...]] = []
    for g in generators:
        t = tuple(g)
        if t not in elems:
            elems.append(t)
    if len(elems) != derivation.generator_count:
        raise ValueError("generator count mismatch")
    for op_i, parents in derivation.steps:
        elems.append(algebra.apply_pointwise(op_i, [elems[p] for p in parents]))
    return elems
