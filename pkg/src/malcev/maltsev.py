"""Maltsev term detection and witness-circuit construction.

For a finite idempotent algebra the existence of a Maltsev term (a
ternary p with p(x,x,y) = p(y,x,x) = y) reduces to local questions: for
every quadruple (a,b,c,d) the subpower of A^2 generated by
{(a,c),(b,c),(b,d)} must contain (a,d), and the derivation of that
membership converts to a small circuit t_{a,b,c,d} with
t_{a,b,c,d}(a,b,b) = a and t_{a,b,c,d}(c,c,d) = d.  Local circuits are
then stitched into pair circuits t_{a,b} (Step 2) and those into a
single global Maltsev circuit (Step 3) by two inductive constructions
over a fixed lexicographic enumeration of A^2; inlining the derived
gates twice yields a circuit over the base signature whose size stays
within a small multiple of n^6.

The inductive steps need the scalars u = t^j_{a,b}(a_{j+1},a_{j+1},b_{j+1})
and v = t_j(a_{j+1},b_{j+1},b_{j+1}).  We obtain them from full value
tables of the growing circuits, maintained incrementally alongside the
gates (two table lookups per added gate pair); this is the table-based
bookkeeping variant of the same construction and is what makes the
12-element runs fast.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from malcev.algebra import Algebra, OperationTable
from malcev.circuit import (
    Circuit,
    Gate,
    SignatureExtension,
    _evaluate_all_arrays,
    _input_columns,
    derivation_circuit,
    inline,
)
from malcev.subpower import Budget, generate

# Sanity cap on the final inlined circuit: size <= factor * n^6.  The
# measured ratios are far below 1 (about 0.006 for n=2 up to 0.11 for
# n=12); the factor only guards against construction bugs.
MAX_SIZE_FACTOR = 1.0


def local_symbol(a: int, b: int, c: int, d: int) -> str:
    return f"loc_{a}_{b}_{c}_{d}"


def pair_symbol(a: int, b: int) -> str:
    return f"pair_{a}_{b}"


def is_maltsev_table(op: OperationTable) -> bool:
    """True iff p(x,x,y) = y = p(y,x,x) for all x, y."""
    return maltsev_violation(op) is None


def maltsev_violation(op: OperationTable) -> tuple[str, int, int] | None:
    """First failing equation instance, or None if the table is Maltsev."""
    if op.arity != 3:
        raise ValueError("a Maltsev term is ternary")
    n = op.universe_size
    for x in range(n):
        for y in range(n):
            if op.value((x, x, y)) != y:
                return ("p(x,x,y)=y", x, y)
            if op.value((y, x, x)) != y:
                return ("p(y,x,x)=y", x, y)
    return None


@dataclass(frozen=True)
class LocalWitness:
    """A ternary circuit t with t(a,b,b) = a and t(c,c,d) = d."""

    quadruple: tuple[int, int, int, int]
    circuit: Circuit


@dataclass(frozen=True)
class MaltsevOutcome:
    """Either a base-signature Maltsev circuit plus its table, or the
    lexicographically first quadruple whose local generation closed
    without reaching (a,d)."""

    found: bool
    circuit: Circuit | None = None
    table: OperationTable | None = None
    no_witness: tuple[int, int, int, int] | None = None


def local_maltsev(
    algebra: Algebra,
    a: int,
    b: int,
    c: int,
    d: int,
    budget: Budget | None = None,
) -> LocalWitness | None:
    """Search for a local Maltsev circuit for the quadruple (a,b,c,d).

    Runs the closure of {(a,c),(b,c),(b,d)} in A^2 with early exit at
    (a,d) and converts the derivation into a ternary circuit whose
    inputs correspond to the three generators in that order.  Returns
    None when the closure completes without the target.
    """
    if not algebra.idempotent:
        raise ValueError("local Maltsev search requires an idempotent algebra")
    gens = [(a, c), (b, c), (b, d)]
    res = generate(algebra, 2, gens, target=(a, d), budget=budget)
    if res.target_index is None:
        if res.exhausted:
            raise RuntimeError(
                f"budget exhausted while generating the local closure for {(a, b, c, d)}"
            )
        return None
    # map the (deduplicated) generator elements back to input positions
    distinct: list[tuple[int, int]] = []
    input_of_element = []
    for pos, g in enumerate(gens):
        if g not in distinct:
            distinct.append(g)
            input_of_element.append(pos)
    circuit = derivation_circuit(
        res.derivation,
        outputs=(res.target_index,),
        algebra=algebra,
        name=local_symbol(a, b, c, d),
        inputs=3,
        input_of_element=input_of_element,
    )
    return LocalWitness((a, b, c, d), circuit)


def all_local_witnesses(
    algebra: Algebra, budget: Budget | None = None
) -> tuple[dict[tuple[int, int, int, int], LocalWitness], tuple[int, int, int, int] | None]:
    """Step 1 over all n^4 quadruples in lexicographic order.

    Stops at the first quadruple with no local witness and returns it as
    the second component (the collected witnesses stay partial).
    """
    n = algebra.size
    witnesses: dict[tuple[int, int, int, int], LocalWitness] = {}
    for a in range(n):
        for b in range(n):
            for c in range(n):
                for d in range(n):
                    w = local_maltsev(algebra, a, b, c, d, budget=budget)
                    if w is None:
                        return witnesses, (a, b, c, d)
                    witnesses[w.quadruple] = w
    return witnesses, None


class _LocalTables:
    """Lazy full tables (over A^3) of the local witness circuits."""

    def __init__(self, algebra: Algebra, witnesses: dict):
        self.algebra = algebra
        self.witnesses = witnesses
        self.base_tables = {op.name: np.asarray(op.table) for op in algebra.operations}
        self.base_arities = {op.name: op.arity for op in algebra.operations}
        self.cache: dict[tuple[int, int, int, int], np.ndarray] = {}

    def table(self, quad: tuple[int, int, int, int]) -> np.ndarray:
        tbl = self.cache.get(quad)
        if tbl is None:
            circ = self.witnesses[quad].circuit
            tbl = _evaluate_all_arrays(circ, self.algebra, self.base_tables, self.base_arities)[0]
            self.cache[quad] = tbl
        return tbl


def _flat3(n: int, i: np.ndarray | int, j: np.ndarray | int, k: np.ndarray | int):
    return (np.asarray(i, dtype=np.int64) * n + j) * n + k


class StepInvariantError(AssertionError):
    pass


def _build_pair(
    algebra: Algebra,
    locals_: _LocalTables,
    a: int,
    b: int,
    check_invariants: bool = False,
):
    """Step 2 for one pair: the inductive circuit over local symbols.

    Returns (two-output circuit, single-output definition, final table
    of t_{a,b}).  With ``check_invariants`` the inductive properties
    t^j(a,b,b) = a and t^j(a_i,a_i,b_i) = b_i (i <= j) are asserted at
    every index j.
    """
    n = algebra.size
    total = n**3
    cols = _input_columns(n, 3, total)
    P = cols[0].copy()  # table of t^j(x,y,z); starts as t^0 = x
    Q = cols[1].copy()  # table of t^j(y,y,z); starts as y
    Z = cols[2]
    out1, out2 = 0, 1
    gates: list[Gate] = []
    pair_a = np.arange(n * n, dtype=np.int64) // n
    pair_b = np.arange(n * n, dtype=np.int64) % n
    idx_aab = _flat3(n, pair_a, pair_a, pair_b)  # positions of (a_i, a_i, b_i)
    abb = (a * n + b) * n + b
    for j in range(n * n):
        aj = int(pair_a[j])
        bj = int(pair_b[j])
        u = int(P[(aj * n + aj) * n + bj])
        v = bj
        quad = (a, b, u, v)
        sym = local_symbol(*quad)
        L = locals_.table(quad)
        gates.append(Gate(sym, (out1, out2, 2)))
        out1_new = 3 + len(gates) - 1
        gates.append(Gate(sym, (out2, out2, 2)))
        out2_new = 3 + len(gates) - 1
        P = L[_flat3(n, P, Q, Z)]
        Q = L[_flat3(n, Q, Q, Z)]
        out1, out2 = out1_new, out2_new
        if check_invariants:
            if int(P[abb]) != a:
                raise StepInvariantError(f"t^{j + 1}_{a},{b}({a},{b},{b}) != {a}")
            if not np.array_equal(P[idx_aab[: j + 1]], pair_b[: j + 1].astype(P.dtype)):
                raise StepInvariantError(f"pair ({a},{b}): t^{j + 1}(a_i,a_i,b_i) != b_i for some i <= {j + 1}")
    two_out = Circuit(f"{pair_symbol(a, b)}_both", 3, tuple(gates), (out1, out2))
    definition = Circuit(pair_symbol(a, b), 3, tuple(gates), (out1,))
    return two_out, definition, P


def build_pair_circuit(
    algebra: Algebra,
    witnesses: dict[tuple[int, int, int, int], LocalWitness],
    a: int,
    b: int,
) -> Circuit:
    """Two-output circuit computing (t_{a,b}(x,y,z), t_{a,b}(y,y,z))."""
    two_out, _, _ = _build_pair(algebra, _LocalTables(algebra, witnesses), a, b)
    return two_out


def _build_chain(
    algebra: Algebra,
    pair_tables: dict[tuple[int, int], np.ndarray],
    check_invariants: bool = False,
):
    """Step 3: the inductive circuit over pair symbols.

    Returns (single-output circuit computing t_{n^2}(x,y,z), its table).
    Base: the gateless circuit with outputs (y, z), i.e. t_0(x,y,z) = z,
    which makes the first inductive step produce t_1 = t_{a_1,b_1}.
    """
    n = algebra.size
    total = n**3
    cols = _input_columns(n, 3, total)
    X = cols[0]
    R1 = cols[1].copy()  # table of t_j(x,y,y); starts as y
    R2 = cols[2].copy()  # table of t_j(x,y,z); starts as z
    out1, out2 = 1, 2
    gates: list[Gate] = []
    pair_a = np.arange(n * n, dtype=np.int64) // n
    pair_b = np.arange(n * n, dtype=np.int64) % n
    idx_abb = _flat3(n, pair_a, pair_b, pair_b)
    idx_aab = _flat3(n, pair_a, pair_a, pair_b)
    for j in range(n * n):
        aj = int(pair_a[j])
        bj = int(pair_b[j])
        u = aj
        v = int(R2[(aj * n + bj) * n + bj])
        sym = pair_symbol(u, v)
        T = pair_tables[(u, v)]
        gates.append(Gate(sym, (0, out1, out1)))
        out1_new = 3 + len(gates) - 1
        gates.append(Gate(sym, (0, out1, out2)))
        out2_new = 3 + len(gates) - 1
        R1_next = T[_flat3(n, X, R1, R1)]
        R2_next = T[_flat3(n, X, R1, R2)]
        R1, R2 = R1_next, R2_next
        out1, out2 = out1_new, out2_new
        if check_invariants:
            if not np.array_equal(R2[idx_aab], pair_b.astype(R2.dtype)):
                raise StepInvariantError(f"step 3, j={j + 1}: t_j(a,a,b) != b for some a,b")
            if not np.array_equal(R2[idx_abb[: j + 1]], pair_a[: j + 1].astype(R2.dtype)):
                raise StepInvariantError(f"step 3, j={j + 1}: t_j(a_i,b_i,b_i) != a_i for some i <= {j + 1}")
    chain = Circuit("maltsev_chain", 3, tuple(gates), (out2,))
    return chain, R2


def build_maltsev_circuit(
    algebra: Algebra,
    budget: Budget | None = None,
    check_invariants: bool = False,
    max_size_factor: float = MAX_SIZE_FACTOR,
) -> MaltsevOutcome:
    """Decide the Maltsev term condition and construct a witness circuit.

    Either reports NoMaltsev with the first quadruple whose local
    closure misses its target, or returns a single-output circuit over
    the base signature (inlined twice, through the pair and local
    levels) together with its full table.
    """
    if not algebra.idempotent:
        raise ValueError("the Maltsev pipeline requires an idempotent algebra")
    n = algebra.size
    witnesses, missing = all_local_witnesses(algebra, budget=budget)
    if missing is not None:
        return MaltsevOutcome(found=False, no_witness=missing)

    locals_ = _LocalTables(algebra, witnesses)
    pair_defs: dict[str, Circuit] = {}
    pair_tables: dict[tuple[int, int], np.ndarray] = {}
    for a in range(n):
        for b in range(n):
            _, definition, table = _build_pair(algebra, locals_, a, b, check_invariants)
            pair_defs[pair_symbol(a, b)] = definition
            pair_tables[(a, b)] = table

    chain, final_table = _build_chain(algebra, pair_tables, check_invariants)

    local_defs = {local_symbol(*q): w.circuit for q, w in witnesses.items()}
    over_locals = inline(chain, SignatureExtension(pair_defs), name="maltsev_over_locals")
    base_circuit = inline(over_locals, SignatureExtension(local_defs), name="maltsev")

    bound = max_size_factor * n**6
    if base_circuit.size > bound:
        raise RuntimeError(
            f"inlined Maltsev circuit has {base_circuit.size} nodes, "
            f"over the sanity bound {bound:.0f}"
        )
    table = OperationTable("maltsev", 3, tuple(int(v) for v in final_table))
    return MaltsevOutcome(found=True, circuit=base_circuit, table=table)


def maltsev_table(algebra: Algebra, budget: Budget | None = None) -> OperationTable | None:
    """Table of some Maltsev term, or None when there is none.

    Obtained by evaluating the constructed circuit at all n^3 inputs.
    """
    from malcev.circuit import evaluate_all

    outcome = build_maltsev_circuit(algebra, budget=budget)
    if not outcome.found:
        return None
    n = algebra.size
    (tbl,) = evaluate_all(outcome.circuit, algebra, max_entries=max(1 << 20, n**3))
    return OperationTable("maltsev", 3, tbl)


@dataclass(frozen=True)
class StepInvariantReport:
    pairs_checked: int
    step2_indices: int
    step3_indices: int


def verify_step_invariants(algebra: Algebra, budget: Budget | None = None) -> StepInvariantReport:
    """Run Steps 2 and 3 with the inductive invariants asserted at every index.

    Raises StepInvariantError on the first violation; only meaningful
    for algebras that do have a Maltsev term.
    """
    outcome = build_maltsev_circuit(algebra, budget=budget, check_invariants=True)
    if not outcome.found:
        raise ValueError(f"no Maltsev term (local witness missing at {outcome.no_witness})")
    n = algebra.size
    return StepInvariantReport(pairs_checked=n * n, step2_indices=n * n, step3_indices=n * n)
