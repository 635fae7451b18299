"""Minority and minority-majority terms, decided through subpower membership.

A ternary m is a minority term when m(y,x,x) = m(x,y,x) = m(x,x,y) = y;
a 6-ary t is a minority-majority term when t(y,x,x,z,y,y) = t(x,y,x,y,z,y)
= t(x,x,y,y,y,z) = y.  Having a minority term is equivalent to having
both a Maltsev term p and a minority-majority term t, with the explicit
join m(x,y,z) = t(x,y,z, p(z,x,y), p(x,y,z), p(y,z,x)).

The brute-force deciders encode the question as one membership instance:
coordinates index the equation instances, generators are the argument
patterns of the unknown term, the target is the forced value.  For the
minority question the coordinates are the triples with at most two
distinct entries (dropping the constant triples when the algebra is
idempotent), generators are the three projections and the target is the
coordinatewise minority element; a derivation of the target converts to
a witness circuit, which is also the natural NP certificate.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Sequence

from malcev.algebra import Algebra, OperationTable, ParseError
from malcev.circuit import Circuit, Gate, from_derivation, output_table
from malcev.maltsev import maltsev_table, maltsev_violation
from malcev.subpower import Budget, MemberStatus, member


def minority_violation(op: OperationTable) -> tuple[str, int, int] | None:
    """First failing minority equation instance, or None."""
    if op.arity != 3:
        raise ValueError("a minority term is ternary")
    n = op.universe_size
    for x in range(n):
        for y in range(n):
            if op.value((y, x, x)) != y:
                return ("m(y,x,x)=y", x, y)
            if op.value((x, y, x)) != y:
                return ("m(x,y,x)=y", x, y)
            if op.value((x, x, y)) != y:
                return ("m(x,x,y)=y", x, y)
    return None


def is_minority_table(op: OperationTable) -> bool:
    """True iff all three minority equations hold at every pair (x = y included)."""
    return minority_violation(op) is None


# argument patterns of the unknown 6-ary term in the three equations,
# written over the variable triple (x, y, z); every right side is y
MINMAJ_PATTERNS = (
    ("y", "x", "x", "z", "y", "y"),
    ("x", "y", "x", "y", "z", "y"),
    ("x", "x", "y", "y", "y", "z"),
)


def minmaj_violation(op: OperationTable) -> tuple[int, tuple[int, int, int]] | None:
    """First failing minority-majority equation instance, or None."""
    if op.arity != 6:
        raise ValueError("a minority-majority term is 6-ary")
    n = op.universe_size
    for eq, pattern in enumerate(MINMAJ_PATTERNS):
        for x, y, z in product(range(n), repeat=3):
            env = {"x": x, "y": y, "z": z}
            if op.value(tuple(env[v] for v in pattern)) != y:
                return (eq + 1, (x, y, z))
    return None


def is_minmaj_table(op: OperationTable) -> bool:
    return minmaj_violation(op) is None


@dataclass(frozen=True)
class SmpInstance:
    """A subpower membership question: generators and target in A^dim.

    ``labels`` optionally annotates coordinates (for the minority
    encoding they are the argument triples "a,b,c").
    """

    name: str
    dim: int
    generators: tuple[tuple[int, ...], ...]
    target: tuple[int, ...]
    labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        if not self.generators:
            raise ValueError("at least one generator is required")
        for g in self.generators + (self.target,):
            if len(g) != self.dim:
                raise ValueError("tuple dimension mismatch")
        if self.labels is not None and len(self.labels) != self.dim:
            raise ValueError("one label per coordinate")


def parse_smp(text: str) -> SmpInstance:
    """Parse the membership-instance file format::

        smp <name>
        dim <d>
        gen <d integers>
        target <d integers>
        coord <i> <label>
    """
    name = None
    dim = None
    gens: list[tuple[int, ...]] = []
    target = None
    labels: dict[int, str] = {}
    for n_line, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        where = f"line {n_line}"
        try:
            if toks[0] == "smp" and len(toks) == 2:
                name = toks[1]
            elif toks[0] == "dim" and len(toks) == 2:
                dim = int(toks[1])
            elif toks[0] == "gen":
                gens.append(tuple(int(t) for t in toks[1:]))
            elif toks[0] == "target":
                target = tuple(int(t) for t in toks[1:])
            elif toks[0] == "coord" and len(toks) >= 3:
                labels[int(toks[1])] = " ".join(toks[2:])
            else:
                raise ParseError(f"{where}: unknown directive {toks[0]!r}")
        except ValueError as exc:
            raise ParseError(f"{where}: {exc}") from None
    if name is None or dim is None or target is None or not gens:
        raise ParseError("smp file needs 'smp', 'dim', at least one 'gen' and a 'target'")
    label_tuple = None
    if labels:
        if set(labels) != set(range(dim)):
            raise ParseError("coord annotations must cover exactly the coordinates 0..dim-1")
        label_tuple = tuple(labels[i] for i in range(dim))
    try:
        return SmpInstance(name, dim, tuple(gens), target, label_tuple)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def serialize_smp(instance: SmpInstance) -> str:
    lines = [f"smp {instance.name}", f"dim {instance.dim}"]
    for g in instance.generators:
        lines.append("gen " + " ".join(str(v) for v in g))
    lines.append("target " + " ".join(str(v) for v in instance.target))
    if instance.labels is not None:
        for i, lab in enumerate(instance.labels):
            lines.append(f"coord {i} {lab}")
    return "\n".join(lines) + "\n"


def _min_element(a: int, b: int, c: int) -> int:
    if a == b:
        return c
    if a == c:
        return b
    assert b == c, "coordinate labels have at most two distinct entries"
    return a


def build_min_instance(algebra: Algebra, idempotent_reduce: bool = False) -> SmpInstance:
    """The membership instance encoding "algebra has a minority term".

    Coordinates are the triples (a,b,c) with at most two distinct
    entries, in lexicographic order; with ``idempotent_reduce`` the
    constant triples are dropped (valid only for idempotent algebras).
    Generators are the three projections, the target is the minority
    element of each triple.
    """
    if idempotent_reduce and not algebra.idempotent:
        raise ValueError("the reduced encoding requires an idempotent algebra")
    n = algebra.size
    coords = [
        (a, b, c)
        for a, b, c in product(range(n), repeat=3)
        if len({a, b, c}) <= 2 and not (idempotent_reduce and a == b == c)
    ]
    if not coords:
        raise ValueError("empty coordinate set (size-1 algebra with reduction)")
    gens = tuple(tuple(t[i] for t in coords) for i in range(3))
    target = tuple(_min_element(*t) for t in coords)
    labels = tuple(",".join(str(v) for v in t) for t in coords)
    suffix = "reduced" if idempotent_reduce else "full"
    return SmpInstance(f"min_{algebra.name}_{suffix}", len(coords), gens, target, labels)


@dataclass(frozen=True)
class DecisionOutcome:
    """Outcome of a budgeted term-existence decision.

    ``witness`` (with its full ``witness_table``) is present exactly for
    YES; NO means the underlying closure completed.
    """

    status: MemberStatus
    witness: Circuit | None = None
    witness_table: OperationTable | None = None
    elements_generated: int = 0
    applications: int = 0

    @property
    def is_yes(self) -> bool:
        return self.status is MemberStatus.YES


def _decide(
    algebra: Algebra,
    instance: SmpInstance,
    budget: Budget | None,
    witness_name: str,
    witness_arity: int,
) -> DecisionOutcome:
    res = member(algebra, instance.generators, instance.target, budget=budget)
    gen = res.generation
    witness = None
    table = None
    if res.status is MemberStatus.YES:
        witness = from_derivation(
            gen.derivation,
            outputs=(gen.target_index,),
            algebra=algebra,
            name=witness_name,
        )
        if witness.inputs != witness_arity:
            raise RuntimeError("generator tuples of the encoding must be pairwise distinct")
        n = algebra.size
        table = output_table(
            witness, algebra, name=witness_name, max_entries=max(1 << 20, n**witness_arity)
        )
    return DecisionOutcome(
        status=res.status,
        witness=witness,
        witness_table=table,
        elements_generated=len(gen.elements),
        applications=gen.applications,
    )


def decide_minority_bruteforce(
    algebra: Algebra,
    budget: Budget | None = None,
    idempotent_reduce: bool | None = None,
) -> DecisionOutcome:
    """Brute-force the minority question via the membership encoding.

    By default the reduced encoding is used when the algebra is
    idempotent.  A YES witness is checked against the minority
    equations before it is returned.
    """
    if idempotent_reduce is None:
        idempotent_reduce = algebra.idempotent
    instance = build_min_instance(algebra, idempotent_reduce)
    outcome = _decide(algebra, instance, budget, "minority", 3)
    if outcome.is_yes and not is_minority_table(outcome.witness_table):
        raise RuntimeError("internal error: membership witness fails the minority equations")
    return outcome


def build_minmaj_instance(algebra: Algebra) -> SmpInstance:
    """Membership encoding of the minority-majority question.

    One coordinate per equation instance ((eq, x, y, z) in lexicographic
    order), six generators carrying the argument patterns of the unknown
    term, target y everywhere.
    """
    n = algebra.size
    coords = [(eq, x, y, z) for eq in range(3) for x, y, z in product(range(n), repeat=3)]
    gens = []
    for pos in range(6):
        row = []
        for eq, x, y, z in coords:
            env = {"x": x, "y": y, "z": z}
            row.append(env[MINMAJ_PATTERNS[eq][pos]])
        gens.append(tuple(row))
    target = tuple(y for _, _, y, _ in coords)
    labels = tuple(f"eq{eq + 1}:{x},{y},{z}" for eq, x, y, z in coords)
    return SmpInstance(f"minmaj_{algebra.name}", len(coords), tuple(gens), target, labels)


def decide_minmaj_bruteforce(algebra: Algebra, budget: Budget | None = None) -> DecisionOutcome:
    """Brute-force the minority-majority question; same shape as the
    minority decider but with the 6-ary encoding."""
    instance = build_minmaj_instance(algebra)
    outcome = _decide(algebra, instance, budget, "minmaj", 6)
    if outcome.is_yes and not is_minmaj_table(outcome.witness_table):
        raise RuntimeError("internal error: membership witness fails the minority-majority equations")
    return outcome


def check_minority_witness(algebra: Algebra, circuit: Circuit) -> bool:
    """NP-certificate check: evaluate the circuit everywhere and test the
    minority equations; polynomial in circuit size plus n^3."""
    if circuit.inputs != 3 or len(circuit.outputs) != 1:
        raise ValueError("a minority witness is a single-output ternary circuit")
    n = algebra.size
    table = output_table(circuit, algebra, name="witness", max_entries=max(1 << 20, n**3))
    return is_minority_table(table)


def compose_minority(
    algebra: Algebra,
    p: OperationTable | Circuit,
    t: OperationTable | Circuit,
) -> tuple[OperationTable, Circuit]:
    """Join a Maltsev term with a minority-majority term into a minority term:
    m(x,y,z) = t(x,y,z, p(z,x,y), p(x,y,z), p(y,z,x)).

    Accepts tables or circuits over the algebra's signature.  The
    returned circuit is over the base signature when both inputs are
    circuits, otherwise over the signature extended with the table
    names.  The result is checked against the minority equations.
    """
    n = algebra.size

    def as_table(term, arity: int, fallback_name: str) -> OperationTable:
        if isinstance(term, OperationTable):
            return term
        tbl = output_table(term, algebra, name=fallback_name, max_entries=max(1 << 20, n**arity))
        return tbl

    p_table = as_table(p, 3, "p")
    t_table = as_table(t, 6, "t")
    bad = maltsev_violation(p_table)
    if bad is not None:
        raise ValueError(f"p is not a Maltsev table: {bad[0]} fails at (x,y)=({bad[1]},{bad[2]})")
    bad6 = minmaj_violation(t_table)
    if bad6 is not None:
        raise ValueError(
            f"t is not a minority-majority table: equation {bad6[0]} fails at (x,y,z)={bad6[1]}"
        )

    table = []
    for x, y, z in product(range(n), repeat=3):
        args = (x, y, z, p_table.value((z, x, y)), p_table.value((x, y, z)), p_table.value((y, z, x)))
        table.append(t_table.value(args))
    m_table = OperationTable("minority", 3, tuple(table))
    bad3 = minority_violation(m_table)
    if bad3 is not None:
        raise RuntimeError(f"join composition failed the minority equations at {bad3}")

    if isinstance(p, Circuit) and isinstance(t, Circuit):
        gates: list[Gate] = []

        def splice(circ: Circuit, args: Sequence[int]) -> int:
            base = {i: args[i] for i in range(circ.inputs)}
            offset = {}
            for j, gate in enumerate(circ.gates):
                resolved = tuple(
                    base[a] if a < circ.inputs else offset[a] for a in gate.args
                )
                gates.append(Gate(gate.symbol, resolved))
                offset[circ.inputs + j] = 3 + len(gates) - 1
            out = circ.outputs[0]
            return base[out] if out < circ.inputs else offset[out]

        r1 = splice(p, (2, 0, 1))
        r2 = splice(p, (0, 1, 2))
        r3 = splice(p, (1, 2, 0))
        rt = splice(t, (0, 1, 2, r1, r2, r3))
        m_circuit = Circuit("minority", 3, tuple(gates), (rt,))
    else:
        m_circuit = Circuit(
            "minority",
            3,
            (
                Gate(p_table.name, (2, 0, 1)),
                Gate(p_table.name, (0, 1, 2)),
                Gate(p_table.name, (1, 2, 0)),
                Gate(t_table.name, (0, 1, 2, 3, 4, 5)),
            ),
            (6,),
        )
    return m_table, m_circuit


FIXED_NO_ALGEBRA = Algebra(
    "meet2",
    2,
    (OperationTable("and", 2, (0, 0, 0, 1)),),
)

FIXED_NO_INSTANCE = SmpInstance("fixed_no", 1, ((0,),), (1,))


@dataclass(frozen=True)
class SmpunReduction:
    """Image of an algebra under the reduction to membership-with-Maltsev.

    ``fixed_no`` marks the canonical unsatisfiable instance used when
    the input has no Maltsev term (and hence no minority term): the
    closure of {0} under the meet operation never reaches 1.
    """

    algebra: Algebra
    instance: SmpInstance
    fixed_no: bool


def reduce_to_smpun(algebra: Algebra, budget: Budget | None = None) -> SmpunReduction:
    """Reduce the minority question to a membership instance whose algebra
    carries a Maltsev operation among its basic operations.

    When a Maltsev table exists it is appended as a new basic operation
    (the augmented algebra is term equivalent to the input) and the
    minority encoding of the augmented algebra is returned; otherwise
    the canonical fixed no-instance.
    """
    if not algebra.idempotent:
        raise ValueError("the reduction is defined for idempotent algebras")
    table = maltsev_table(algebra, budget=budget)
    if table is None:
        return SmpunReduction(FIXED_NO_ALGEBRA, FIXED_NO_INSTANCE, fixed_no=True)
    names = {op.name for op in algebra.operations}
    name = "maltsev"
    k = 1
    while name in names:
        name = f"maltsev_{k}"
        k += 1
    table = OperationTable(name, 3, table.table)
    augmented = Algebra(algebra.name + "_maltsev", algebra.size, algebra.operations + (table,))
    instance = build_min_instance(augmented, idempotent_reduce=True)
    return SmpunReduction(augmented, instance, fixed_no=False)
