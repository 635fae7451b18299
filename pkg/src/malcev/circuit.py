"""Multi-output circuits over an algebra's signature.

A circuit is a DAG of gates, each labeled by an operation symbol and
wired to inputs or strictly earlier gates; storing gates in topological
order makes acyclicity a structural invariant instead of a graph check.
Circuits are the compact representation of term operations: evaluation
is one pass, linear in the number of gates, while expanding to a term
string can blow up exponentially and is therefore budgeted.

Node references are plain ints: ``0..k-1`` are the inputs, ``k+j`` is
gate ``j``.  The file format uses the 1-based labels ``x1..xk`` and
``g1..gj`` instead::

    circuit <name>
    inputs <k>
    gate g<j> <opname> <ref> <ref> ...
    outputs <ref> [<ref> ...]
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from malcev.algebra import Algebra, OperationTable, ParseError
from malcev.subpower import Derivation, _pool_dtype


class BudgetError(RuntimeError):
    """A table or expansion would exceed the configured size budget."""


@dataclass(frozen=True)
class Gate:
    symbol: str
    args: tuple[int, ...]


@dataclass(frozen=True)
class Circuit:
    name: str
    inputs: int
    gates: tuple[Gate, ...]
    outputs: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "gates", tuple(self.gates))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        if self.inputs < 0:
            raise ValueError("negative input count")
        k = self.inputs
        for j, gate in enumerate(self.gates):
            for a in gate.args:
                if not (0 <= a < k + j):
                    raise ValueError(
                        f"gate {j + 1} ({gate.symbol}) references node {a}, "
                        f"which is not an input or an earlier gate"
                    )
        if not self.outputs:
            raise ValueError("a circuit needs at least one output")
        top = k + len(self.gates)
        for a in self.outputs:
            if not (0 <= a < top):
                raise ValueError(f"output references unknown node {a}")

    @property
    def size(self) -> int:
        """Number of vertices: inputs plus gates."""
        return self.inputs + len(self.gates)

    def symbols(self) -> set[str]:
        return {g.symbol for g in self.gates}


@dataclass(frozen=True)
class SignatureExtension:
    """Derived operation symbols defined by single-output circuits.

    Definitions may reference other symbols of the same extension as
    long as the references are acyclic; a topological order over the
    derived symbols is computed at construction and reused by
    evaluation and inlining.
    """

    definitions: Mapping[str, Circuit]
    order: tuple[str, ...] = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "definitions", dict(self.definitions))
        for name, circ in self.definitions.items():
            if len(circ.outputs) != 1:
                raise ValueError(f"definition of {name!r} must have exactly one output")
        # topological order, raising on cycles
        temp: set[str] = set()
        done: list[str] = []
        done_set: set[str] = set()

        def visit(name: str) -> None:
            if name in done_set:
                return
            if name in temp:
                raise ValueError(f"cyclic definition involving derived symbol {name!r}")
            temp.add(name)
            for sym in self.definitions[name].symbols():
                if sym in self.definitions:
                    visit(sym)
            temp.discard(name)
            done.append(name)
            done_set.add(name)

        for name in sorted(self.definitions):
            visit(name)
        object.__setattr__(self, "order", tuple(done))

    def __contains__(self, symbol: str) -> bool:
        return symbol in self.definitions

    def __getitem__(self, symbol: str) -> Circuit:
        return self.definitions[symbol]


def _resolve(algebra: Algebra) -> dict[str, OperationTable]:
    return {op.name: op for op in algebra.operations}


def evaluate(
    circuit: Circuit,
    algebra: Algebra,
    inputs: Sequence[int],
    extension: SignatureExtension | None = None,
    on_gate: Callable[[int], None] | None = None,
) -> tuple[int, ...]:
    """Evaluate on one input tuple in a single topological pass.

    Gates labeled by algebra operations are table lookups; gates labeled
    by extension symbols evaluate their defining circuits recursively.
    ``on_gate`` is a test hook called once per visited gate.
    """
    if len(inputs) != circuit.inputs:
        raise ValueError(f"expected {circuit.inputs} inputs, got {len(inputs)}")
    ops = _resolve(algebra)
    values: list[int] = list(inputs)
    for j, gate in enumerate(circuit.gates):
        args = [values[a] for a in gate.args]
        if on_gate is not None:
            on_gate(j)
        op = ops.get(gate.symbol)
        if op is not None:
            if len(args) != op.arity:
                raise ValueError(
                    f"gate {j + 1}: symbol {gate.symbol!r} has arity {op.arity}, "
                    f"got {len(args)} arguments"
                )
            values.append(op.value(args))
        elif extension is not None and gate.symbol in extension:
            defc = extension[gate.symbol]
            if defc.inputs != len(args):
                raise ValueError(
                    f"gate {j + 1}: definition of {gate.symbol!r} takes {defc.inputs} "
                    f"inputs, got {len(args)}"
                )
            values.append(evaluate(defc, algebra, args, extension, on_gate)[0])
        else:
            raise ValueError(f"unknown operation symbol {gate.symbol!r}")
    return tuple(values[a] for a in circuit.outputs)


def _input_columns(n: int, k: int, total: int) -> list[np.ndarray]:
    dtype = _pool_dtype(n)
    cols = []
    for i in range(k):
        period = n ** (k - 1 - i)
        cols.append(((np.arange(total) // period) % n).astype(dtype))
    return cols


def _symbol_tables(
    algebra: Algebra, extension: SignatureExtension | None
) -> tuple[dict[str, np.ndarray], dict[str, int]]:
    """Flat numpy tables for all base and derived symbols."""
    tables: dict[str, np.ndarray] = {}
    arities: dict[str, int] = {}
    dtype = _pool_dtype(algebra.size)
    for op in algebra.operations:
        tables[op.name] = np.asarray(op.table, dtype=dtype)
        arities[op.name] = op.arity
    if extension is not None:
        for name in extension.order:
            defc = extension[name]
            tbl = _evaluate_all_arrays(defc, algebra, tables, arities)[0]
            tables[name] = tbl
            arities[name] = defc.inputs
    return tables, arities


def _evaluate_all_arrays(
    circuit: Circuit,
    algebra: Algebra,
    tables: dict[str, np.ndarray],
    arities: dict[str, int],
) -> list[np.ndarray]:
    n = algebra.size
    k = circuit.inputs
    total = n**k
    # value arrays are dropped as soon as no later gate or output needs them
    last_use = [-1] * (k + len(circuit.gates))
    for j, gate in enumerate(circuit.gates):
        for a in gate.args:
            last_use[a] = j
    for a in circuit.outputs:
        last_use[a] = len(circuit.gates)

    values: dict[int, np.ndarray] = {}
    cols = _input_columns(n, k, total)
    for i in range(k):
        if last_use[i] >= 0:
            values[i] = cols[i]
    del cols

    for j, gate in enumerate(circuit.gates):
        tbl = tables.get(gate.symbol)
        if tbl is None:
            raise ValueError(f"unknown operation symbol {gate.symbol!r}")
        if len(gate.args) != arities[gate.symbol]:
            raise ValueError(
                f"gate {j + 1}: symbol {gate.symbol!r} has arity {arities[gate.symbol]}, "
                f"got {len(gate.args)} arguments"
            )
        idx = values[gate.args[0]].astype(np.int64)
        for a in gate.args[1:]:
            idx *= n
            idx += values[a]
        node = k + j
        if last_use[node] > j or node in circuit.outputs:
            values[node] = tbl[idx]
        for a in set(gate.args):
            if last_use[a] == j:
                values.pop(a, None)
    return [values[a] for a in circuit.outputs]


def evaluate_all(
    circuit: Circuit,
    algebra: Algebra,
    extension: SignatureExtension | None = None,
    max_entries: int = 1 << 20,
) -> tuple[tuple[int, ...], ...]:
    """Full truth tables of a circuit, one per output, row-major like OperationTable.

    Raises BudgetError when n**k exceeds ``max_entries``.
    """
    n = algebra.size
    if n**circuit.inputs > max_entries:
        raise BudgetError(
            f"evaluate_all over {n}^{circuit.inputs} inputs exceeds the budget of {max_entries}"
        )
    tables, arities = _symbol_tables(algebra, extension)
    arrays = _evaluate_all_arrays(circuit, algebra, tables, arities)
    return tuple(tuple(int(v) for v in arr) for arr in arrays)


def output_table(
    circuit: Circuit,
    algebra: Algebra,
    extension: SignatureExtension | None = None,
    name: str = "term",
    max_entries: int = 1 << 20,
) -> OperationTable:
    """The single output of ``circuit`` packaged as an OperationTable."""
    if len(circuit.outputs) != 1:
        raise ValueError("output_table needs a single-output circuit")
    (table,) = evaluate_all(circuit, algebra, extension, max_entries)
    return OperationTable(name, circuit.inputs, table)


def derivation_circuit(
    derivation: Derivation,
    outputs: Sequence[int],
    algebra: Algebra,
    name: str = "derived",
    inputs: int | None = None,
    input_of_element: Sequence[int] | None = None,
) -> Circuit:
    """Circuit replaying a derivation: one gate per step, outputs select elements.

    By default the circuit has one input per (distinct) generator.  When
    the derivation came from a deduplicated generator list the caller
    can request more inputs and say which input feeds each generator
    element via ``input_of_element``.
    """
    g = derivation.generator_count
    if inputs is None:
        inputs = g
        input_of_element = list(range(g))
    if input_of_element is None or len(input_of_element) != g:
        raise ValueError("input_of_element must map every generator element to an input")
    node_of_element = list(input_of_element)
    gates = []
    for op_i, parents in derivation.steps:
        op = algebra.operations[op_i]
        gates.append(Gate(op.name, tuple(node_of_element[p] for p in parents)))
        node_of_element.append(inputs + len(gates) - 1)
    try:
        out_refs = tuple(node_of_element[o] for o in outputs)
    except IndexError:
        raise ValueError("output index beyond the derived elements") from None
    return Circuit(name, inputs, tuple(gates), out_refs)


def from_derivation(
    derivation: Derivation,
    outputs: Sequence[int],
    algebra: Algebra,
    name: str = "derived",
) -> Circuit:
    """Public form of derivation_circuit with one input per generator."""
    return derivation_circuit(derivation, outputs, algebra, name)


def inline(circuit: Circuit, extension: SignatureExtension, name: str | None = None) -> Circuit:
    """Substitute extension-symbol gates by copies of their definitions.

    Each referencing gate gets its own copy of the (recursively
    flattened) definition, so no sharing is introduced across gates;
    sharing already present inside a definition is kept.  The result
    contains no symbols of ``extension``.
    """
    flat: dict[str, Circuit] = {}
    for sym in extension.order:
        flat[sym] = _substitute(extension[sym], flat, extension)
    return _substitute(circuit, flat, extension, name or circuit.name)


def _substitute(
    circuit: Circuit,
    flat_defs: dict[str, Circuit],
    extension: SignatureExtension,
    name: str | None = None,
) -> Circuit:
    k = circuit.inputs
    new_gates: list[Gate] = []
    mapping: dict[int, int] = {}

    def resolve(ref: int) -> int:
        return ref if ref < k else mapping[ref]

    for j, gate in enumerate(circuit.gates):
        args = tuple(resolve(a) for a in gate.args)
        if gate.symbol not in extension:
            new_gates.append(Gate(gate.symbol, args))
            mapping[k + j] = k + len(new_gates) - 1
            continue
        defc = flat_defs[gate.symbol]
        if defc.inputs != len(args):
            raise ValueError(
                f"gate {j + 1}: definition of {gate.symbol!r} takes {defc.inputs} "
                f"inputs, got {len(args)}"
            )
        submap: dict[int, int] = {i: args[i] for i in range(defc.inputs)}
        for dj, dgate in enumerate(defc.gates):
            dargs = tuple(submap[a] for a in dgate.args)
            new_gates.append(Gate(dgate.symbol, dargs))
            submap[defc.inputs + dj] = k + len(new_gates) - 1
        mapping[k + j] = submap[defc.outputs[0]]
    outputs = tuple(resolve(a) for a in circuit.outputs)
    return Circuit(name or circuit.name, k, tuple(new_gates), outputs)


def term_node_count(circuit: Circuit, output: int | None = None) -> int:
    """Node count of the fully expanded term for a (single) output."""
    if output is None:
        if len(circuit.outputs) != 1:
            raise ValueError("pick an output for a multi-output circuit")
        output = circuit.outputs[0]
    k = circuit.inputs
    sizes = [1] * k
    for gate in circuit.gates:
        sizes.append(1 + sum(sizes[a] for a in gate.args))
    return sizes[output]


def to_term_string(
    circuit: Circuit,
    budget: int,
    var_names: Sequence[str] | None = None,
) -> str | None:
    """Expand a single-output circuit to a term, or None past the budget.

    The expansion can be exponentially larger than the circuit, hence
    the mandatory node budget.  Variables print as x1..xk unless
    ``var_names`` overrides them.
    """
    if len(circuit.outputs) != 1:
        raise ValueError("term expansion needs a single-output circuit")
    if term_node_count(circuit) > budget:
        return None
    k = circuit.inputs
    if var_names is None:
        var_names = [f"x{i + 1}" for i in range(k)]
    if len(var_names) != k:
        raise ValueError("need one variable name per input")
    texts: list[str] = list(var_names)
    for gate in circuit.gates:
        texts.append(f"{gate.symbol}({','.join(texts[a] for a in gate.args)})")
    return texts[circuit.outputs[0]]


def _ref_to_label(ref: int, k: int) -> str:
    return f"x{ref + 1}" if ref < k else f"g{ref - k + 1}"


def _label_to_ref(label: str, k: int, gates_so_far: int, lineno: str) -> int:
    if label.startswith("x") and label[1:].isdigit():
        i = int(label[1:]) - 1
        if 0 <= i < k:
            return i
        raise ParseError(f"{lineno}: input {label} out of range (circuit has {k} inputs)")
    if label.startswith("g") and label[1:].isdigit():
        j = int(label[1:]) - 1
        if 0 <= j < gates_so_far:
            return k + j
        raise ParseError(f"{lineno}: gate reference {label} is not an earlier gate")
    raise ParseError(f"{lineno}: bad node reference {label!r}")


def parse_circuit(text: str) -> Circuit:
    """Parse the circuit file format; see the module docstring."""
    name = None
    k = None
    gates: list[Gate] = []
    outputs: tuple[int, ...] | None = None
    for n_line, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        where = f"line {n_line}"
        if toks[0] == "circuit":
            if len(toks) != 2 or name is not None:
                raise ParseError(f"{where}: expected a single 'circuit <name>' header")
            name = toks[1]
        elif toks[0] == "inputs":
            if name is None:
                raise ParseError(f"{where}: 'inputs' before the circuit header")
            if len(toks) != 2 or not toks[1].isdigit():
                raise ParseError(f"{where}: expected 'inputs <k>'")
            k = int(toks[1])
        elif toks[0] == "gate":
            if k is None:
                raise ParseError(f"{where}: 'gate' before 'inputs'")
            if outputs is not None:
                raise ParseError(f"{where}: gate after outputs")
            if len(toks) < 3:
                raise ParseError(f"{where}: expected 'gate g<j> <opname> <refs...>'")
            expect = f"g{len(gates) + 1}"
            if toks[1] != expect:
                raise ParseError(f"{where}: gates must be numbered consecutively, expected {expect}")
            args = tuple(_label_to_ref(t, k, len(gates), where) for t in toks[3:])
            gates.append(Gate(toks[2], args))
        elif toks[0] == "outputs":
            if k is None:
                raise ParseError(f"{where}: 'outputs' before 'inputs'")
            if len(toks) < 2:
                raise ParseError(f"{where}: at least one output is required")
            outputs = tuple(_label_to_ref(t, k, len(gates), where) for t in toks[1:])
        else:
            raise ParseError(f"{where}: unknown directive {toks[0]!r}")
    if name is None or k is None or outputs is None:
        raise ParseError("circuit file needs 'circuit', 'inputs' and 'outputs' lines")
    return Circuit(name, k, tuple(gates), outputs)


def serialize_circuit(circuit: Circuit) -> str:
    lines = [f"circuit {circuit.name}", f"inputs {circuit.inputs}"]
    k = circuit.inputs
    for j, gate in enumerate(circuit.gates):
        refs = " ".join(_ref_to_label(a, k) for a in gate.args)
        lines.append(f"gate g{j + 1} {gate.symbol} {refs}".rstrip())
    lines.append("outputs " + " ".join(_ref_to_label(a, k) for a in circuit.outputs))
    return "\n".join(lines) + "\n"
