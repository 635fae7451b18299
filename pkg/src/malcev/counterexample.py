"""The family A_n: local minority terms everywhere, no global minority term.

A_n lives on n*4 elements, encoded (i, b) -> 4*i + b with block index
i in 0..n-1 and arithmetic part b in 0..3.  Its n ternary operations
combine a fixed minority operation on the blocks with bitwise-xor
arithmetic, except that operation i uses x - y + z (mod 4) arithmetic
when all three block indices equal i.  Every (n-1)-element subset avoids
some block i, so the matching operation is a minority there; globally no
minority term exists, witnessed (for odd n) by a relation R in A_n^{3n}
cut out by block-parity equality and an arithmetic checksum: R contains
three tuples whose coordinatewise minority image falls outside R.

The verifiers here turn each of those statements into an executable
check: exhaustive where the instance is desk sized, seeded sampling
where it is not.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations, product

import numpy as np

from malcev.algebra import Algebra, OperationTable
from malcev.subpower import Budget, generate


def encode_element(block: int, arith: int) -> int:
    return 4 * block + arith


def decode_element(e: int) -> tuple[int, int]:
    return divmod(e, 4)


def paper_minority_on_range(n: int) -> OperationTable:
    """The concrete minority operation on 0..n-1 used inside A_n:
    x if y = z, else y if x = z, else z."""
    if n < 1:
        raise ValueError("need at least one element")
    table = []
    for x in range(n):
        for y in range(n):
            for z in range(n):
                if y == z:
                    table.append(x)
                elif x == z:
                    table.append(y)
                else:
                    table.append(z)
    return OperationTable("m", 3, tuple(table))


def verify_observation() -> bool:
    """Exhaustive check that (x^y^z) - (x-y+z) mod 4 lies in {0,2} and
    depends only on the parities of x, y, z."""
    diff_of_class: dict[tuple[int, int, int], int] = {}
    for x, y, z in product(range(4), repeat=3):
        diff = ((x ^ y ^ z) - (x - y + z)) % 4
        if diff not in (0, 2):
            return False
        cls = (x % 2, y % 2, z % 2)
        if diff_of_class.setdefault(cls, diff) != diff:
            return False
    return len(diff_of_class) == 8


def build_An(n: int) -> Algebra:
    """The algebra A_n with operations t1..tn; requires n > 2.

    Odd n is the fully verified case; even n constructs the same way
    but the no-minority evidence is heuristic (see verify functions).
    """
    if n <= 2:
        raise ValueError("the family is defined for n > 2")
    m = paper_minority_on_range(n)
    size = 4 * n
    blocks = np.arange(size) // 4
    ariths = np.arange(size) % 4
    b1 = blocks[:, None, None]
    b2 = blocks[None, :, None]
    b3 = blocks[None, None, :]
    a1 = ariths[:, None, None]
    a2 = ariths[None, :, None]
    a3 = ariths[None, None, :]
    m_np = np.asarray(m.table).reshape(n, n, n)
    xor_block = m_np[b1, b2, b3]
    xor_arith = a1 ^ a2 ^ a3
    special_arith = (a1 - a2 + a3) % 4
    ops = []
    for i in range(n):
        special = (b1 == i) & (b2 == i) & (b3 == i)
        block = np.where(special, i, xor_block)
        arith = np.where(special, special_arith, xor_arith)
        table = 4 * block + arith
        ops.append(OperationTable(f"t{i + 1}", 3, tuple(int(v) for v in table.ravel())))
    return Algebra(f"a{n}", size, tuple(ops))


def first_coordinate_pattern(n: int) -> tuple[int, ...]:
    """Block indices 0..n-1 repeated three times: the fixed first
    coordinates of every tuple of R."""
    return tuple(list(range(n)) * 3)


def in_R(n: int, candidate: tuple[int, ...]) -> bool:
    """Membership in R: fixed block pattern, equal parities within each
    of the three n-blocks, and arithmetic sum congruent to 2 mod 4."""
    if len(candidate) != 3 * n:
        return False
    pattern = first_coordinate_pattern(n)
    blocks = [decode_element(e)[0] for e in candidate]
    if tuple(blocks) != pattern:
        return False
    ariths = [decode_element(e)[1] for e in candidate]
    for k in range(3):
        seg = ariths[k * n : (k + 1) * n]
        if len({v % 2 for v in seg}) != 1:
            return False
    return sum(ariths) % 4 == 2


def _tuple_from_ariths(n: int, ariths) -> tuple[int, ...]:
    pattern = first_coordinate_pattern(n)
    return tuple(encode_element(b, int(a)) for b, a in zip(pattern, ariths))


def witness_tuples(n: int) -> tuple[tuple[int, ...], ...]:
    """(v1, v2, v3, v0): three members of R whose coordinatewise minority
    image is v0, which is not in R."""
    if n <= 2:
        raise ValueError("the family is defined for n > 2")
    zeros = [0] * n
    ones = [1] * n
    v1 = _tuple_from_ariths(n, zeros + ones + ones)
    v2 = _tuple_from_ariths(n, ones + zeros + ones)
    v3 = _tuple_from_ariths(n, ones + ones + zeros)
    v0 = _tuple_from_ariths(n, zeros * 3)
    return v1, v2, v3, v0


def minority_image(triple: tuple[tuple[int, ...], ...]) -> tuple[int, ...]:
    """Coordinatewise image under any minority operation, defined where
    each coordinate has at most two distinct values."""
    x, y, z = triple
    out = []
    for e1, e2, e3 in zip(x, y, z):
        if e2 == e3:
            out.append(e1)
        elif e1 == e3:
            out.append(e2)
        elif e1 == e2:
            out.append(e3)
        else:
            raise ValueError("coordinate with three distinct values has no forced minority image")
    return tuple(out)


@dataclass(frozen=True)
class VerificationReport:
    claim: str
    status: str  # "pass" | "fail" | "heuristic-pass"
    checked: int
    failed: int
    first_failure: object | None = None
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status in ("pass", "heuristic-pass")

    def lines(self) -> list[str]:
        out = [f"{self.claim}: {self.status} ({self.checked} checked, {self.failed} failed)"]
        for k, v in self.details.items():
            out.append(f"  {k}: {v}")
        if self.first_failure is not None:
            out.append(f"  first failure: {self.first_failure}")
        return out


def verify_local_minority(
    n: int,
    subset_cap: int = 10**5,
    samples: int = 10**4,
    seed: int = 0,
) -> VerificationReport:
    """Every (n-1)-element subset admits some t_i acting as a minority on it.

    Exhaustive over all subsets when their count fits ``subset_cap``,
    otherwise over ``samples`` seeded uniform subsets.
    """
    algebra = build_An(n)
    size = algebra.size
    from math import comb

    total = comb(size, n - 1)
    exhaustive = total <= subset_cap
    if exhaustive:
        subsets = combinations(range(size), n - 1)
        planned = total
    else:
        rng = np.random.default_rng(seed)
        subsets = (
            tuple(int(v) for v in rng.choice(size, size=n - 1, replace=False))
            for _ in range(samples)
        )
        planned = samples

    checked = 0
    failed = 0
    first_failure = None
    for subset in subsets:
        blocks = {decode_element(e)[0] for e in subset}
        i = next(b for b in range(n) if b not in blocks)
        op = algebra.operations[i]
        ok = True
        for x in subset:
            for y in subset:
                if (
                    op.value((y, x, x)) != y
                    or op.value((x, y, x)) != y
                    or op.value((x, x, y)) != y
                ):
                    ok = False
                    break
            if not ok:
                break
        checked += 1
        if not ok:
            failed += 1
            if first_failure is None:
                first_failure = subset
    status = "pass" if failed == 0 else "fail"
    if not exhaustive and failed == 0:
        status = "heuristic-pass"
    return VerificationReport(
        claim=f"local minority on all {n - 1}-element subsets of A_{n}",
        status=status,
        checked=checked,
        failed=failed,
        first_failure=first_failure,
        details={"exhaustive": exhaustive, "planned": planned},
    )


def sample_R(n: int, count: int, rng: np.random.Generator) -> tuple[np.ndarray, int, int]:
    """Seeded sampler for arithmetic parts of R members.

    Chooses the three block parities and all high bits uniformly, then
    rejects on the checksum; the acceptance rate is exactly 1/4.
    Returns (array [count, 3n] of values 0..3, attempts, accepted) where
    accepted/attempts is the unbiased empirical acceptance rate.
    """
    out = np.empty((count, 3 * n), dtype=np.int64)
    got = 0
    attempts = 0
    accepted = 0
    while got < count:
        batch = max(64, int((count - got) * 4.4))
        attempts += batch
        parities = rng.integers(0, 2, size=(batch, 3))
        high = rng.integers(0, 2, size=(batch, 3 * n))
        vals = 2 * high + np.repeat(parities, n, axis=1)
        rows = vals[vals.sum(axis=1) % 4 == 2]
        accepted += len(rows)
        take = min(count - got, len(rows))
        out[got : got + take] = rows[:take]
        got += take
    return out, attempts, accepted


def verify_R_preservation(
    n: int,
    samples: int = 10**6,
    seed: int = 0,
) -> VerificationReport:
    """Sampled check that every t_i maps R^3 into R (proved for odd n).

    Draws triples of R members, applies each operation coordinatewise
    and tests membership again.  For even n the relation is genuinely
    not preserved; such runs carry the heuristic label and report their
    failures honestly.
    """
    algebra = build_An(n)
    heuristic = n % 2 == 0
    rng = np.random.default_rng(seed)
    pattern = np.asarray(first_coordinate_pattern(n))
    tables = [np.asarray(op.table) for op in algebra.operations]
    size = algebra.size

    checked = 0
    failed = 0
    first_failure = None
    attempts_total = 0
    accepted_total = 0
    batch = max(1, min(samples, 10**5))
    done = 0
    while done < samples:
        cnt = min(batch, samples - done)
        ar1, at1, ac1 = sample_R(n, cnt, rng)
        ar2, at2, ac2 = sample_R(n, cnt, rng)
        ar3, at3, ac3 = sample_R(n, cnt, rng)
        attempts_total += at1 + at2 + at3
        accepted_total += ac1 + ac2 + ac3
        e1 = 4 * pattern + ar1
        e2 = 4 * pattern + ar2
        e3 = 4 * pattern + ar3
        base = (e1 * size + e2) * size + e3
        for op_i in range(n):
            res = tables[op_i][base]
            ra = res % 4
            # block pattern is preserved automatically; check parities + checksum
            par_ok = np.ones(cnt, dtype=bool)
            for k in range(3):
                seg = ra[:, k * n : (k + 1) * n] % 2
                par_ok &= (seg == seg[:, :1]).all(axis=1)
            sum_ok = ra.sum(axis=1) % 4 == 2
            blocks_ok = (res // 4 == pattern).all(axis=1)
            ok = par_ok & sum_ok & blocks_ok
            bad = int((~ok).sum())
            checked += cnt
            failed += bad
            if bad and first_failure is None:
                i = int(np.nonzero(~ok)[0][0])
                first_failure = {
                    "op": algebra.operations[op_i].name,
                    "arguments": [
                        tuple(int(v) for v in e1[i]),
                        tuple(int(v) for v in e2[i]),
                        tuple(int(v) for v in e3[i]),
                    ],
                    "result": tuple(int(v) for v in res[i]),
                }
        done += cnt

    if failed == 0:
        status = "heuristic-pass" if heuristic else "pass"
    else:
        status = "fail"
    return VerificationReport(
        claim=f"R is closed under the operations of A_{n} (sampled)",
        status=status,
        checked=checked,
        failed=failed,
        first_failure=first_failure,
        details={
            "samples": samples,
            "seed": seed,
            "heuristic": heuristic,
            "sampler_attempts": attempts_total,
            "sampler_acceptance": round(accepted_total / attempts_total, 4) if attempts_total else None,
        },
    )


def enumerate_R_size(n: int, max_space: int = 1 << 20) -> int:
    """|R| by direct enumeration of all 4^(3n) arithmetic vectors."""
    if 4 ** (3 * n) > max_space:
        raise ValueError("R enumeration too large; raise max_space deliberately")
    count = 0
    for vec in product(range(4), repeat=3 * n):
        ok = all(len({v % 2 for v in vec[k * n : (k + 1) * n]}) == 1 for k in range(3))
        if ok and sum(vec) % 4 == 2:
            count += 1
    return count


def verify_no_minority_evidence(
    n: int,
    max_elements: int = 10**5,
    max_applications: int | None = None,
    r_size_bound: int | None = None,
) -> VerificationReport:
    """Budgeted closure evidence that A_n has no minority term (odd n).

    Generates the subpower of A_n^(3n) from the witness tuples v1,v2,v3
    and checks that every generated element stays in R, that v0 is never
    generated although it is the coordinatewise minority image of the
    generators, and that in_R(v0) is false.
    """
    if n % 2 == 0:
        raise ValueError("the closure evidence is only claimed for odd n")
    algebra = build_An(n)
    v1, v2, v3, v0 = witness_tuples(n)
    budget = Budget(
        max_elements=max_elements,
        max_applications=max_applications if max_applications is not None else Budget().max_applications,
    )
    res = generate(algebra, 3 * n, [v1, v2, v3], target=v0, budget=budget)

    outside = [e for e in res.elements if not in_R(n, e)]
    image = minority_image((v1, v2, v3))
    checks = {
        "all generated elements in R": not outside,
        "v0 never generated": res.target_index is None,
        "v0 outside R": not in_R(n, v0),
        "minority image of generators is v0": image == v0,
    }
    if r_size_bound is not None:
        checks[f"closure size <= {r_size_bound}"] = len(res.elements) <= r_size_bound
    failed = sum(1 for ok in checks.values() if not ok)
    first_failure = None
    if outside:
        first_failure = outside[0]
    elif failed:
        first_failure = next(k for k, ok in checks.items() if not ok)
    return VerificationReport(
        claim=f"no-minority closure evidence for A_{n}",
        status="pass" if failed == 0 else "fail",
        checked=len(checks),
        failed=failed,
        first_failure=first_failure,
        details={
            "closure_size": len(res.elements),
            "applications": res.applications,
            "closed": res.closed,
            "exhausted": res.exhausted,
            **{k: v for k, v in checks.items()},
        },
    )
