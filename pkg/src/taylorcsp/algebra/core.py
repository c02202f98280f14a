"""Finite algebras given by operation tables.

Elements of an algebra are the integers ``0..n-1``.  An operation of arity
``m`` is a flat array of length ``n**m`` indexed in mixed radix with the
first argument most significant, so the last argument varies fastest.
Subsets of a universe are handled internally as Python int bitmasks.
"""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import BoundExceededError, ContractError, ParseError, SignatureMismatchError

DEFAULT_SUBUNIVERSE_BOUND = 12
DEFAULT_CONGRUENCE_BOUND = 81
DEFAULT_LATTICE_LIMIT = 5000
PARTITION_FILTER_LIMIT = 6
MAX_TRANSLATION_ROWS = 2_000_000


def mask_of(elements: Iterable[int]) -> int:
    m = 0
    for e in elements:
        m |= 1 << int(e)
    return m


def elements_of(mask: int) -> Tuple[int, ...]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return tuple(out)


class OperationTable:
    __slots__ = ("name", "arity", "size", "table")

    def __init__(self, name: str, arity: int, size: int, table):
        table = np.asarray(table, dtype=np.int64).reshape(-1)
        if arity < 0:
            raise ContractError("arity must be non-negative")
        if len(table) != size**arity:
            raise ContractError(
                f"operation {name}: table has {len(table)} entries, expected {size**arity}")
        if len(table) and (table.min() < 0 or table.max() >= size):
            raise ContractError(f"operation {name}: output out of range")
        table.setflags(write=False)
        self.name = name
        self.arity = arity
        self.size = size
        self.table = table

    @classmethod
    def from_function(cls, name, arity, size, fn):
        grid = itertools.product(range(size), repeat=arity)
        return cls(name, arity, size, [fn(*args) for args in grid])

    def cube(self) -> np.ndarray:
        return self.table.reshape((self.size,) * self.arity)

    def index(self, args) -> int:
        idx = 0
        for a in args:
            idx = idx * self.size + int(a)
        return idx

    def __call__(self, *args) -> int:
        return int(self.table[self.index(args)])

    def apply(self, columns: Sequence[np.ndarray]) -> np.ndarray:
        """Vectorised evaluation: ``columns[i]`` holds the i-th arguments."""
        idx = np.zeros(np.shape(columns[0]), dtype=np.int64) if columns else np.zeros((), np.int64)
        for col in columns:
            idx = idx * self.size + col
        return self.table[idx]

    def is_idempotent(self) -> bool:
        diag = np.arange(self.size)
        return bool(np.array_equal(self.apply([diag] * self.arity), diag)) if self.arity else False

    def __eq__(self, other):
        return (isinstance(other, OperationTable) and self.name == other.name
                and self.arity == other.arity and self.size == other.size
                and np.array_equal(self.table, other.table))

    def __hash__(self):
        return hash((self.name, self.arity, self.size, self.table.tobytes()))

    def __repr__(self):
        return f"OperationTable({self.name!r}, arity={self.arity}, size={self.size})"


class FiniteAlgebra:
    """Universe ``0..size-1`` with a tuple of basic operations.

    ``labels`` optionally records where each element came from (a block of a
    quotient, a tuple of a product, an element of a parent algebra).
    """

    def __init__(self, size: int, operations: Sequence[OperationTable], labels=None):
        if size < 1:
            raise ContractError("universe must be nonempty")
        for op in operations:
            if op.size != size:
                raise ContractError(f"operation {op.name} is defined on a different universe")
        self.size = size
        self.operations = tuple(operations)
        self.labels = tuple(labels) if labels is not None else None
        self._cache: Dict = {}

    @cached_property
    def fingerprint(self) -> str:
        h = hashlib.sha1(str(self.size).encode())
        for op in self.operations:
            h.update(f"{op.name}/{op.arity}".encode())
            h.update(op.table.tobytes())
        return h.hexdigest()

    def signature(self) -> Tuple[Tuple[str, int], ...]:
        return tuple((op.name, op.arity) for op in self.operations)

    def operation(self, name) -> OperationTable:
        for op in self.operations:
            if op.name == name:
                return op
        raise KeyError(name)

    def is_idempotent(self) -> bool:
        return all(op.is_idempotent() for op in self.operations)

    @property
    def full_mask(self) -> int:
        return (1 << self.size) - 1

    def __repr__(self):
        ops = ", ".join(f"{o.name}/{o.arity}" for o in self.operations)
        return f"FiniteAlgebra(size={self.size}, ops=[{ops}])"

    def __eq__(self, other):
        return isinstance(other, FiniteAlgebra) and self.fingerprint == other.fingerprint

    def __hash__(self):
        return hash(self.fingerprint)


# ---------------------------------------------------------------------------
# subuniverses


def _close_mask(alg: FiniteAlgebra, mask: int) -> int:
    while True:
        elems = np.array(elements_of(mask), dtype=np.int64)
        new = mask
        for op in alg.operations:
            if op.arity == 0:
                new |= 1 << int(op.table[0])
                continue
            idx = np.ix_(*([elems] * op.arity))
            outs = np.unique(op.cube()[idx])
            new |= mask_of(outs.tolist())
        if new == mask:
            return mask
        mask = new


def generate_subuniverse(alg: FiniteAlgebra, seed: Iterable[int]) -> Tuple[int, ...]:
    """Least superset of ``seed`` closed under every basic operation."""
    seed = list(seed)
    if not seed:
        raise ContractError("seed must be nonempty")
    if any(s < 0 or s >= alg.size for s in seed):
        raise ContractError("seed element outside the universe")
    return elements_of(closure_mask(alg, mask_of(seed)))


def closure_mask(alg: FiniteAlgebra, mask: int) -> int:
    cache = alg._cache.setdefault("closure", {})
    hit = cache.get(mask)
    if hit is None:
        hit = _close_mask(alg, mask)
        cache[mask] = hit
    return hit


def subuniverse_masks(alg: FiniteAlgebra, within: Optional[int] = None,
                      bound: int = DEFAULT_SUBUNIVERSE_BOUND) -> List[int]:
    """All nonempty subuniverses contained in ``within`` (default: everything)."""
    if within is None:
        within = alg.full_mask
    key = ("subuniverses", within)
    if key in alg._cache:
        return alg._cache[key]
    size = bin(within).count("1")
    if size > bound:
        raise BoundExceededError("subuniverse enumeration universe", size, bound)
    # every subuniverse arises by adding generators one at a time
    found = set()
    frontier = []
    for a in elements_of(within):
        s = closure_mask(alg, 1 << a)
        if s & ~within:
            raise ContractError("the given set is not a subuniverse")
        if s not in found:
            found.add(s)
            frontier.append(s)
    while frontier:
        nxt = []
        for s in frontier:
            for a in elements_of(within & ~s):
                t = closure_mask(alg, s | (1 << a))
                if t not in found:
                    found.add(t)
                    nxt.append(t)
        frontier = nxt
    result = sorted(found, key=lambda m: (bin(m).count("1"), elements_of(m)))
    alg._cache[key] = result
    return result


def enumerate_subuniverses(alg: FiniteAlgebra, bound: int = DEFAULT_SUBUNIVERSE_BOUND):
    """Every nonempty subuniverse, ordered by size then lexicographically."""
    return [elements_of(m) for m in subuniverse_masks(alg, bound=bound)]


def is_subuniverse(alg: FiniteAlgebra, elements: Iterable[int]) -> bool:
    m = mask_of(elements)
    return m != 0 and closure_mask(alg, m) == m


def subalgebra(alg: FiniteAlgebra, elements: Iterable[int]) -> FiniteAlgebra:
    """The subalgebra on a closed subset, relabelled to ``0..k-1``.

    Labels of the result are the original element indices.
    """
    elems = tuple(sorted(set(int(e) for e in elements)))
    key = ("sub", elems)
    if key in alg._cache:
        return alg._cache[key]
    if not is_subuniverse(alg, elems):
        raise ContractError(f"{elems} is not a subuniverse")
    pos = np.full(alg.size, -1, dtype=np.int64)
    pos[list(elems)] = np.arange(len(elems))
    arr = np.array(elems, dtype=np.int64)
    ops = []
    for op in alg.operations:
        sub = op.cube()[np.ix_(*([arr] * op.arity))] if op.arity else op.table
        ops.append(OperationTable(op.name, op.arity, len(elems), pos[np.asarray(sub).reshape(-1)]))
    out = FiniteAlgebra(len(elems), ops, labels=elems)
    alg._cache[key] = out
    return out


# ---------------------------------------------------------------------------
# congruences


@dataclass(frozen=True)
class Congruence:
    """Partition given as a block id per element, ids numbered by least element."""

    labels: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", _normalize(self.labels))

    @classmethod
    def identity(cls, n):
        return cls(tuple(range(n)))

    @classmethod
    def full(cls, n):
        return cls((0,) * n)

    @classmethod
    def from_blocks(cls, n, blocks):
        labels = [-1] * n
        for i, b in enumerate(blocks):
            for e in b:
                labels[e] = i
        if min(labels) < 0:
            raise ContractError("blocks do not cover the universe")
        return cls(tuple(labels))

    @property
    def size(self):
        return len(self.labels)

    @property
    def num_blocks(self):
        return max(self.labels) + 1 if self.labels else 0

    def blocks(self) -> Tuple[Tuple[int, ...], ...]:
        out = [[] for _ in range(self.num_blocks)]
        for e, b in enumerate(self.labels):
            out[b].append(e)
        return tuple(tuple(b) for b in out)

    def block_masks(self) -> Tuple[int, ...]:
        return tuple(mask_of(b) for b in self.blocks())

    def related(self, a, b) -> bool:
        return self.labels[a] == self.labels[b]

    def is_identity(self):
        return self.num_blocks == self.size

    def is_full(self):
        return self.num_blocks == 1

    def meet(self, other: "Congruence") -> "Congruence":
        return Congruence(tuple(zip(self.labels, other.labels)))

    def join(self, other: "Congruence") -> "Congruence":
        uf = _UnionFind(self.size)
        for lab in (self.labels, other.labels):
            first = {}
            for e, b in enumerate(lab):
                if b in first:
                    uf.union(first[b], e)
                else:
                    first[b] = e
        return Congruence(tuple(uf.find(e) for e in range(self.size)))

    def __le__(self, other: "Congruence") -> bool:
        return self.meet(other) == self

    def __lt__(self, other):
        return self != other and self <= other


def _normalize(labels) -> Tuple[int, ...]:
    seen = {}
    out = []
    for b in labels:
        if b not in seen:
            seen[b] = len(seen)
        out.append(seen[b])
    return tuple(out)


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        p = self.parent
        while p[a] != a:
            p[a] = p[p[a]]
            a = p[a]
        return a

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if ra > rb:
            ra, rb = rb, ra
        self.parent[rb] = ra
        return True


def basic_translations(alg: FiniteAlgebra) -> np.ndarray:
    """Distinct unary polynomials obtained by fixing all but one argument of a basic operation."""
    if "translations" in alg._cache:
        return alg._cache["translations"]
    rows = [np.arange(alg.size, dtype=np.int64)[None, :]]
    count = sum(op.arity * alg.size ** (op.arity - 1) for op in alg.operations if op.arity)
    if count > MAX_TRANSLATION_ROWS:
        raise BoundExceededError("basic translations", count, MAX_TRANSLATION_ROWS)
    for op in alg.operations:
        if op.arity == 0:
            continue
        cube = op.cube()
        for pos in range(op.arity):
            moved = np.moveaxis(cube, pos, -1).reshape(-1, alg.size)
            rows.append(np.unique(moved, axis=0))
    out = np.unique(np.concatenate(rows, axis=0), axis=0)
    alg._cache["translations"] = out
    return out


def _close_partition(alg: FiniteAlgebra, uf: _UnionFind) -> Congruence:
    trans = basic_translations(alg)
    n = alg.size
    while True:
        labels = np.array([uf.find(e) for e in range(n)])
        # pairs (rep, member) within each block generate the equivalence
        members = np.flatnonzero(labels != np.arange(n))
        if len(members) == 0:
            return Congruence(tuple(labels.tolist()))
        reps = labels[members]
        img_a = labels[trans[:, reps]]
        img_b = labels[trans[:, members]]
        bad = img_a != img_b
        if not bad.any():
            return Congruence(tuple(labels.tolist()))
        changed = False
        for x, y in zip(trans[:, reps][bad].tolist(), trans[:, members][bad].tolist()):
            changed |= uf.union(x, y)
        if not changed:
            return Congruence(tuple(labels.tolist()))


def congruence_generated_by(alg: FiniteAlgebra, pairs: Iterable[Tuple[int, int]]) -> Congruence:
    uf = _UnionFind(alg.size)
    for a, b in pairs:
        uf.union(int(a), int(b))
    return _close_partition(alg, uf)


def principal_congruence(alg: FiniteAlgebra, a: int, b: int) -> Congruence:
    """Least congruence relating ``a`` and ``b``."""
    if not (0 <= a < alg.size and 0 <= b < alg.size):
        raise ContractError("elements outside the universe")
    key = ("cg", min(a, b), max(a, b))
    if key not in alg._cache:
        alg._cache[key] = congruence_generated_by(alg, [(a, b)])
    return alg._cache[key]


def is_compatible(alg: FiniteAlgebra, cong: Congruence) -> bool:
    """Direct check that a partition is preserved by every basic operation.

    Compatibility in each argument separately is enough because the
    relation is an equivalence.  Works on the raw tables, independently of
    the translation cache used for generation.
    """
    if cong.size != alg.size:
        return False
    lab = np.asarray(cong.labels)
    n = alg.size
    pairs = [(a, b) for a in range(n) for b in range(a + 1, n) if lab[a] == lab[b]]
    if not pairs:
        return True
    left = np.array([p[0] for p in pairs])
    right = np.array([p[1] for p in pairs])
    for op in alg.operations:
        cube = op.cube()
        for pos in range(op.arity):
            moved = np.moveaxis(cube, pos, -1).reshape(-1, n)
            if not np.array_equal(lab[moved[:, left]], lab[moved[:, right]]):
                return False
    return True


def _set_partitions(n):
    def rec(i, labels, nb):
        if i == n:
            yield tuple(labels)
            return
        for b in range(nb + 1):
            labels.append(b)
            yield from rec(i + 1, labels, max(nb, b + 1))
            labels.pop()
    yield from rec(0, [], 0)


@dataclass
class CongruenceLattice:
    congruences: List[Congruence]
    meet: np.ndarray
    join: np.ndarray
    maximal: List[bool]
    minimal: List[bool] = field(default_factory=list)

    def __len__(self):
        return len(self.congruences)

    def index(self, cong: Congruence) -> int:
        return self.congruences.index(cong)

    def maximal_congruences(self) -> List[Congruence]:
        return [c for c, m in zip(self.congruences, self.maximal) if m]


def _all_congruences_by_partitions(alg):
    return [Congruence(p) for p in _set_partitions(alg.size) if is_compatible(alg, Congruence(p))]


def _all_congruences_by_joins(alg, limit):
    n = alg.size
    found = {Congruence.identity(n)}
    principals = set()
    for a in range(n):
        for b in range(a + 1, n):
            principals.add(principal_congruence(alg, a, b))
    found |= principals
    frontier = list(principals)
    principals = sorted(principals, key=lambda c: c.labels)
    while frontier:
        nxt = []
        for c in frontier:
            for p in principals:
                j = c.join(p)
                if j not in found:
                    found.add(j)
                    nxt.append(j)
                    if len(found) > limit:
                        raise BoundExceededError("congruence lattice size", len(found), limit)
        frontier = nxt
    return list(found)


def all_congruences(alg: FiniteAlgebra, method: str = "auto",
                    bound: int = DEFAULT_CONGRUENCE_BOUND,
                    limit: int = DEFAULT_LATTICE_LIMIT) -> List[Congruence]:
    """Every congruence, ordered from finest to coarsest (then by labels)."""
    if alg.size > bound:
        raise BoundExceededError("congruence lattice universe", alg.size, bound)
    if method == "auto":
        method = "partitions" if alg.size <= PARTITION_FILTER_LIMIT else "joins"
    key = ("congruences", method)
    if key not in alg._cache:
        if method == "partitions":
            found = _all_congruences_by_partitions(alg)
        elif method == "joins":
            found = _all_congruences_by_joins(alg, limit)
        else:
            raise ContractError(f"unknown method {method!r}")
        alg._cache[key] = sorted(found, key=lambda c: (-c.num_blocks, c.labels))
    return alg._cache[key]


def congruence_lattice(alg: FiniteAlgebra, method: str = "auto",
                       bound: int = DEFAULT_CONGRUENCE_BOUND) -> CongruenceLattice:
    cons = all_congruences(alg, method=method, bound=bound)
    pos = {c: i for i, c in enumerate(cons)}
    k = len(cons)
    meet = np.zeros((k, k), dtype=np.int64)
    join = np.zeros((k, k), dtype=np.int64)
    for i, a in enumerate(cons):
        for j in range(i, k):
            b = cons[j]
            meet[i, j] = meet[j, i] = pos[a.meet(b)]
            join[i, j] = join[j, i] = pos[a.join(b)]
    top = pos[Congruence.full(alg.size)]
    bottom = pos[Congruence.identity(alg.size)]
    maximal = []
    minimal = []
    for i, c in enumerate(cons):
        if i == top:
            maximal.append(False)
        else:
            maximal.append(not any(j not in (i, top) and join[i, j] == j for j in range(k)))
        if i == bottom:
            minimal.append(False)
        else:
            minimal.append(not any(j not in (i, bottom) and meet[i, j] == j for j in range(k)))
    return CongruenceLattice(cons, meet, join, maximal, minimal)


def maximal_congruences(alg: FiniteAlgebra) -> List[Congruence]:
    """Coatoms of the congruence lattice (empty for a one-element algebra)."""
    if "maximal" not in alg._cache:
        if alg.size == 1:
            alg._cache["maximal"] = []
        else:
            alg._cache["maximal"] = congruence_lattice(alg).maximal_congruences()
    return alg._cache["maximal"]


def is_simple(alg: FiniteAlgebra) -> bool:
    if alg.size < 2:
        raise ContractError("simplicity is not defined for a one-element algebra")
    for a in range(alg.size):
        for b in range(a + 1, alg.size):
            if not principal_congruence(alg, a, b).is_full():
                return False
    return True


def quotient_algebra(alg: FiniteAlgebra, cong: Congruence) -> FiniteAlgebra:
    """Operations induced on blocks; labels are the block contents."""
    if not is_compatible(alg, cong):
        raise ContractError("partition is not a congruence of the algebra")
    lab = np.asarray(cong.labels)
    blocks = cong.blocks()
    reps = np.array([b[0] for b in blocks], dtype=np.int64)
    k = len(blocks)
    ops = []
    for op in alg.operations:
        if op.arity == 0:
            ops.append(OperationTable(op.name, 0, k, [lab[op.table[0]]]))
            continue
        sub = op.cube()[np.ix_(*([reps] * op.arity))]
        ops.append(OperationTable(op.name, op.arity, k, lab[sub.reshape(-1)]))
    return FiniteAlgebra(k, ops, labels=blocks)


# ---------------------------------------------------------------------------
# products


class ProductAlgebra(FiniteAlgebra):
    """Direct product with mixed-radix encoding (first factor most significant)."""

    def __init__(self, factors: Sequence[FiniteAlgebra]):
        factors = tuple(factors)
        if not factors:
            raise ContractError("empty product")
        sig = factors[0].signature()
        for f in factors[1:]:
            if f.signature() != sig:
                raise SignatureMismatchError("factors have different signatures")
        self.factors = factors
        self.radices = tuple(f.size for f in factors)
        size = int(np.prod(self.radices))
        coords = self._decode(np.arange(size))
        ops = []
        for j, (name, arity) in enumerate(sig):
            if arity == 0:
                vals = [int(f.operations[j].table[0]) for f in factors]
                ops.append(OperationTable(name, 0, size, [self.encode(vals)]))
                continue
            grids = np.meshgrid(*([np.arange(size)] * arity), indexing="ij")
            args = [g.reshape(-1) for g in grids]
            out = np.zeros(len(args[0]), dtype=np.int64)
            for i, f in enumerate(factors):
                res = f.operations[j].apply([coords[a, i] for a in args])
                out = out * f.size + res
            ops.append(OperationTable(name, arity, size, out))
        labels = [tuple(int(v) for v in row) for row in coords]
        super().__init__(size, ops, labels=labels)

    def _decode(self, codes) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.int64)
        out = np.zeros(codes.shape + (len(self.radices),), dtype=np.int64)
        rem = codes.copy()
        for i in range(len(self.radices) - 1, -1, -1):
            out[..., i] = rem % self.radices[i]
            rem = rem // self.radices[i]
        return out

    def decode(self, code: int) -> Tuple[int, ...]:
        return tuple(int(v) for v in self._decode(code))

    def encode(self, coords: Sequence[int]) -> int:
        code = 0
        for c, r in zip(coords, self.radices):
            code = code * r + int(c)
        return code

    def projection_kernel(self, i: int) -> Congruence:
        coords = self._decode(np.arange(self.size))
        return Congruence(tuple(coords[:, i].tolist()))

    def is_subdirect(self, elements: Iterable[int]) -> bool:
        coords = self._decode(np.array(sorted(set(elements)), dtype=np.int64))
        if len(coords) == 0:
            return False
        return all(len(set(coords[:, i].tolist())) == r for i, r in enumerate(self.radices))


def direct_product(algebras: Sequence[FiniteAlgebra]) -> FiniteAlgebra:
    algebras = list(algebras)
    if len(algebras) == 1:
        return algebras[0]
    return ProductAlgebra(algebras)


def power(alg: FiniteAlgebra, n: int) -> FiniteAlgebra:
    key = ("power", n)
    if key not in alg._cache:
        alg._cache[key] = ProductAlgebra([alg] * n) if n > 1 else alg
    return alg._cache[key]


# ---------------------------------------------------------------------------
# term operations and clones


Derivation = tuple  # ("var", i) or ("op", name, (children...))


@dataclass(frozen=True)
class TermOperation:
    arity: int
    table: OperationTable
    derivation: Derivation

    def __call__(self, *args):
        return self.table(*args)

    def describe(self) -> str:
        return render_derivation(self.derivation)


def render_derivation(d) -> str:
    if d[0] == "var":
        return f"x{d[1] + 1}"
    return f"{d[1]}({', '.join(render_derivation(c) for c in d[2])})"


def evaluate_derivation(alg: FiniteAlgebra, derivation, arity: int) -> np.ndarray:
    """Table of the term over ``A**arity`` (flat, mixed radix)."""
    n = alg.size
    grids = np.meshgrid(*([np.arange(n)] * arity), indexing="ij") if arity else []
    args = [g.reshape(-1) for g in grids]
    memo = {}

    def ev(d):
        key = id(d)
        if key in memo:
            return memo[key]
        if d[0] == "var":
            val = args[d[1]]
        else:
            op = alg.operation(d[1])
            val = op.apply([ev(c) for c in d[2]])
        memo[key] = val
        return val

    return np.asarray(ev(derivation), dtype=np.int64).reshape(-1)


@dataclass
class CloneResult:
    arity: int
    terms: List[TermOperation]
    saturated: bool
    rounds: int


def generate_clone(alg: FiniteAlgebra, arity: int, depth_bound: int = 4,
                   max_terms: int = 20000) -> CloneResult:
    """Term operations of the given arity reachable within ``depth_bound`` rounds.

    Each round composes every basic operation with terms found so far.  When
    a round adds nothing the result is the whole ``arity``-ary clone.
    """
    n = alg.size
    total = n**arity
    grids = np.meshgrid(*([np.arange(n)] * arity), indexing="ij") if arity else []
    tables = [g.reshape(-1).astype(np.int64) for g in grids]
    derivs = [("var", i) for i in range(arity)]
    seen = {t.tobytes(): i for i, t in enumerate(tables)}
    if arity == 0:
        tables, derivs = [], []
    saturated = False
    rounds = 0
    old_count = 0
    for rounds in range(1, depth_bound + 1):
        start_count = len(tables)
        stack = np.array(tables) if tables else np.zeros((0, total), dtype=np.int64)
        for op in alg.operations:
            if op.arity == 0:
                continue
            k = len(stack)
            # combinations using at least one term that is new since last round
            for combo in itertools.product(range(k), repeat=op.arity):
                if old_count and max(combo) < old_count:
                    continue
                out = op.apply([stack[c] for c in combo])
                key = out.tobytes()
                if key not in seen:
                    seen[key] = len(tables)
                    tables.append(out)
                    derivs.append(("op", op.name, tuple(derivs[c] for c in combo)))
                    if len(tables) > max_terms:
                        raise BoundExceededError("clone size", len(tables), max_terms)
        old_count = start_count
        if len(tables) == start_count:
            saturated = True
            break
    terms = [TermOperation(arity, OperationTable(f"t{i}", arity, n, t), d)
             for i, (t, d) in enumerate(zip(tables, derivs))]
    return CloneResult(arity, terms, saturated, rounds)


@dataclass
class ClosureResult:
    """Subuniverse of ``A**X`` generated by projections restricted to points ``X``."""

    vectors: np.ndarray  # (count, |X|)
    derivations: List[Derivation]
    saturated: bool
    hit: Optional[int] = None


def restricted_term_search(alg: FiniteAlgebra, points: np.ndarray, accept,
                           max_size: int = 200000) -> ClosureResult:
    """Search term operations by their values on a set of argument tuples.

    ``points`` has shape ``(|X|, m)``.  Terms are generated semi-naively and
    deduplicated by their restriction to ``X``; ``accept`` is called on each
    batch of new vectors and returns a boolean mask.  Stops at the first
    accepted vector.  Exhausting the closure proves that no ``m``-ary term
    satisfies the predicate.
    """
    points = np.asarray(points, dtype=np.int64)
    m = points.shape[1]
    vecs = [points[:, i].copy() for i in range(m)]
    derivs: List[Derivation] = [("var", i) for i in range(m)]
    seen = {}
    uniq_v, uniq_d = [], []
    for v, d in zip(vecs, derivs):
        if v.tobytes() not in seen:
            seen[v.tobytes()] = len(uniq_v)
            uniq_v.append(v)
            uniq_d.append(d)
    vecs, derivs = uniq_v, uniq_d
    arr = np.array(vecs)
    ok = accept(arr)
    if ok.any():
        i = int(np.flatnonzero(ok)[0])
        return ClosureResult(arr, derivs, False, hit=i)
    old = 0
    while True:
        arr = np.array(vecs)
        k = len(arr)
        for op in alg.operations:
            if op.arity == 0:
                continue
            r = op.arity
            # enumerate index tuples with at least one index >= old, in batches
            idx_all = _combos_with_new(k, old, r)
            for batch in idx_all:
                out = op.apply([arr[batch[:, j]] for j in range(r)])
                _, first = np.unique(_row_keys(out), return_index=True)
                first.sort()
                fresh = []
                for b in first.tolist():
                    key = out[b].tobytes()
                    if key not in seen:
                        seen[key] = len(vecs)
                        vecs.append(out[b])
                        derivs.append(("op", op.name, tuple(derivs[c] for c in batch[b])))
                        fresh.append(b)
                if fresh:
                    okb = accept(out[fresh])
                    if okb.any():
                        hit_row = fresh[int(np.flatnonzero(okb)[0])]
                        return ClosureResult(np.array(vecs), derivs, False,
                                             hit=seen[out[hit_row].tobytes()])
                if len(vecs) > max_size:
                    return ClosureResult(np.array(vecs), derivs, False)
        if len(vecs) == k:
            return ClosureResult(np.array(vecs), derivs, True)
        old = k


def _row_keys(rows: np.ndarray) -> np.ndarray:
    """One opaque scalar per row, equal exactly when the rows are equal."""
    rows = np.ascontiguousarray(rows)
    return rows.view(np.dtype((np.void, rows.dtype.itemsize * rows.shape[1]))).ravel()


def _combos_with_new(k, old, r, batch_size=1 << 16):
    """Yield arrays of index tuples in ``range(k)**r`` using an index >= old."""
    total = k**r
    for start in range(0, total, batch_size):
        codes = np.arange(start, min(total, start + batch_size), dtype=np.int64)
        cols = np.empty((len(codes), r), dtype=np.int64)
        rem = codes
        for j in range(r - 1, -1, -1):
            cols[:, j] = rem % k
            rem = rem // k
        if old:
            cols = cols[cols.max(axis=1) >= old]
        if len(cols):
            yield cols


# ---------------------------------------------------------------------------
# text format


def parse_algebra(text: str) -> FiniteAlgebra:
    size = None
    ops = []
    current = None  # [name, arity, values, lineno]

    def close():
        if current is None:
            return
        name, arity, values, lineno = current
        if len(values) != size**arity:
            raise ParseError(
                f"operation {name}: expected {size**arity} values, got {len(values)}", lineno)
        ops.append(OperationTable(name, arity, size, values))

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        if toks[0] == "universe":
            if size is not None or len(toks) != 2:
                raise ParseError("expected a single 'universe <n>' line", lineno)
            try:
                size = int(toks[1])
            except ValueError:
                raise ParseError("universe size must be an integer", lineno) from None
            if size < 1:
                raise ParseError("universe size must be positive", lineno)
        elif toks[0] == "op":
            if size is None:
                raise ParseError("'universe' must come first", lineno)
            if len(toks) != 3:
                raise ParseError("expected 'op <name> <arity>'", lineno)
            close()
            try:
                arity = int(toks[2])
            except ValueError:
                raise ParseError("arity must be an integer", lineno) from None
            if any(o.name == toks[1] for o in ops):
                raise ParseError(f"duplicate operation {toks[1]!r}", lineno)
            current = [toks[1], arity, [], lineno]
        else:
            if current is None:
                raise ParseError(f"unexpected line {line!r}", lineno)
            try:
                row = [int(t) for t in toks]
            except ValueError:
                raise ParseError("table rows must be integers", lineno) from None
            if current[1] > 0 and len(row) != size:
                raise ParseError(f"table rows must have {size} values", lineno)
            for v in row:
                if v < 0 or v >= size:
                    raise ParseError(f"value {v} out of range", lineno)
            current[2].extend(row)
            if len(current[2]) > size**current[1]:
                raise ParseError(f"too many values for operation {current[0]}", lineno)
    if size is None:
        raise ParseError("missing 'universe' line")
    close()
    return FiniteAlgebra(size, ops)


def serialize_algebra(alg: FiniteAlgebra) -> str:
    lines = [f"universe {alg.size}"]
    for op in alg.operations:
        lines.append(f"op {op.name} {op.arity}")
        vals = op.table.tolist()
        width = alg.size if op.arity else 1
        for i in range(0, len(vals), width):
            lines.append(" ".join(map(str, vals[i:i + width])))
    return "\n".join(lines) + "\n"
