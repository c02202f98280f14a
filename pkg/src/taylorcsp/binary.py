"""Reduction of a minimal instance to a binary instance over tuple variables.

For ``m = ceil(K/2)`` (``K`` the largest arity) every ordered ``m``-tuple of
distinct variables becomes a tuple variable whose values are ``m``-vectors
over the template domain, encoded in mixed radix (first coordinate most
significant).  Two tuple variables are related by the pairs whose joint
assignment lies in the (2m, 3m)-minimal table of the union of their
components.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .consistency import KLState, enforce_kl_minimality
from .errors import BoundExceededError, ContractError
from .instance import Constraint, Instance, Relation, Template, evaluate_assignment
from .network import MAX_VALUES, Network

DEFAULT_TUPLE_CAP = 20000


class LiftConflictError(ContractError):
    """Two tuple variables disagree on a shared original variable."""

    def __init__(self, variable: str, first: str, second: str, values):
        self.variable = variable
        self.first = first
        self.second = second
        self.values = values
        super().__init__(
            f"tuple variables {first} and {second} disagree on {variable}: {values[0]} vs {values[1]}"
        )


def tuple_arity(instance_or_template) -> int:
    template = getattr(instance_or_template, "template", instance_or_template)
    return max(1, (template.max_arity + 1) // 2)


@dataclass(frozen=True)
class TupleVariable:
    components: Tuple[int, ...]
    index: int

    def name(self) -> str:
        return "t_" + "_".join(str(c) for c in self.components)


@dataclass
class BinaryInstance:
    """A complete binary network over tuple variables of an original instance."""

    original: Instance
    tuple_vars: Tuple[TupleVariable, ...]
    m: int
    network: Network

    @property
    def radix(self) -> int:
        return self.original.template.domain_size

    @property
    def num_values(self) -> int:
        return self.network.num_values

    def decode(self, code: int) -> Tuple[int, ...]:
        out = []
        for _ in range(self.m):
            out.append(code % self.radix)
            code //= self.radix
        return tuple(reversed(out))

    def encode(self, vector: Sequence[int]) -> int:
        code = 0
        for v in vector:
            code = code * self.radix + int(v)
        return code

    def names(self) -> List[str]:
        return [t.name() for t in self.tuple_vars]

    def with_network(self, network: Network) -> "BinaryInstance":
        return BinaryInstance(self.original, self.tuple_vars, self.m, network)

    def check_simple(self) -> None:
        """Raise if the syntactic simplicity invariants fail."""
        n = self.network.n
        d = self.num_values
        rel = self.network.rel_bool()
        if not np.array_equal(rel, np.transpose(rel, (1, 0, 3, 2))):
            raise ContractError("relations are not symmetric")
        for i in range(n):
            if np.any(rel[i, i] & ~np.eye(d, dtype=bool)):
                raise ContractError(f"diagonal of {i} is not a domain")
        dom = self.network.dom_bool()
        if np.any(rel & ~(dom[:, None, :, None] & dom[None, :, None, :])):
            raise ContractError("relation escapes the domains")

    def to_instance(self) -> Instance:
        """Render as an ordinary instance over the code alphabet ``0..D-1``."""
        n = self.network.n
        rels = []
        cons = []
        for i in range(n):
            for j in range(i + 1, n):
                name = f"r_{i}_{j}"
                rels.append(Relation(name, 2, tuple(self.network.relation(i, j))))
                cons.append(Constraint((i, j), name))
        template = Template(self.num_values, tuple(rels))
        domains = tuple(self.network.domain(i) for i in range(n))
        return Instance(template, tuple(self.names()), domains, tuple(cons))

    def lift_solution(self, codes: Sequence[int], verify: bool = True) -> Dict[str, int]:
        """Original assignment read off a solution of the binary network."""
        if len(codes) != len(self.tuple_vars):
            raise ContractError("one value per tuple variable required")
        names = self.original.variables
        value: Dict[int, int] = {}
        source: Dict[int, int] = {}
        for tv, code in zip(self.tuple_vars, codes):
            for comp, v in zip(tv.components, self.decode(int(code))):
                if comp in value and value[comp] != v:
                    first = self.tuple_vars[source[comp]].name()
                    raise LiftConflictError(names[comp], first, tv.name(), (value[comp], v))
                value.setdefault(comp, v)
                source.setdefault(comp, tv.index)
        missing = [names[i] for i in range(len(names)) if i not in value]
        if missing:
            raise ContractError(f"no tuple variable covers {missing}")
        out = {names[i]: value[i] for i in range(len(names))}
        if verify and not evaluate_assignment(self.original, out):
            raise ContractError("lifted assignment violates an original constraint")
        return out

    def project_solution(self, assignment: Mapping[str, int]) -> List[int]:
        names = self.original.variables
        vec = [int(assignment[v]) for v in names]
        return [self.encode([vec[c] for c in tv.components]) for tv in self.tuple_vars]

    def is_solution(self, codes: Sequence[int]) -> bool:
        rows = self.network.rows
        n = len(codes)
        for i in range(n):
            for j in range(n):
                if not (int(rows[i, j, codes[i]]) >> int(codes[j])) & 1:
                    return False
        return True


def make_tuple_vars(n: int, m: int, cap: int = DEFAULT_TUPLE_CAP) -> Tuple[TupleVariable, ...]:
    count = 1
    for i in range(m):
        count *= max(n - i, 0)
    if count > cap:
        raise BoundExceededError("tuple variables", count, cap)
    return tuple(TupleVariable(p, i) for i, p in enumerate(itertools.permutations(range(n), m)))


def reduce_to_binary(state: KLState, cap: int = DEFAULT_TUPLE_CAP) -> BinaryInstance:
    """Build the binary instance from a (2m, 3m)-minimal state."""
    inst = state.instance
    m = tuple_arity(inst)
    if state.k != 2 * m or state.l != 3 * m:
        raise ContractError(
            f"state has (k,l)=({state.k},{state.l}); the reduction needs ({2 * m},{3 * m})"
        )
    if state.unsat:
        raise ContractError("the minimal state is unsatisfiable")
    n = len(inst.variables)
    if n < m:
        raise ContractError(f"fewer variables ({n}) than the tuple size {m}")
    radix = inst.template.domain_size
    d = radix**m
    if d > MAX_VALUES:
        raise BoundExceededError("tuple value codes", d, MAX_VALUES)
    tvars = make_tuple_vars(n, m, cap)
    N = len(tvars)

    codes = np.arange(d)
    digits = np.stack([(codes // radix ** (m - 1 - i)) % radix for i in range(m)], axis=1)

    rel = np.zeros((N, N, d, d), dtype=bool)
    dom = np.zeros((N, d), dtype=bool)
    for tv in tvars:
        t = state.table(tv.components)
        dom[tv.index] = t[tuple(digits[:, i] for i in range(m))]
    # the index arrays depend only on how the two tuples overlap
    patterns: Dict[Tuple, Tuple] = {}
    for x in tvars:
        for y in tvars:
            if x.index == y.index:
                continue
            union = tuple(sorted(set(x.components) | set(y.components)))
            key = (tuple(union.index(u) for u in x.components),
                   tuple(union.index(u) for u in y.components))
            hit = patterns.get(key)
            if hit is None:
                agree = np.ones((d, d), dtype=bool)
                idx = []
                for u in union:
                    if u in x.components:
                        i = x.components.index(u)
                        col = np.broadcast_to(digits[:, i][:, None], (d, d))
                        if u in y.components:
                            j = y.components.index(u)
                            agree &= digits[:, i][:, None] == digits[:, j][None, :]
                    else:
                        j = y.components.index(u)
                        col = np.broadcast_to(digits[:, j][None, :], (d, d))
                    idx.append(col)
                hit = patterns[key] = (tuple(idx), agree)
            rel[x.index, y.index] = state.table(union)[hit[0]] & hit[1]
    names = [tv.name() for tv in tvars]
    net = Network.from_dense(dom, rel, np.ones((N, N), dtype=bool) & ~np.eye(N, dtype=bool), names)
    return BinaryInstance(inst, tvars, m, net)


def minimal_binary_instance(instance: Instance, cap: int = DEFAULT_TUPLE_CAP,
                            kl_bound: Optional[int] = None) -> Optional[BinaryInstance]:
    """Run (2m,3m)-minimality and reduce; ``None`` when minimality refutes."""
    m = tuple_arity(instance)
    kwargs = {} if kl_bound is None else {"bound": kl_bound}
    state = enforce_kl_minimality(instance, 2 * m, 3 * m, **kwargs)
    if state.unsat:
        return None
    return reduce_to_binary(state, cap)


def binary_from_instance(instance: Instance) -> BinaryInstance:
    """Direct binary network for an instance of arity at most 2 (no minimality)."""
    if instance.template.max_arity > 2:
        raise ContractError("direct binary construction needs arity at most 2")
    n = len(instance.variables)
    d = instance.template.domain_size
    dom = np.zeros((n, d), dtype=bool)
    for i, vals in enumerate(instance.domains):
        dom[i, list(vals)] = True
    rel = np.ones((n, n, d, d), dtype=bool)
    edges = np.zeros((n, n), dtype=bool)
    for c in instance.constraints:
        dense = instance.template.relation(c.relation).dense(d)
        if len(c.scope) == 1:
            dom[c.scope[0]] &= dense
        elif c.scope[0] == c.scope[1]:
            dom[c.scope[0]] &= np.diagonal(dense)
        else:
            i, j = c.scope
            rel[i, j] &= dense
            rel[j, i] &= dense.T
            edges[i, j] = edges[j, i] = True
    tvars = tuple(TupleVariable((i,), i) for i in range(n))
    names = [tv.name() for tv in tvars]
    net = Network.from_dense(dom, rel, edges, names)
    return BinaryInstance(instance, tvars, 1, net)
