"""Standard templates and a seeded random instance generator."""

from __future__ import annotations

import itertools
from typing import Callable, Dict, Optional

import numpy as np

from .algebra.core import FiniteAlgebra, OperationTable
from .instance import Instance, Relation, Template


def _rel(name, arity, domain, pred) -> Relation:
    return Relation(name, arity, tuple(t for t in itertools.product(range(domain), repeat=arity)
                                       if pred(*t)))


def two_sat() -> Template:
    """Binary clauses over {0, 1}; ``cAB`` forbids the pair ``(1-A, 1-B)``."""
    rels = [_rel(f"c{a}{b}", 2, 2, lambda x, y, a=a, b=b: x == a or y == b)
            for a in (0, 1) for b in (0, 1)]
    rels += [_rel("t", 1, 2, lambda x: x == 1), _rel("f", 1, 2, lambda x: x == 0)]
    return Template(2, tuple(rels))


def horn_3sat() -> Template:
    """Horn clauses with at most three literals (at most one positive)."""
    rels = [
        _rel("imp3", 3, 2, lambda x, y, z: not (x and y) or z),
        _rel("nand3", 3, 2, lambda x, y, z: not (x and y and z)),
        _rel("imp2", 2, 2, lambda x, y: not x or y),
        _rel("nand2", 2, 2, lambda x, y: not (x and y)),
        _rel("t", 1, 2, lambda x: x == 1),
        _rel("f", 1, 2, lambda x: x == 0),
    ]
    return Template(2, tuple(rels))


def lin3(p: int) -> Template:
    """Equations ``x + y + z = c`` over ``Z_p``, one relation per ``c``."""
    return Template(p, tuple(_rel(f"eq{c}", 3, p, lambda x, y, z, c=c: (x + y + z) % p == c)
                             for c in range(p)))


def lin3_z2() -> Template:
    return lin3(2)


def lin3_z3() -> Template:
    return lin3(3)


def k3() -> Template:
    """Graph 3-colouring."""
    return Template(3, (_rel("neq", 2, 3, lambda x, y: x != y),))


def neq2() -> Template:
    return Template(2, (_rel("neq", 2, 2, lambda x, y: x != y),))


FAMILIES: Dict[str, Callable[[], Template]] = {
    "2sat": two_sat,
    "horn3": horn_3sat,
    "lin3-z2": lin3_z2,
    "lin3-z3": lin3_z3,
    "k3": k3,
    "neq2": neq2,
}


# ---------------------------------------------------------------------------
# small algebras


def affine_algebra(n: int) -> FiniteAlgebra:
    """``Z_n`` with the Maltsev operation ``x - y + z``."""
    return FiniteAlgebra(n, [OperationTable.from_function("m", 3, n,
                                                          lambda x, y, z: (x - y + z) % n)])


def majority_algebra() -> FiniteAlgebra:
    return FiniteAlgebra(2, [OperationTable.from_function(
        "maj", 3, 2, lambda x, y, z: int(x + y + z >= 2))])


def semilattice() -> FiniteAlgebra:
    """Meet on {0, 1}."""
    return FiniteAlgebra(2, [OperationTable.from_function("meet", 2, 2, min)])


def rock_paper_scissors() -> FiniteAlgebra:
    """``a . b`` is the winner of ``a`` and ``b`` (1 beats 0, 2 beats 1, 0 beats 2)."""
    def play(a, b):
        if a == b:
            return a
        return a if (a - b) % 3 == 1 else b
    return FiniteAlgebra(3, [OperationTable.from_function("rps", 2, 3, play)])


def random_instance(template: Template, rng: np.random.Generator, num_vars: int,
                    num_constraints: Optional[int] = None) -> Instance:
    """Random instance with full domains.

    Each constraint draws its relation uniformly from the template and its
    scope uniformly among tuples of distinct variables.  Without
    ``num_constraints`` the count is uniform in ``[1, 2 * num_vars]``.
    Relations wider than ``num_vars`` are never drawn.
    """
    names = [f"x{i}" for i in range(num_vars)]
    usable = [r for r in template.relations if r.arity <= num_vars]
    if num_constraints is None:
        num_constraints = int(rng.integers(1, 2 * num_vars + 1))
    cons = []
    for _ in range(num_constraints):
        rel = usable[int(rng.integers(len(usable)))]
        scope = rng.choice(num_vars, size=rel.arity, replace=False)
        cons.append((rel.name, tuple(names[int(i)] for i in scope)))
    return Instance.build(template, names, cons)


def random_instances(template: Template, count: int, seed: int, min_vars: int = 3,
                     max_vars: int = 8):
    """``count`` instances; the variable count is uniform in ``[min_vars, max_vars]``."""
    rng = np.random.default_rng(seed)
    lo = max(min_vars, template.max_arity)
    for _ in range(count):
        n = int(rng.integers(lo, max(lo, max_vars) + 1))
        yield random_instance(template, rng, n)
