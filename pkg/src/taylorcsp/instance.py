"""CSP templates and instances: data model, text format, and brute-force oracle.

Values are dense integers ``0..n-1``.  Variable names are symbolic in the
text format and mapped to dense indices at parse time.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import BoundExceededError, ContractError, ParseError

DEFAULT_ORACLE_BOUND = 10**7


@dataclass(frozen=True)
class Relation:
    name: str
    arity: int
    tuples: Tuple[Tuple[int, ...], ...]

    def __post_init__(self):
        if self.arity < 1:
            raise ContractError(f"relation {self.name}: arity must be positive")
        tuples = tuple(sorted(set(tuple(int(v) for v in t) for t in self.tuples)))
        for t in tuples:
            if len(t) != self.arity:
                raise ContractError(
                    f"relation {self.name}: tuple {t} has length {len(t)}, expected {self.arity}"
                )
        object.__setattr__(self, "tuples", tuples)

    @property
    def array(self) -> np.ndarray:
        arr = self.__dict__.get("_array")
        if arr is None:
            arr = np.array(self.tuples, dtype=np.int64).reshape(len(self.tuples), self.arity)
            object.__setattr__(self, "_array", arr)
        return arr

    @property
    def index(self) -> Tuple[Dict[int, Tuple[int, ...]], ...]:
        """Per position: value -> ids of the tuples carrying that value there."""
        idx = self.__dict__.get("_index")
        if idx is None:
            built: List[Dict[int, List[int]]] = [dict() for _ in range(self.arity)]
            for tid, t in enumerate(self.tuples):
                for pos, v in enumerate(t):
                    built[pos].setdefault(v, []).append(tid)
            idx = tuple({v: tuple(ids) for v, ids in d.items()} for d in built)
            object.__setattr__(self, "_index", idx)
        return idx

    def __contains__(self, t) -> bool:
        return tuple(t) in self._tupleset

    @property
    def _tupleset(self):
        s = self.__dict__.get("_set")
        if s is None:
            s = frozenset(self.tuples)
            object.__setattr__(self, "_set", s)
        return s

    def dense(self, n: int) -> np.ndarray:
        """Boolean membership array of shape ``(n,) * arity``."""
        out = np.zeros((n,) * self.arity, dtype=bool)
        if self.tuples:
            out[tuple(self.array.T)] = True
        return out


@dataclass(frozen=True)
class Template:
    domain_size: int
    relations: Tuple[Relation, ...]

    def __post_init__(self):
        if self.domain_size < 1:
            raise ContractError("domain size must be positive")
        names = [r.name for r in self.relations]
        if len(set(names)) != len(names):
            raise ContractError("relation names must be unique")
        for r in self.relations:
            for t in r.tuples:
                if any(v < 0 or v >= self.domain_size for v in t):
                    raise ContractError(f"relation {r.name}: value out of range in {t}")

    @property
    def max_arity(self) -> int:
        return max((r.arity for r in self.relations), default=0)

    def relation(self, name: str) -> Relation:
        for r in self.relations:
            if r.name == name:
                return r
        raise KeyError(name)

    def relation_names(self) -> List[str]:
        return [r.name for r in self.relations]


@dataclass(frozen=True)
class Constraint:
    scope: Tuple[int, ...]
    relation: str


@dataclass(frozen=True)
class Instance:
    """A CSP instance over a template.

    ``domains[i]`` is the sort of variable ``i`` (sorted tuple of values).
    """

    template: Template
    variables: Tuple[str, ...]
    domains: Tuple[Tuple[int, ...], ...]
    constraints: Tuple[Constraint, ...] = field(default=())

    def __post_init__(self):
        if len(self.domains) != len(self.variables):
            raise ContractError("one domain per variable required")
        if len(set(self.variables)) != len(self.variables):
            raise ContractError("variable names must be unique")
        doms = tuple(tuple(sorted(set(int(v) for v in d))) for d in self.domains)
        for name, d in zip(self.variables, doms):
            if any(v < 0 or v >= self.template.domain_size for v in d):
                raise ContractError(f"domain of {name} has a value out of range")
        object.__setattr__(self, "domains", doms)
        n = len(self.variables)
        for c in self.constraints:
            rel = self.template.relation(c.relation)
            if len(c.scope) != rel.arity:
                raise ContractError(
                    f"constraint {c.relation}: scope length {len(c.scope)} != arity {rel.arity}"
                )
            if any(v < 0 or v >= n for v in c.scope):
                raise ContractError(f"constraint {c.relation}: unknown variable index")

    @classmethod
    def build(cls, template: Template, variables: Sequence[str], constraints: Iterable,
              domains: Optional[Mapping[str, Iterable[int]]] = None) -> "Instance":
        """Convenience constructor using variable names in scopes."""
        variables = tuple(variables)
        pos = {v: i for i, v in enumerate(variables)}
        full = tuple(range(template.domain_size))
        doms = []
        for v in variables:
            if domains is not None and v in domains:
                doms.append(tuple(domains[v]))
            else:
                doms.append(full)
        cons = tuple(Constraint(tuple(pos[x] for x in scope), rel) for rel, scope in constraints)
        return cls(template, variables, tuple(doms), cons)

    @property
    def is_trivially_unsat(self) -> bool:
        return any(len(d) == 0 for d in self.domains)

    @property
    def search_space(self) -> int:
        size = 1
        for d in self.domains:
            size *= len(d)
        return size

    def with_domains(self, domains) -> "Instance":
        return Instance(self.template, self.variables, tuple(tuple(d) for d in domains),
                        self.constraints)


# ---------------------------------------------------------------------------
# text format


def _tokens(text):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def _int(tok, lineno):
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"expected an integer, got {tok!r}", lineno) from None


def parse_template(text: str) -> Template:
    domain = None
    relations = []
    current = None  # (name, arity, tuples, lineno)

    def close():
        if current is not None:
            relations.append(Relation(current[0], current[1], tuple(current[2])))

    for lineno, toks in _tokens(text):
        head = toks[0]
        if head == "domain":
            if domain is not None:
                raise ParseError("duplicate 'domain' line", lineno)
            if len(toks) != 2:
                raise ParseError("expected 'domain <n>'", lineno)
            domain = _int(toks[1], lineno)
            if domain < 1:
                raise ParseError("domain size must be positive", lineno)
        elif head == "relation":
            if len(toks) != 3:
                raise ParseError("expected 'relation <name> <arity>'", lineno)
            close()
            arity = _int(toks[2], lineno)
            if arity < 1:
                raise ParseError("arity must be positive", lineno)
            if any(r.name == toks[1] for r in relations):
                raise ParseError(f"duplicate relation {toks[1]!r}", lineno)
            current = (toks[1], arity, [], lineno)
        else:
            if current is None:
                raise ParseError(f"unexpected line {' '.join(toks)!r}", lineno)
            if domain is None:
                raise ParseError("'domain' must precede tuples", lineno)
            values = tuple(_int(t, lineno) for t in toks)
            if len(values) != current[1]:
                raise ParseError(
                    f"arity mismatch: relation {current[0]} has arity {current[1]}, "
                    f"tuple has {len(values)} values", lineno)
            for v in values:
                if v < 0 or v >= domain:
                    raise ParseError(f"value {v} out of range for domain {domain}", lineno)
            current[2].append(values)
    close()
    if domain is None:
        raise ParseError("missing 'domain' line")
    return Template(domain, tuple(relations))


def serialize_template(template: Template) -> str:
    lines = [f"domain {template.domain_size}"]
    for r in sorted(template.relations, key=lambda r: r.name):
        lines.append(f"relation {r.name} {r.arity}")
        lines.extend(" ".join(map(str, t)) for t in r.tuples)
    return "\n".join(lines) + "\n"


def parse_instance(text: str, template: Template) -> Instance:
    variables: List[str] = []
    pos: Dict[str, int] = {}
    doms: Dict[int, Tuple[int, ...]] = {}
    cons: List[Constraint] = []
    for lineno, toks in _tokens(text):
        head = toks[0]
        if head == "var":
            if len(toks) != 2:
                raise ParseError("expected 'var <name>'", lineno)
            if toks[1] in pos:
                raise ParseError(f"duplicate variable {toks[1]!r}", lineno)
            pos[toks[1]] = len(variables)
            variables.append(toks[1])
        elif head == "dom":
            if len(toks) < 2:
                raise ParseError("expected 'dom <name> <values...>'", lineno)
            if toks[1] not in pos:
                raise ParseError(f"unknown variable {toks[1]!r}", lineno)
            values = tuple(_int(t, lineno) for t in toks[2:])
            for v in values:
                if v < 0 or v >= template.domain_size:
                    raise ParseError(f"value {v} out of range", lineno)
            doms[pos[toks[1]]] = values
        elif head == "con":
            if len(toks) < 2:
                raise ParseError("expected 'con <relation> <vars...>'", lineno)
            try:
                rel = template.relation(toks[1])
            except KeyError:
                raise ParseError(f"unknown relation {toks[1]!r}", lineno) from None
            scope = []
            for name in toks[2:]:
                if name not in pos:
                    raise ParseError(f"unknown variable {name!r}", lineno)
                scope.append(pos[name])
            if len(scope) != rel.arity:
                raise ParseError(
                    f"scope-length mismatch: {rel.name} has arity {rel.arity}, "
                    f"got {len(scope)} variables", lineno)
            cons.append(Constraint(tuple(scope), rel.name))
        else:
            raise ParseError(f"unknown directive {head!r}", lineno)
    full = tuple(range(template.domain_size))
    domains = tuple(doms.get(i, full) for i in range(len(variables)))
    return Instance(template, tuple(variables), domains, tuple(cons))


def serialize_instance(instance: Instance) -> str:
    lines = [f"var {v}" for v in instance.variables]
    full = tuple(range(instance.template.domain_size))
    for v, d in zip(instance.variables, instance.domains):
        if d != full:
            lines.append(" ".join(["dom", v, *map(str, d)]))
    for c in instance.constraints:
        lines.append(" ".join(["con", c.relation, *(instance.variables[i] for i in c.scope)]))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# solutions


def _as_vector(instance: Instance, assignment) -> Tuple[int, ...]:
    if isinstance(assignment, Mapping):
        missing = [v for v in instance.variables if v not in assignment]
        if missing:
            raise ContractError(f"assignment is not total: missing {missing}")
        return tuple(int(assignment[v]) for v in instance.variables)
    vec = tuple(int(v) for v in assignment)
    if len(vec) != len(instance.variables):
        raise ContractError("assignment is not total")
    return vec


def evaluate_assignment(instance: Instance, assignment) -> bool:
    """True iff every constraint scope maps into its relation.

    Values outside a variable's sort make the assignment fail as well.
    """
    vec = _as_vector(instance, assignment)
    for value, dom in zip(vec, instance.domains):
        if value not in dom:
            return False
    for c in instance.constraints:
        rel = instance.template.relation(c.relation)
        if tuple(vec[i] for i in c.scope) not in rel:
            return False
    return True


def _check_bound(instance, bound):
    size = instance.search_space
    if size > bound:
        raise BoundExceededError("oracle search space", size, bound)


def _satisfying_rows(instance: Instance, chunk: np.ndarray) -> np.ndarray:
    ok = np.ones(len(chunk), dtype=bool)
    n = instance.template.domain_size
    for c in instance.constraints:
        rel = instance.template.relation(c.relation)
        dense = rel.dense(n)
        ok &= dense[tuple(chunk[:, i] for i in c.scope)]
        if not ok.any():
            break
    return ok


def _enumerate_chunks(instance: Instance, chunk_size=1 << 16):
    doms = [np.asarray(d, dtype=np.int64) for d in instance.domains]
    sizes = [len(d) for d in doms]
    total = instance.search_space
    nvars = len(doms)
    # mixed radix with the first variable most significant: lexicographic order
    for start in range(0, total, chunk_size):
        idx = np.arange(start, min(total, start + chunk_size), dtype=np.int64)
        cols = np.empty((len(idx), nvars), dtype=np.int64)
        rem = idx
        for j in range(nvars - 1, -1, -1):
            cols[:, j] = doms[j][rem % sizes[j]]
            rem = rem // sizes[j]
        yield cols


def brute_force_solve(instance: Instance, bound: int = DEFAULT_ORACLE_BOUND) -> Optional[Dict[str, int]]:
    """Exhaustive search; returns the lexicographically least solution or ``None``."""
    _check_bound(instance, bound)
    if not instance.variables:
        return {} if _satisfying_rows(instance, np.zeros((1, 0), dtype=np.int64)).all() else None
    if instance.is_trivially_unsat:
        return None
    for chunk in _enumerate_chunks(instance):
        ok = _satisfying_rows(instance, chunk)
        hits = np.flatnonzero(ok)
        if len(hits):
            row = chunk[hits[0]]
            return dict(zip(instance.variables, (int(v) for v in row)))
    return None


def all_solutions(instance: Instance, bound: int = DEFAULT_ORACLE_BOUND) -> np.ndarray:
    """Every solution as a row of an integer array (lexicographic order)."""
    _check_bound(instance, bound)
    nvars = len(instance.variables)
    if nvars == 0:
        ok = _satisfying_rows(instance, np.zeros((1, 0), dtype=np.int64))
        return np.zeros((int(ok.all()), 0), dtype=np.int64)
    if instance.is_trivially_unsat:
        return np.zeros((0, nvars), dtype=np.int64)
    found = [chunk[_satisfying_rows(instance, chunk)] for chunk in _enumerate_chunks(instance)]
    return np.concatenate(found, axis=0)


def backtrack_solve(instance: Instance) -> Optional[Dict[str, int]]:
    """Recursive backtracking solver used to cross-check the exhaustive oracle."""
    n = len(instance.variables)
    rels = [(c.scope, instance.template.relation(c.relation)) for c in instance.constraints]
    last = {}
    for scope, rel in rels:
        key = max(scope) if scope else -1
        last.setdefault(key, []).append((scope, rel))
    for scope, rel in last.get(-1, []):
        if () not in rel:
            return None
    values = [0] * n

    def rec(i):
        if i == n:
            return True
        for v in instance.domains[i]:
            values[i] = v
            if all(tuple(values[j] for j in scope) in rel for scope, rel in last.get(i, [])):
                if rec(i + 1):
                    return True
        return False

    if rec(0):
        return dict(zip(instance.variables, values))
    return None


def assignments_product(domains: Sequence[Sequence[int]]):
    return itertools.product(*domains)
