"""Local consistency: (k,l)-minimality, LAC, SLAC and path patterns.

LAC here is image propagation in the linear-Datalog sense: starting from the
unary facts ``B_x`` it derives, for every constraint ``R(u, v)`` and every
derived fact ``C(u)``, the fact ``C + R`` on ``v``.  It fails exactly when an
empty set is derived.  This is not classical arc consistency.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from math import comb
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from numba import njit

from .errors import BoundExceededError, ContractError
from .instance import Instance
from .network import Network, is_path_consistent

DEFAULT_KL_BOUND = 5_000_000
DEFAULT_CYCLE_LENGTH = 6
DEFAULT_CYCLE_SAMPLES = 2000


def _bits(mask: int) -> List[int]:
    return [a for a in range(mask.bit_length()) if mask >> a & 1]


def _mask(values: Iterable[int]) -> int:
    m = 0
    for v in values:
        m |= 1 << int(v)
    return m


# ---------------------------------------------------------------------------
# (k,l)-minimality


@dataclass
class KLState:
    """Per-subset assignment tables of a (k,l)-minimal instance.

    ``tables[S]`` for a sorted tuple ``S`` of variable indices is a boolean
    array with one axis of length ``num_values`` per variable of ``S``.
    """

    k: int
    l: int
    instance: Instance
    tables: Dict[Tuple[int, ...], np.ndarray]
    unsat: bool = False

    @property
    def num_values(self) -> int:
        return self.instance.template.domain_size

    def table(self, scope: Sequence[int]) -> np.ndarray:
        """Table over ``scope`` in the given variable order (repeats not allowed)."""
        key = tuple(sorted(scope))
        if len(set(scope)) != len(scope):
            raise ContractError("scope variables must be distinct")
        t = self.tables[key]
        order = [key.index(v) for v in scope]
        return np.transpose(t, order)

    def tuples(self, scope: Sequence[int]) -> List[Tuple[int, ...]]:
        """Allowed tuples over ``scope`` in lexicographic order."""
        return [tuple(int(v) for v in row) for row in np.argwhere(self.table(scope))]

    def domain(self, var: int) -> Tuple[int, ...]:
        return tuple(int(a) for a in np.flatnonzero(self.tables[(var,)]))

    def domains(self) -> List[Tuple[int, ...]]:
        return [self.domain(i) for i in range(len(self.instance.variables))]

    def is_exact(self) -> bool:
        """With ``n <= l`` the whole-variable table is the solution set."""
        return len(self.instance.variables) <= self.l

    def same_as(self, other: "KLState") -> bool:
        if self.unsat or other.unsat:
            return self.unsat == other.unsat
        return self.tables.keys() == other.tables.keys() and all(
            np.array_equal(self.tables[s], other.tables[s]) for s in self.tables
        )


def kl_table_size(n: int, l: int, num_values: int) -> int:
    return sum(comb(n, s) * num_values**s for s in range(1, min(l, n) + 1))


def enforce_kl_minimality(instance: Instance, k: int, l: int, bound: int = DEFAULT_KL_BOUND,
                          rng: Optional[np.random.Generator] = None) -> KLState:
    """Compute the (k,l)-minimal reduct of ``instance``.

    Every subset of at most ``l`` variables gets a table; every subset of at
    most ``k`` variables inside it must equal the projection.  ``rng``
    shuffles the processing order (the fixpoint does not depend on it).
    """
    if not (l >= k >= 1):
        raise ContractError(f"need l >= k >= 1, got k={k}, l={l}")
    n = len(instance.variables)
    d = instance.template.domain_size
    size = kl_table_size(n, l, d)
    if size > bound:
        raise BoundExceededError("(k,l)-minimality tables", size, bound)
    for c in instance.constraints:
        if len(set(c.scope)) > l:
            raise ContractError(f"constraint {c.relation} has more than l={l} distinct variables")

    subsets: List[Tuple[int, ...]] = []
    for s in range(1, min(l, n) + 1):
        subsets.extend(itertools.combinations(range(n), s))

    tables = {}
    grids: Dict[int, np.ndarray] = {}
    dense_cache = {}
    for S in subsets:
        r = len(S)
        if r not in grids:
            grids[r] = np.indices((d,) * r)
        t = np.ones((d,) * r, dtype=bool)
        for ax, v in enumerate(S):
            dom = np.zeros(d, dtype=bool)
            dom[list(instance.domains[v])] = True
            shape = [1] * r
            shape[ax] = d
            t &= dom.reshape(shape)
        pos = {v: i for i, v in enumerate(S)}
        for c in instance.constraints:
            if not set(c.scope) <= pos.keys():
                continue
            dense = dense_cache.get(c.relation)
            if dense is None:
                dense = instance.template.relation(c.relation).dense(d)
                dense_cache[c.relation] = dense
            t &= dense[tuple(grids[r][pos[v]] for v in c.scope)]
        tables[S] = t

    # (S, T, axes of S dropped to reach T, broadcast shape of T inside S)
    links: Dict[Tuple[int, ...], List] = {}
    supersets: Dict[Tuple[int, ...], List[Tuple[int, ...]]] = {S: [] for S in subsets}
    for S in subsets:
        items = []
        for t_size in range(1, min(k, len(S) - 1) + 1):
            for T in itertools.combinations(S, t_size):
                drop = tuple(i for i, v in enumerate(S) if v not in T)
                shape = tuple(d if v in T else 1 for v in S)
                items.append((T, drop, shape))
                supersets[T].append(S)
        links[S] = items

    order = list(subsets)
    if rng is not None:
        rng.shuffle(order)
        for S in order:
            rng.shuffle(links[S])
    queue = deque(order)
    queued = set(order)

    def empty_state():
        return KLState(k, l, instance, {S: np.zeros_like(t) for S, t in tables.items()}, True)

    if any(not t.any() for t in tables.values()):
        return empty_state()

    # tables only shrink, so a change shows up as a smaller count
    counts = {S: np.count_nonzero(t) for S, t in tables.items()}
    while queue:
        S = queue.popleft()
        queued.discard(S)
        while True:
            tS = tables[S]
            changed_self = False
            for T, drop, shape in links[S]:
                proj = tS.any(axis=drop)
                newT = tables[T] & proj
                cT = np.count_nonzero(newT)
                if cT != counts[T]:
                    if not cT:
                        return empty_state()
                    tables[T] = newT
                    counts[T] = cT
                    for S2 in supersets[T]:
                        if S2 != S and S2 not in queued:
                            queue.append(S2)
                            queued.add(S2)
                    if T not in queued:
                        queue.append(T)
                        queued.add(T)
                newS = tS & tables[T].reshape(shape)
                cS = np.count_nonzero(newS)
                if cS != counts[S]:
                    if not cS:
                        return empty_state()
                    tables[S] = tS = newS
                    counts[S] = cS
                    changed_self = True
            if not changed_self:
                break
    return KLState(k, l, instance, tables)


# ---------------------------------------------------------------------------
# unary states and the LAC / SLAC kernels


@dataclass(frozen=True)
class UnaryState:
    """Candidate sets ``B_x`` as bit masks; ``contradiction`` flags failure."""

    masks: Tuple[int, ...]
    contradiction: bool = False

    @classmethod
    def full(cls, target) -> "UnaryState":
        return cls(tuple(_domain_masks(target)))

    @classmethod
    def from_sets(cls, sets: Sequence[Iterable[int]]) -> "UnaryState":
        return cls(tuple(_mask(s) for s in sets))

    def sets(self) -> List[Tuple[int, ...]]:
        return [tuple(_bits(m)) for m in self.masks]

    def sizes(self) -> List[int]:
        return [bin(m).count("1") for m in self.masks]

    def restrict(self, var: int, mask: int) -> "UnaryState":
        masks = list(self.masks)
        masks[var] &= mask
        return UnaryState(tuple(masks), self.contradiction)

    def __le__(self, other: "UnaryState") -> bool:
        return all(a & ~b == 0 for a, b in zip(self.masks, other.masks))


@dataclass
class Arcs:
    """Directed constraint arcs grouped by source variable (CSR layout)."""

    n: int
    num_values: int
    start: np.ndarray
    dst: np.ndarray
    rows: np.ndarray
    base_masks: np.ndarray


def _domain_masks(target) -> List[int]:
    if isinstance(target, Network):
        return [int(m) for m in target.domain_masks()]
    masks = [_mask(d) for d in target.domains]
    for c in target.constraints:
        rel = target.template.relation(c.relation)
        if len(set(c.scope)) == 1:
            x = c.scope[0]
            ok = [t[0] for t in rel.tuples if len(set(t)) == 1]
            masks[x] &= _mask(ok)
    return masks


def build_arcs(target: Union[Instance, Network]) -> Arcs:
    """Arcs of a binary instance or network.

    Unary constraints and binary constraints on a repeated variable are
    folded into the base domains.
    """
    if isinstance(target, Network):
        n, d = target.n, target.num_values
        src, dst, rows = [], [], []
        for u in range(n):
            for v in range(n):
                if u != v and (target.edges[u, v] or target.edges[v, u]):
                    src.append(u)
                    dst.append(v)
                    rows.append(target.rows[u, v])
        base = np.array(_domain_masks(target), dtype=np.uint64)
    else:
        n = len(target.variables)
        d = target.template.domain_size
        if d > 62:
            raise ContractError("at most 62 values supported")
        src, dst, rows = [], [], []
        for c in target.constraints:
            if len(set(c.scope)) == 1:
                continue
            if len(c.scope) != 2:
                raise ContractError("LAC needs a binary instance")
            u, v = c.scope
            rel = target.template.relation(c.relation)
            fwd = np.zeros(d, dtype=np.uint64)
            bwd = np.zeros(d, dtype=np.uint64)
            for a, b in rel.tuples:
                fwd[a] |= np.uint64(1 << b)
                bwd[b] |= np.uint64(1 << a)
            src += [u, v]
            dst += [v, u]
            rows += [fwd, bwd]
        base = np.array(_domain_masks(target), dtype=np.uint64)
    order = sorted(range(len(src)), key=lambda e: (src[e], e))
    start = np.zeros(n + 1, dtype=np.int64)
    for e in order:
        start[src[e] + 1] += 1
    start = np.cumsum(start)
    dst_arr = np.array([dst[e] for e in order], dtype=np.int64)
    rows_arr = (np.array([rows[e] for e in order], dtype=np.uint64)
                if order else np.zeros((0, d), dtype=np.uint64))
    return Arcs(n, d, start, dst_arr, rows_arr.reshape(len(order), d), base)


@njit(cache=True)
def _image(rows, e, m):
    out = np.uint64(0)
    a = 0
    while m:
        if m & np.uint64(1):
            out |= rows[e, a]
        m >>= np.uint64(1)
        a += 1
    return out


@njit(cache=True)
def _lac_kernel(start, dst, rows, B, record):
    """Breadth-first derivation of unary facts.

    Returns (contradiction, fact variables, fact masks).  Facts are only
    recorded when ``record`` is set.
    """
    n = B.shape[0]
    seen = set()
    cap = 64
    qv = np.empty(cap, dtype=np.int64)
    qm = np.empty(cap, dtype=np.uint64)
    tail = 0
    for v in range(n):
        if B[v] == 0:
            return True, qv[:0], qm[:0]
        seen.add((v, B[v]))
        if tail == cap:
            cap *= 2
            qv2 = np.empty(cap, dtype=np.int64)
            qm2 = np.empty(cap, dtype=np.uint64)
            qv2[:tail] = qv[:tail]
            qm2[:tail] = qm[:tail]
            qv, qm = qv2, qm2
        qv[tail] = v
        qm[tail] = B[v]
        tail += 1
    head = 0
    while head < tail:
        u = qv[head]
        m = qm[head]
        head += 1
        for e in range(start[u], start[u + 1]):
            v = dst[e]
            img = _image(rows, e, m) & B[v]
            if img == 0:
                return True, qv[:tail], qm[:tail]
            key = (v, img)
            if key in seen:
                continue
            seen.add(key)
            if tail == cap:
                cap *= 2
                qv2 = np.empty(cap, dtype=np.int64)
                qm2 = np.empty(cap, dtype=np.uint64)
                qv2[:tail] = qv[:tail]
                qm2[:tail] = qm[:tail]
                qv, qm = qv2, qm2
            qv[tail] = v
            qm[tail] = img
            tail += 1
    if not record:
        return False, qv[:0], qm[:0]
    return False, qv[:tail], qm[:tail]


@njit(cache=True)
def _slac_kernel(start, dst, rows, B, var_order):
    d = rows.shape[1] if rows.shape[0] > 0 else 64
    changed = True
    while changed:
        changed = False
        for x in var_order:
            keep = np.uint64(0)
            for a in range(d):
                bit = np.uint64(1) << np.uint64(a)
                if not (B[x] & bit):
                    continue
                B2 = B.copy()
                B2[x] = bit
                bad, _, _ = _lac_kernel(start, dst, rows, B2, False)
                if not bad:
                    keep |= bit
            if keep != B[x]:
                B[x] = keep
                changed = True
                if keep == 0:
                    return B, False
    return B, True


@dataclass
class LACResult:
    """Outcome of LAC: derived facts per variable and their intersection."""

    contradiction: bool
    facts: Dict[int, List[int]] = field(default_factory=dict)
    supported: Optional[UnaryState] = None

    def minimal_facts(self, var: int) -> List[int]:
        ms = sorted(set(self.facts.get(var, [])), key=lambda m: (bin(m).count("1"), m))
        out = []
        for m in ms:
            if not any(o & ~m == 0 for o in out):
                out.append(m)
        return out


def _initial_masks(target, arcs: Arcs, state: Optional[UnaryState]) -> np.ndarray:
    B = arcs.base_masks.copy()
    if state is not None:
        if len(state.masks) != arcs.n:
            raise ContractError("state does not match the instance")
        B &= np.array(state.masks, dtype=np.uint64)
    return B


def run_lac(target: Union[Instance, Network], state: Optional[UnaryState] = None,
            arcs: Optional[Arcs] = None) -> LACResult:
    """Run LAC on the restriction of ``target`` to ``state``."""
    arcs = arcs or build_arcs(target)
    B = _initial_masks(target, arcs, state)
    if arcs.n == 0:
        return LACResult(False, {}, UnaryState(()))
    bad, qv, qm = _lac_kernel(arcs.start, arcs.dst, arcs.rows, B, True)
    facts: Dict[int, List[int]] = {}
    for v, m in zip(qv.tolist(), qm.tolist()):
        facts.setdefault(int(v), []).append(int(m))
    if bad:
        return LACResult(True, facts, None)
    sup = []
    for v in range(arcs.n):
        acc = int(B[v])
        for m in facts.get(v, []):
            acc &= m
        sup.append(acc)
    return LACResult(False, facts, UnaryState(tuple(sup)))


def lac_fails(target, state: Optional[UnaryState] = None, arcs: Optional[Arcs] = None) -> bool:
    arcs = arcs or build_arcs(target)
    B = _initial_masks(target, arcs, state)
    if arcs.n == 0:
        return False
    bad, _, _ = _lac_kernel(arcs.start, arcs.dst, arcs.rows, B, False)
    return bool(bad)


def run_slac(target: Union[Instance, Network], state: Optional[UnaryState] = None,
             order: Optional[Sequence[int]] = None, shortcut: bool = True,
             arcs: Optional[Arcs] = None,
             path_consistent: Optional[bool] = None) -> UnaryState:
    """Singleton linear arc consistency (the greatest SLAC fixpoint).

    With ``shortcut`` on, a complete path-consistent network with no extra
    unary restriction is returned unchanged: there a singleton restriction
    can never make LAC fail, so the verbatim loop would delete nothing.
    ``path_consistent=True`` lets a caller vouch for path consistency
    instead of having it re-checked.
    """
    if (shortcut and path_consistent and isinstance(target, Network) and state is None
            and target.n and bool(np.all(target.edges | np.eye(target.n, dtype=bool)))):
        masks = target.domain_masks()
        return UnaryState(tuple(int(m) for m in masks), bool(np.any(masks == 0)))
    arcs = arcs or build_arcs(target)
    B = _initial_masks(target, arcs, state)
    if arcs.n == 0:
        return UnaryState(tuple(int(m) for m in B))
    if np.any(B == 0):
        return UnaryState(tuple(int(m) for m in B), True)
    if (shortcut and isinstance(target, Network) and state is None
            and bool(np.all(target.edges | np.eye(target.n, dtype=bool)))
            and (path_consistent or is_path_consistent(target))):
        return UnaryState(tuple(int(m) for m in B))
    var_order = np.array(list(order) if order is not None else range(arcs.n), dtype=np.int64)
    out, ok = _slac_kernel(arcs.start, arcs.dst, arcs.rows, B.copy(), var_order)
    return UnaryState(tuple(int(m) for m in out), not ok)


# ---------------------------------------------------------------------------
# path patterns


@dataclass(frozen=True)
class Step:
    """One traversal of a binary constraint.

    For an :class:`Instance` the constraint id is its index in
    ``instance.constraints``; for a :class:`Network` it is a pair ``(i, j)``
    with ``i < j``.  Forward traversal goes from the first scope variable to
    the second.
    """

    constraint: Union[int, Tuple[int, int]]
    forward: bool = True

    def reversed(self) -> "Step":
        return Step(self.constraint, not self.forward)


def _step_ends(target, step: Step) -> Tuple[int, int]:
    if isinstance(target, Network):
        i, j = step.constraint
        if not i < j:
            raise ContractError("network steps are keyed by pairs (i, j) with i < j")
    else:
        c = target.constraints[step.constraint]
        if len(c.scope) != 2:
            raise ContractError("steps need binary constraints")
        i, j = c.scope
    return (i, j) if step.forward else (j, i)


def _step_rows(target, step: Step, masks=None) -> Tuple[int, int, np.ndarray]:
    u, v = _step_ends(target, step)
    if isinstance(target, Network):
        rows = target.rows[u, v].astype(np.uint64)
        rows = [int(r) for r in rows]
    else:
        c = target.constraints[step.constraint]
        rel = target.template.relation(c.relation)
        rows = [0] * target.template.domain_size
        for a, b in rel.tuples:
            if step.forward:
                rows[a] |= 1 << b
            else:
                rows[b] |= 1 << a
    if masks is not None:
        rows = [r & masks[v] if masks[u] >> a & 1 else 0 for a, r in enumerate(rows)]
    return u, v, rows


@dataclass(frozen=True)
class PathPattern:
    steps: Tuple[Step, ...]
    start: int
    end: int

    @classmethod
    def build(cls, target, steps: Sequence[Step], start: Optional[int] = None) -> "PathPattern":
        steps = tuple(steps)
        if not steps:
            if start is None:
                raise ContractError("an empty pattern needs an explicit start variable")
            return cls((), start, start)
        first, cur = _step_ends(target, steps[0])
        if start is not None and start != first:
            raise ContractError(f"pattern starts at {first}, not {start}")
        for prev, st in zip(steps, steps[1:]):
            if prev.constraint == st.constraint:
                raise ContractError("adjacent steps must use distinct constraints")
            u, v = _step_ends(target, st)
            if u != cur:
                raise ContractError(f"step on {st.constraint} starts at {u}, expected {cur}")
            cur = v
        return cls(steps, first, cur)

    @classmethod
    def through(cls, net: Network, variables: Sequence[int]) -> "PathPattern":
        """Pattern on a network visiting ``variables`` in order."""
        steps = []
        for u, v in zip(variables, variables[1:]):
            if u == v:
                raise ContractError("consecutive variables must differ")
            steps.append(Step((min(u, v), max(u, v)), u < v))
        return cls.build(net, steps, start=variables[0])

    def inverse(self) -> "PathPattern":
        return PathPattern(tuple(s.reversed() for s in reversed(self.steps)), self.end, self.start)

    def then(self, other: "PathPattern") -> "PathPattern":
        if self.end != other.start:
            raise ContractError("patterns do not chain")
        if self.steps and other.steps and self.steps[-1].constraint == other.steps[0].constraint:
            raise ContractError("adjacent steps must use distinct constraints")
        return PathPattern(self.steps + other.steps, self.start, other.end)

    def __len__(self):
        return len(self.steps)


def pattern_plus(target, values: Iterable[int], pattern: PathPattern,
                 state: Optional[UnaryState] = None) -> frozenset:
    """End values of realizations of ``pattern`` starting in ``values``.

    With ``state`` every variable along the way is restricted to its ``B_x``.
    """
    masks = state.masks if state is not None else None
    cur = _mask(values)
    if masks is not None:
        cur &= masks[pattern.start]
    for st in pattern.steps:
        u, v, rows = _step_rows(target, st, masks)
        nxt = 0
        for a in _bits(cur):
            nxt |= rows[a]
        cur = nxt
    return frozenset(_bits(cur))


def pattern_minus(target, values: Iterable[int], pattern: PathPattern,
                  state: Optional[UnaryState] = None) -> frozenset:
    return pattern_plus(target, values, pattern.inverse(), state)


def _incident_steps(target) -> Dict[int, List[Step]]:
    out: Dict[int, List[Step]] = {}
    if isinstance(target, Network):
        for i in range(target.n):
            for j in range(i + 1, target.n):
                if target.edges[i, j] or target.edges[j, i]:
                    out.setdefault(i, []).append(Step((i, j), True))
                    out.setdefault(j, []).append(Step((i, j), False))
    else:
        for cid, c in enumerate(target.constraints):
            if len(c.scope) == 2 and c.scope[0] != c.scope[1]:
                out.setdefault(c.scope[0], []).append(Step(cid, True))
                out.setdefault(c.scope[1], []).append(Step(cid, False))
    return out


def iter_cycles(target, base: int, max_length: int):
    """Cycle patterns based at ``base`` with at most ``max_length`` steps (DFS order)."""
    incident = _incident_steps(target)

    def rec(var, steps):
        if steps and var == base:
            yield PathPattern(tuple(steps), base, base)
        if len(steps) == max_length:
            return
        for st in incident.get(var, []):
            if steps and steps[-1].constraint == st.constraint:
                continue
            _, v = _step_ends(target, st)
            steps.append(st)
            yield from rec(v, steps)
            steps.pop()

    yield from rec(base, [])


def check_slac_cycles(target, state: UnaryState, max_length: int = DEFAULT_CYCLE_LENGTH,
                      exhaustive: bool = False, max_cycles: int = DEFAULT_CYCLE_SAMPLES) -> bool:
    """Check that every ``a`` in ``B_x`` returns to itself along cycles at ``x``.

    Without ``exhaustive`` at most ``max_cycles`` cycles per variable are
    checked, in depth-first order.
    """
    if state.contradiction:
        return False
    n = len(state.masks)
    for x in range(n):
        values = _bits(state.masks[x])
        for count, cyc in enumerate(iter_cycles(target, x, max_length)):
            if not exhaustive and count >= max_cycles:
                break
            for a in values:
                if a not in pattern_plus(target, [a], cyc, state):
                    return False
    return True
