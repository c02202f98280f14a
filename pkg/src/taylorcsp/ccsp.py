"""Cyclic CSPs over a simple absorption-free algebra.

Every domain of a CCSP is a copy of one algebra and every constraint is
either the graph of an isomorphism or a full product.  Isomorphism edges
split the variables into components; each component is solved by Gaussian
elimination when the algebra is affine and by SLAC when it is skew-free.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numba import njit
from sympy import isprime

from .algebra.analysis import (
    AffineStructure,
    TrichotomyVerdict,
    affine_structure,
    classify_simple,
    linkedness_congruences,
)
from .algebra.core import FiniteAlgebra, is_subuniverse, power
from .consistency import run_slac
from .errors import ContractError, PremiseViolation
from .network import Network

ISO = "iso"
FULL = "full"
OTHER = "other"


class HypothesisViolation(ContractError):
    """Input to a property harness does not satisfy its hypothesis."""


@dataclass(frozen=True)
class EdgeKind:
    kind: str
    bijection: Optional[Tuple[int, ...]] = None


def classify_binary_constraint(rel: np.ndarray, dom_x: Sequence[int], dom_y: Sequence[int],
                               algebra: Optional[FiniteAlgebra] = None) -> EdgeKind:
    """Classify ``rel`` (boolean matrix) restricted to ``dom_x x dom_y``.

    ``bijection[a]`` is the partner of ``a`` (``-1`` outside ``dom_x``).  With
    ``algebra`` given, an isomorphism graph must also be an automorphism.
    """
    rel = np.asarray(rel, dtype=bool)
    dx = np.zeros(rel.shape[0], dtype=bool)
    dy = np.zeros(rel.shape[1], dtype=bool)
    dx[list(dom_x)] = True
    dy[list(dom_y)] = True
    sub = rel & dx[:, None] & dy[None, :]
    if (sub.any(axis=1) != dx).any() or (sub.any(axis=0) != dy).any():
        raise ContractError("relation is not subdirect")
    if np.array_equal(sub, dx[:, None] & dy[None, :]):
        return EdgeKind(FULL)
    if (sub.sum(axis=1)[dx] == 1).all() and (sub.sum(axis=0)[dy] == 1).all():
        bij = tuple(int(np.argmax(sub[a])) if dx[a] else -1 for a in range(rel.shape[0]))
        if algebra is not None and not _is_automorphism(algebra, bij):
            return EdgeKind(OTHER)
        return EdgeKind(ISO, bij)
    return EdgeKind(OTHER)


def _is_automorphism(alg: FiniteAlgebra, perm: Sequence[int]) -> bool:
    key = tuple(int(v) for v in perm)
    memo = alg._cache.setdefault("automorphism", {})
    if key not in memo:
        memo[key] = _check_automorphism(alg, np.asarray(key, dtype=np.int64))
    return memo[key]


def _check_automorphism(alg: FiniteAlgebra, perm: np.ndarray) -> bool:
    if len(perm) != alg.size or sorted(perm.tolist()) != list(range(alg.size)):
        return False
    for op in alg.operations:
        cube = op.cube()
        mapped = cube[np.ix_(*([perm] * op.arity))] if op.arity else cube
        if not np.array_equal(mapped, perm[cube]):
            return False
    return True


_KIND_CODES = {FULL: 0, ISO: 1, OTHER: 2}


@njit(cache=True)
def _classify_edges(rows, dom, k):
    """Edge kinds of all pairs ``i < j``: 0 full, 1 iso, 2 other, 3 not subdirect."""
    n = rows.shape[0]
    E = n * (n - 1) // 2
    pairs = np.empty((E, 2), dtype=np.int64)
    codes = np.empty(E, dtype=np.int8)
    bij = np.full((E, k), -1, dtype=np.int64)
    e = 0
    one = np.uint64(1)
    for i in range(n):
        for j in range(i + 1, n):
            pairs[e, 0] = i
            pairs[e, 1] = j
            dx = dom[i]
            dy = dom[j]
            full = True
            iso = True
            subdirect = True
            cols = np.uint64(0)
            for a in range(k):
                if not (dx >> np.uint64(a)) & one:
                    continue
                r = rows[i, j, a] & dy
                if r == 0:
                    subdirect = False
                    break
                if r != dy:
                    full = False
                if r & (r - one):
                    iso = False
                elif iso:
                    if cols & r:
                        iso = False
                    b = 0
                    while not (r >> np.uint64(b)) & one:
                        b += 1
                    bij[e, a] = b
                cols |= r
            if subdirect and cols != dy:
                subdirect = False
            if not subdirect:
                codes[e] = 3
            elif full:
                codes[e] = 0
            elif iso:
                codes[e] = 1
            else:
                codes[e] = 2
            if codes[e] != 1:
                for a in range(k):
                    bij[e, a] = -1
            e += 1
    return pairs, codes, bij
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


def _unique_perms(perms: np.ndarray):
    """``np.unique(perms, axis=0, return_inverse=True)`` via integer keys."""
    k = perms.shape[1]
    keys = (perms.astype(np.int64) * (k ** np.arange(k - 1, -1, -1, dtype=np.int64))).sum(axis=1)
    uk, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    return perms[first], inverse.reshape(-1)


@dataclass
class CCSPInstance:
    """A CCSP given as a network over the elements of one shared algebra.

    Edge data is kept in arrays: ``pairs[e] = (i, j)`` with ``i < j``,
    ``codes[e]`` the edge kind and ``bij[e]`` the bijection for isomorphism
    edges (``-1`` elsewhere).
    """

    network: Network
    algebra: FiniteAlgebra
    verdict: TrichotomyVerdict
    pairs: np.ndarray
    codes: np.ndarray
    bij: np.ndarray

    @classmethod
    def build(cls, network: Network, algebra: FiniteAlgebra,
              verdict: Optional[TrichotomyVerdict] = None) -> "CCSPInstance":
        if network.num_values != algebra.size:
            raise ContractError("network values must be the algebra elements")
        verdict = verdict if verdict is not None else classify_simple(algebra)
        dom = network.domain_masks().astype(np.uint64)
        pairs, codes, bij = _classify_edges(network.rows, dom, algebra.size)
        if (codes == 3).any():
            e = int(np.flatnonzero(codes == 3)[0])
            raise ContractError(f"constraint {tuple(pairs[e].tolist())} is not subdirect")
        full = int(algebra.full_mask)
        whole = (dom[pairs[:, 0]] == full) & (dom[pairs[:, 1]] == full) if len(pairs) else \
            np.zeros(0, dtype=bool)
        cand = np.flatnonzero((codes == 1) & whole)
        if len(cand):
            perms, inverse = _unique_perms(bij[cand])
            good = np.array([_is_automorphism(algebra, tuple(pm)) for pm in perms.tolist()])
            codes[cand[~good[inverse.reshape(-1)]]] = 2
        return cls(network, algebra, verdict, pairs, codes, bij)

    def iso_perms(self):
        """Isomorphism edge ids, their distinct bijections, and each edge's bijection id."""
        hit = self.__dict__.get("_iso_perms")
        if hit is None:
            iso = np.flatnonzero(self.codes == 1)
            if len(iso):
                perms, inverse = _unique_perms(self.bij[iso])
            else:
                perms, inverse = np.zeros((0, self.algebra.size), dtype=np.int64), iso
            hit = self.__dict__["_iso_perms"] = (iso, perms, inverse)
        return hit

    @property
    def n(self) -> int:
        return self.network.n

    @property
    def kinds(self) -> Dict[Tuple[int, int], EdgeKind]:
        out = {}
        for (i, j), c, b in zip(self.pairs.tolist(), self.codes.tolist(), self.bij.tolist()):
            name = _KIND_NAMES[c]
            out[(i, j)] = EdgeKind(name, tuple(b) if name == ISO else None)
        return out

    def other_edges(self) -> List[Tuple[int, int]]:
        return [tuple(p) for p in self.pairs[self.codes == 2].tolist()]


@dataclass
class InstanceGraph:
    labels: Tuple[int, ...]
    edges: Tuple[Tuple[int, int], ...]

    @property
    def num_components(self) -> int:
        return max(self.labels) + 1 if self.labels else 0

    def components(self) -> List[List[int]]:
        out = [[] for _ in range(self.num_components)]
        for v, c in enumerate(self.labels):
            out[c].append(v)
        return out


def instance_graph_components(ccsp: CCSPInstance) -> InstanceGraph:
    """Connected components of the isomorphism edges, numbered by least vertex."""
    labels = _component_labels(ccsp.n, ccsp.pairs, ccsp.codes)
    edges = tuple(tuple(p) for p in ccsp.pairs[ccsp.codes == 1].tolist())
    return InstanceGraph(tuple(labels.tolist()), edges)


# ---------------------------------------------------------------------------
# linear algebra over GF(p)


class LinearSystem:
    """Equations ``row . x = rhs`` over the prime field ``GF(p)``."""

    def __init__(self, p: int, num_vars: int):
        if not isprime(p):
            raise ContractError(f"{p} is not prime")
        self.p = int(p)
        self.num_vars = int(num_vars)
        self.rows: List[np.ndarray] = []
        self.rhs: List[int] = []

    def add(self, coeffs: Dict[int, int], rhs: int) -> None:
        row = np.zeros((1, self.num_vars), dtype=np.int64)
        for v, c in coeffs.items():
            row[0, v] = (row[0, v] + c) % self.p
        self.rows.append(row)
        self.rhs.append(np.array([int(rhs) % self.p], dtype=np.int64))

    def add_rows(self, A: np.ndarray, b: np.ndarray) -> None:
        A = np.asarray(A, dtype=np.int64).reshape(-1, self.num_vars) % self.p
        b = np.asarray(b, dtype=np.int64).reshape(-1) % self.p
        self.rows.append(A)
        self.rhs.append(b)

    def matrix(self) -> Tuple[np.ndarray, np.ndarray]:
        if not self.rows:
            return np.zeros((0, self.num_vars), dtype=np.int64), np.zeros(0, dtype=np.int64)
        return np.concatenate(self.rows), np.concatenate(self.rhs)

    def check(self, solution: Sequence[int]) -> bool:
        A, b = self.matrix()
        x = np.asarray(solution, dtype=np.int64)
        return bool(np.all((A @ x - b) % self.p == 0))


def row_reduce(A: np.ndarray, b: np.ndarray, p: int):
    """Reduced row echelon form of ``[A | b]`` with least-index pivots.

    Returns ``(R, c, pivots)`` or ``None`` when a row reads ``0 = nonzero``.
    """
    M = np.concatenate([A % p, (b % p)[:, None]], axis=1).astype(np.int64)
    rows, cols = M.shape
    nv = cols - 1
    pivots = []
    r = 0
    for col in range(nv):
        if r == rows:
            break
        nz = np.flatnonzero(M[r:, col])
        if len(nz) == 0:
            continue
        piv = r + int(nz[0])
        if piv != r:
            M[[r, piv]] = M[[piv, r]]
        inv = pow(int(M[r, col]), p - 2, p)
        M[r] = (M[r] * inv) % p
        factors = M[:, col].copy()
        factors[r] = 0
        nzr = np.flatnonzero(factors)
        if len(nzr):
            M[nzr] = (M[nzr] - factors[nzr, None] * M[r][None, :]) % p
        pivots.append(col)
        r += 1
    if np.any(M[r:, nv] != 0):
        return None
    return M[:r, :nv], M[:r, nv], pivots


def gaussian_eliminate(system: LinearSystem) -> Optional[np.ndarray]:
    """A solution with free variables set to 0, or ``None`` when inconsistent."""
    A, b = system.matrix()
    if A.shape[0] == 0:
        return np.zeros(system.num_vars, dtype=np.int64)
    red = row_reduce(A, b, system.p)
    if red is None:
        return None
    R, c, pivots = red
    x = np.zeros(system.num_vars, dtype=np.int64)
    for row, col in enumerate(pivots):
        x[col] = c[row]
    if not system.check(x):
        raise AssertionError("elimination produced a non-solution")
    return x


# ---------------------------------------------------------------------------
# solving


@dataclass
class CCSPResult:
    """``solution[v]`` is an algebra element per variable (``None`` if UNSAT).

    ``solvable`` lists, for the base variable, the elements that extend to
    a solution.
    """

    solution: Optional[Tuple[int, ...]]
    base: Optional[int]
    solvable: Tuple[int, ...]
    components: Tuple[Tuple[int, ...], ...]
    method: str

    @property
    def satisfiable(self) -> bool:
        return self.solution is not None


def _require_ccsp(ccsp: CCSPInstance):
    bad = ccsp.other_edges()
    if bad:
        raise PremiseViolation("constraint is neither an isomorphism graph nor a full product",
                               {"edges": bad[:5]})


@njit(cache=True)
def _component_labels(n, pairs, codes):
    parent = np.arange(n)
    for e in range(pairs.shape[0]):
        if codes[e] != 1:
            continue
        a, b = pairs[e, 0], pairs[e, 1]
        while parent[a] != a:
            a = parent[a]
        while parent[b] != b:
            b = parent[b]
        if a != b:
            if a < b:
                parent[b] = a
            else:
                parent[a] = b
    labels = np.full(n, -1, dtype=np.int64)
    root_label = np.full(n, -1, dtype=np.int64)
    nxt = 0
    for v in range(n):
        r = v
        while parent[r] != r:
            r = parent[r]
        if root_label[r] < 0:
            root_label[r] = nxt
            nxt += 1
        labels[v] = root_label[r]
    return labels


@njit(cache=True)
def _mat_affine(L, X, c, out, p):
    # out = L X + c (mod p); X is a matrix when c is None-like (empty)
    rows = L.shape[0]
    for a in range(rows):
        for b in range(X.shape[1]):
            acc = 0
            for k in range(L.shape[1]):
                acc += L[a, k] * X[k, b]
            if c.shape[0]:
                acc += c[a]
            out[a, b] = acc % p


@njit(cache=True)
def _spanning_system(n, pairs, codes, map_id, Ls, cs, Linv, cinv, p, roots):
    """Express every variable through its component root along a BFS tree.

    Returns ``A, t`` with ``v_u = A_u r + t_u`` and the residual equations
    ``M r = rhs`` of the non-tree edges, tagged with the component root.
    """
    d = Ls.shape[1]
    E = pairs.shape[0]
    deg = np.zeros(n + 1, dtype=np.int64)
    for e in range(E):
        if codes[e] == 1:
            deg[pairs[e, 0] + 1] += 1
            deg[pairs[e, 1] + 1] += 1
    start = np.cumsum(deg)
    fill = start[:-1].copy()
    inc = np.empty(start[-1], dtype=np.int64)
    for e in range(E):
        if codes[e] == 1:
            for s in range(2):
                u = pairs[e, s]
                inc[fill[u]] = e
                fill[u] += 1
    root_of = np.full(n, -1, dtype=np.int64)
    A = np.zeros((n, d, d), dtype=np.int64)
    t = np.zeros((n, d), dtype=np.int64)
    tree = np.zeros(E, dtype=np.bool_)
    queue = np.empty(n, dtype=np.int64)
    empty = np.zeros(0, dtype=np.int64)
    for r in roots:
        if root_of[r] >= 0:
            continue
        root_of[r] = r
        for q in range(d):
            A[r, q, q] = 1
        head = 0
        tail = 1
        queue[0] = r
        while head < tail:
            u = queue[head]
            head += 1
            for idx in range(start[u], start[u + 1]):
                e = inc[idx]
                fwd = pairs[e, 0] == u
                v = pairs[e, 1] if fwd else pairs[e, 0]
                if root_of[v] >= 0:
                    continue
                root_of[v] = r
                tree[e] = True
                m = map_id[e]
                L = Ls[m] if fwd else Linv[m]
                c = cs[m] if fwd else cinv[m]
                _mat_affine(L, A[u], empty, A[v], p)
                _mat_affine(L, t[u].reshape(d, 1), c, t[v].reshape(d, 1), p)
                queue[tail] = v
                tail += 1
    count = 0
    for e in range(E):
        if codes[e] == 1 and not tree[e]:
            count += 1
    M = np.zeros((count, d, d), dtype=np.int64)
    rhs = np.zeros((count, d), dtype=np.int64)
    tag = np.zeros(count, dtype=np.int64)
    k = 0
    for e in range(E):
        if codes[e] == 1 and not tree[e]:
            i, j = pairs[e, 0], pairs[e, 1]
            m = map_id[e]
            # v_j = L v_i + c becomes (A_j - L A_i) r = L t_i + c - t_j
            for a in range(d):
                for b in range(d):
                    acc = A[j, a, b]
                    for q in range(d):
                        acc -= Ls[m, a, q] * A[i, q, b]
                    M[k, a, b] = acc % p
                acc = cs[m, a] - t[j, a]
                for q in range(d):
                    acc += Ls[m, a, q] * t[i, q]
                rhs[k, a] = acc % p
            tag[k] = root_of[i]
            k += 1
    return root_of, A, t, M, rhs, tag


def _affine_solve(ccsp: CCSPInstance, st: AffineStructure, base):
    """Gaussian elimination, one component at a time.

    Variables of a component are first expressed through a spanning tree as
    ``v_u = A_u r + t_u`` in the root unknown ``r``; every other equation then
    becomes a linear equation in ``r`` alone.
    """
    p, d, n = st.p, st.d, ccsp.n
    full = ccsp.algebra.full_mask
    pins: Dict[int, int] = {}
    masks = ccsp.network.domain_masks()
    for v in range(n):
        dom = int(masks[v])
        if dom != full:
            if bin(dom).count("1") != 1:
                raise PremiseViolation("affine CCSP with a partial domain", {"variable": v})
            pins[v] = dom.bit_length() - 1
    iso, perms, inverse = ccsp.iso_perms()
    map_id = np.zeros(len(ccsp.codes), dtype=np.int64)
    if len(iso):
        maps, inv_maps = [], []
        memo = st.__dict__.setdefault("_maps", {})
        for pm in perms:
            key = pm.tobytes()
            if key not in memo:
                memo[key] = (st.affine_map(pm), st.affine_map(np.argsort(pm)))
            fwd, bwd = memo[key]
            if fwd is None or bwd is None:
                e = iso[int(np.flatnonzero((ccsp.bij[iso] == pm).all(axis=1))[0])]
                raise PremiseViolation("isomorphism edge is not an affine map",
                                       {"edge": tuple(ccsp.pairs[e].tolist())})
            maps.append(fwd)
            inv_maps.append(bwd)
        map_id[iso] = inverse.reshape(-1)
        Ls = np.array([m[0] for m in maps], dtype=np.int64)
        cs = np.array([m[1] for m in maps], dtype=np.int64)
        Linv = np.array([m[0] for m in inv_maps], dtype=np.int64)
        cinv = np.array([m[1] for m in inv_maps], dtype=np.int64)
    else:
        Ls = Linv = np.zeros((1, d, d), dtype=np.int64)
        cs = cinv = np.zeros((1, d), dtype=np.int64)
    roots = np.array(([base] if base is not None else []) + list(range(n)), dtype=np.int64)
    root_of, A, t, M, rhs, tag = _spanning_system(
        n, ccsp.pairs, ccsp.codes, map_id, Ls, cs, Linv, cinv, p, roots)
    weights = p ** np.arange(d - 1, -1, -1, dtype=np.int64)
    lookup = np.zeros(p**d, dtype=np.int64)
    lookup[st.vectors @ weights] = np.arange(len(st.vectors))
    solution = np.zeros(n, dtype=np.int64)
    solvable: Tuple[int, ...] = ()
    for root in sorted(set(root_of.tolist())):
        members = np.flatnonzero(root_of == root)
        system = LinearSystem(p, d)
        sel = tag == root
        if sel.any():
            system.add_rows(M[sel].reshape(-1, d), rhs[sel].reshape(-1))
        for v in members.tolist():
            if v in pins:
                system.add_rows(A[v], (np.array(st.to_vector(pins[v])) - t[v]) % p)
        reduced = _reduced(system)
        if reduced is None:
            return None, ()
        if base is not None and root == base:
            ok_vals = [a for a in ccsp.network.domain(base)
                       if reduced.check(np.array(st.to_vector(a), dtype=np.int64))]
            solvable = tuple(ok_vals)
            if not ok_vals:
                return None, ()
            r = np.array(st.to_vector(ok_vals[0]), dtype=np.int64)
        else:
            r = gaussian_eliminate(reduced)
        vals = (A[members] @ r + t[members]) % p
        solution[members] = lookup[vals @ weights]
    return tuple(solution.tolist()), solvable


def _reduced(system: LinearSystem) -> Optional[LinearSystem]:
    A, b = system.matrix()
    if A.shape[0] == 0:
        return system
    red = row_reduce(A, b, system.p)
    if red is None:
        return None
    R, c, _ = red
    out = LinearSystem(system.p, system.num_vars)
    out.add_rows(R, c)
    return out


def solve_ccsp(ccsp: CCSPInstance, base: Optional[int] = None) -> CCSPResult:
    """Solve the CCSP; with ``base`` also report which base elements extend."""
    _require_ccsp(ccsp)
    labels = _component_labels(ccsp.n, ccsp.pairs, ccsp.codes)
    comp_t = tuple(tuple(np.flatnonzero(labels == c).tolist()) for c in range(int(labels.max()) + 1)) \
        if ccsp.n else ()
    kind = ccsp.verdict.kind
    if kind == "abelian":
        st = affine_structure(ccsp.algebra)
        if st is None:
            raise PremiseViolation("abelian algebra without an affine structure")
        solution, solvable = _affine_solve(ccsp, st, base)
        if solution is None:
            return CCSPResult(None, base, (), comp_t, "gaussian")
        return CCSPResult(solution, base, solvable, comp_t, "gaussian")
    if kind == "skew-free":
        return _solve_by_slac(ccsp, base, comp_t)
    raise PremiseViolation(f"CCSP algebra classified {ccsp.verdict}", {"verdict": str(ccsp.verdict)})


def _solve_by_slac(ccsp: CCSPInstance, base, comps) -> CCSPResult:
    net = ccsp.network
    state = run_slac(net, shortcut=False)
    if state.contradiction:
        return CCSPResult(None, base, (), comps, "slac")
    solvable: Tuple[int, ...] = ()
    cur = state
    if base is not None:
        ok = []
        for a in _bits_of(state.masks[base]):
            st = run_slac(net, state.restrict(base, 1 << a), shortcut=False)
            if not st.contradiction:
                ok.append(a)
        solvable = tuple(ok)
        if not ok:
            return CCSPResult(None, base, (), comps, "slac")
        cur = run_slac(net, state.restrict(base, 1 << ok[0]), shortcut=False)
    # self-reduction: fix variables one at a time, keeping SLAC
    for v in range(net.n):
        for a in _bits_of(cur.masks[v]):
            trial = run_slac(net, cur.restrict(v, 1 << a), shortcut=False)
            if not trial.contradiction:
                cur = trial
                break
        else:
            raise PremiseViolation("SLAC-consistent CCSP has no solution extending the choices",
                                   {"variable": v})
    solution = tuple(m.bit_length() - 1 for m in cur.masks)
    return CCSPResult(solution, base, solvable, comps, "slac")


def _bits_of(mask: int):
    return [a for a in range(mask.bit_length()) if mask >> a & 1]


def check_ccsp_solution(ccsp: CCSPInstance, solution: Sequence[int]) -> bool:
    rows = ccsp.network.rows
    n = ccsp.n
    return all(int(rows[i, j, solution[i]]) >> int(solution[j]) & 1
               for i in range(n) for j in range(n))


# ---------------------------------------------------------------------------
# rectangulation harness


def check_rectangulation(alg: FiniteAlgebra, relation: Sequence[Tuple[int, ...]], k: int) -> bool:
    """True iff a pairwise-linked subdirect ``R <= A^k`` is the full product.

    Raises :class:`HypothesisViolation` when ``R`` is not a subuniverse, not
    subdirect, or some pair of projections is not linked.
    """
    tuples = sorted(set(tuple(int(v) for v in t) for t in relation))
    if any(len(t) != k for t in tuples):
        raise ContractError(f"tuples must have length {k}")
    n = alg.size
    if k == 1:
        if set(t[0] for t in tuples) != set(range(n)):
            raise HypothesisViolation("not subdirect")
        return True
    pw = power(alg, k)
    codes = {pw.encode(t) for t in tuples}
    if not is_subuniverse(pw, codes):
        raise HypothesisViolation("relation is not a subuniverse of the power")
    for i, j in itertools.combinations(range(k), 2):
        pairs = {(t[i], t[j]) for t in tuples}
        try:
            link = linkedness_congruences(pairs, n, n)
        except ContractError as exc:
            raise HypothesisViolation(str(exc)) from None
        if not link.linked:
            raise HypothesisViolation(f"projection to ({i}, {j}) is not linked")
    return len(tuples) == n**k
