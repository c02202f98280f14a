"""Algebraic predicates used to classify templates and to steer the solver.

Covers polymorphism and WNU search, cores, absorption, the three cases of
the simple idempotent trichotomy, affine structure and linkedness.
Bounded searches are three-valued: a definite answer, or ``None`` /
:class:`UnknownOutcome` when a bound was hit.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import sympy

from ..errors import BoundExceededError, ContractError, UnknownOutcome
from ..instance import Relation, Template
from .core import (Congruence, FiniteAlgebra, OperationTable, TermOperation, _UnionFind,
                   all_congruences, congruence_generated_by, elements_of, evaluate_derivation,
                   is_simple, mask_of, power, restricted_term_search, subuniverse_masks)

DEFAULT_POLYMORPHISM_ARITY = 4
DEFAULT_NODE_LIMIT = 200000
DEFAULT_ABSORPTION_ARITY = 3
DEFAULT_CORE_BOUND = 8


# ---------------------------------------------------------------------------
# polymorphism search


@dataclass(frozen=True)
class PolymorphismQuery:
    """Search for an ``arity``-ary operation preserving every template relation.

    ``identities`` is a list of pairs of equal-length symbol patterns, e.g.
    ``(("x", "x", "y"), ("x", "y", "x"))`` for one WNU equation.
    ``avoid`` lists values the operation may never return.
    """

    template: Template
    arity: int
    identities: Tuple[Tuple[Tuple[str, ...], Tuple[str, ...]], ...] = ()
    idempotent: bool = False
    avoid: Tuple[int, ...] = ()

    def __post_init__(self):
        for left, right in self.identities:
            if len(left) != self.arity or len(right) != self.arity:
                raise ContractError("identity patterns must match the arity")


def wnu_identities(k: int):
    pats = []
    for i in range(k):
        pats.append(tuple("y" if j == i else "x" for j in range(k)))
    return tuple((pats[i], pats[i + 1]) for i in range(k - 1))


class _TableCSP:
    """CSP whose variables are table entries of the operation being searched."""

    def __init__(self, query: PolymorphismQuery, max_arity: int):
        tpl = query.template
        n = tpl.domain_size
        m = query.arity
        if m > max_arity:
            raise BoundExceededError("polymorphism arity", m, max_arity)
        self.n = n
        self.m = m
        total = n**m
        uf = _UnionFind(total)
        for left, right in query.identities:
            symbols = sorted(set(left) | set(right))
            for vals in itertools.product(range(n), repeat=len(symbols)):
                env = dict(zip(symbols, vals))
                a = _encode([env[s] for s in left], n)
                b = _encode([env[s] for s in right], n)
                uf.union(a, b)
        roots = np.array([uf.find(e) for e in range(total)])
        uniq, cls = np.unique(roots, return_inverse=True)
        self.entry_class = cls
        self.num_vars = len(uniq)
        self.doms = np.ones((self.num_vars, n), dtype=bool)
        self.consistent = True
        for a in query.avoid:
            self.doms[:, a] = False
        if query.idempotent:
            for a in range(n):
                c = cls[_encode([a] * m, n)]
                row = np.zeros(n, dtype=bool)
                row[a] = True
                self.doms[c] &= row
        self.groups = []
        for rel in tpl.relations:
            if not rel.tuples:
                if total:
                    self.consistent = False
                continue
            tup = rel.array
            r = rel.arity
            # each choice of m relation tuples gives one scope of table entries
            combos = np.array(list(itertools.product(range(len(tup)), repeat=m)), dtype=np.int64)
            entries = np.zeros((len(combos), r), dtype=np.int64)
            for j in range(m):
                entries = entries * n + tup[combos[:, j]]
            scopes = cls[entries]
            if r == 1:
                allowed = np.zeros(n, dtype=bool)
                allowed[tup[:, 0]] = True
                for c in np.unique(scopes[:, 0]):
                    self.doms[c] &= allowed
                continue
            scopes = np.unique(scopes, axis=0)
            onehots = [np.eye(n, dtype=np.int64)[tup[:, j]] for j in range(r)]
            self.groups.append((scopes, tup, onehots))
        if not self.doms.any(axis=1).all():
            self.consistent = False

    def propagate(self, doms) -> bool:
        changed = True
        while changed:
            changed = False
            for scopes, tup, onehots in self.groups:
                r = scopes.shape[1]
                valid = np.ones((len(scopes), len(tup)), dtype=bool)
                for j in range(r):
                    valid &= doms[scopes[:, j]][:, tup[:, j]]
                vi = valid.astype(np.int64)
                for j in range(r):
                    support = (vi @ onehots[j]) > 0
                    bad = doms[scopes[:, j]] & ~support
                    if bad.any():
                        rows, vals = np.nonzero(bad)
                        doms[scopes[rows, j], vals] = False
                        changed = True
                if changed and not doms.any(axis=1).all():
                    return False
        return bool(doms.any(axis=1).all())

    def solve(self, node_limit: int):
        if not self.consistent:
            return None
        doms = self.doms.copy()
        if not self.propagate(doms):
            return None
        nodes = [0]

        def rec(doms):
            sizes = doms.sum(axis=1)
            if (sizes == 1).all():
                return doms.argmax(axis=1)
            nodes[0] += 1
            if nodes[0] > node_limit:
                raise UnknownOutcome(f"polymorphism search exceeded {node_limit} nodes")
            open_vars = np.flatnonzero(sizes > 1)
            var = int(open_vars[np.argmin(sizes[open_vars])])
            for v in np.flatnonzero(doms[var]):
                trial = doms.copy()
                trial[var] = False
                trial[var, v] = True
                if self.propagate(trial):
                    res = rec(trial)
                    if res is not None:
                        return res
            return None

        values = rec(doms)
        if values is None:
            return None
        return values[self.entry_class]


def _encode(args, n):
    idx = 0
    for a in args:
        idx = idx * n + int(a)
    return idx


def find_polymorphism(query: PolymorphismQuery, max_arity: int = DEFAULT_POLYMORPHISM_ARITY,
                      node_limit: int = DEFAULT_NODE_LIMIT) -> Optional[OperationTable]:
    """An operation meeting the query, ``None`` if none exists.

    Raises :class:`UnknownOutcome` when the search budget runs out, which is
    distinct from a proof of absence.
    """
    csp = _TableCSP(query, max_arity)
    table = csp.solve(node_limit)
    if table is None:
        return None
    op = OperationTable("f", query.arity, query.template.domain_size, table)
    if not preserves_template(op, query.template):
        raise AssertionError("polymorphism search returned a non-polymorphism")
    return op


def preserves_relation(op: OperationTable, rel: Relation, batch: int = 1 << 16) -> bool:
    if not rel.tuples:
        return True
    tup = rel.array
    members = rel.dense(op.size)
    k = len(tup)
    total = k**op.arity
    for start in range(0, total, batch):
        codes = np.arange(start, min(total, start + batch), dtype=np.int64)
        cols = []
        for _ in range(op.arity):
            cols.append(codes % k)
            codes = codes // k
        out = op.apply([tup[c] for c in reversed(cols)])
        if not members[tuple(out.T)].all():
            return False
    return True


def preserves_template(op: OperationTable, template: Template) -> bool:
    return all(preserves_relation(op, r) for r in template.relations)


def satisfies_wnu(op: OperationTable) -> bool:
    """Pointwise check of idempotence and the WNU equations over all pairs."""
    n, k = op.size, op.arity
    if k < 2:
        return False
    x = np.repeat(np.arange(n), n)
    y = np.tile(np.arange(n), n)
    if not op.is_idempotent():
        return False
    first = None
    for i in range(k):
        vals = op.apply([y if j == i else x for j in range(k)])
        if first is None:
            first = vals
        elif not np.array_equal(first, vals):
            return False
    return True


@dataclass
class WNUSearch:
    wnu: Optional[OperationTable]
    arities_tested: Tuple[int, ...]
    taylor: Optional[bool]
    exhaustive: bool


def wnu_arities(domain_size: int) -> Tuple[int, ...]:
    p = sympy.nextprime(domain_size)
    return (3,) if p == 3 else (3, int(p))


def find_wnu(template: Template, arities_sufficient: bool = False,
             node_limit: int = DEFAULT_NODE_LIMIT) -> WNUSearch:
    """Look for a WNU polymorphism at arity 3, then the least prime above ``|A|``.

    A negative answer becomes ``taylor=False`` only when the caller vouches
    that the tested arities are sufficient; otherwise it stays ``None``.
    """
    tested = []
    exhaustive = True
    for k in wnu_arities(template.domain_size):
        tested.append(k)
        query = PolymorphismQuery(template, k, wnu_identities(k), idempotent=True)
        try:
            op = find_polymorphism(query, max_arity=k, node_limit=node_limit)
        except UnknownOutcome:
            exhaustive = False
            continue
        if op is not None:
            if not satisfies_wnu(op):
                raise AssertionError("WNU search returned a table violating the equations")
            return WNUSearch(op, tuple(tested), True, exhaustive)
    taylor = False if (arities_sufficient and exhaustive) else None
    return WNUSearch(None, tuple(tested), taylor, exhaustive)


# ---------------------------------------------------------------------------
# cores and singleton expansion


def _endomorphism_avoiding(template: Template, avoid: int, node_limit: int):
    if template.domain_size == 1:
        return None
    query = PolymorphismQuery(template, 1, avoid=(avoid,))
    return find_polymorphism(query, max_arity=1, node_limit=node_limit)


def is_core(template: Template, bound: int = DEFAULT_CORE_BOUND,
            node_limit: int = DEFAULT_NODE_LIMIT) -> bool:
    if template.domain_size > bound:
        raise BoundExceededError("core computation domain", template.domain_size, bound)
    return all(_endomorphism_avoiding(template, a, node_limit) is None
               for a in range(template.domain_size))


def induced_substructure(template: Template, elements: Sequence[int]) -> Template:
    elems = sorted(elements)
    pos = {e: i for i, e in enumerate(elems)}
    rels = []
    for r in template.relations:
        tuples = [tuple(pos[v] for v in t) for t in r.tuples if all(v in pos for v in t)]
        rels.append(Relation(r.name, r.arity, tuple(tuples)))
    return Template(len(elems), tuple(rels))


@dataclass
class CoreResult:
    core: Template
    elements: Tuple[int, ...]  # original elements, in core order
    retraction: Tuple[int, ...]  # endomorphism of the original onto the core


def core_of(template: Template, bound: int = DEFAULT_CORE_BOUND,
            node_limit: int = DEFAULT_NODE_LIMIT) -> CoreResult:
    """Shrink by non-surjective endomorphisms until every endomorphism is onto."""
    if template.domain_size > bound:
        raise BoundExceededError("core computation domain", template.domain_size, bound)
    current = template
    elements = tuple(range(template.domain_size))
    retraction = list(range(template.domain_size))
    while True:
        found = None
        for a in range(current.domain_size):
            f = _endomorphism_avoiding(current, a, node_limit)
            if f is not None:
                found = f
                break
        if found is None:
            return CoreResult(current, elements, tuple(retraction))
        image = sorted(set(found.table.tolist()))
        # compose so the retraction maps original elements into the new image
        local = {e: i for i, e in enumerate(elements)}
        retraction = [elements[int(found.table[local[r]])] for r in retraction]
        elements = tuple(elements[i] for i in image)
        current = induced_substructure(current, image)


def compute_core(template: Template, bound: int = DEFAULT_CORE_BOUND) -> Template:
    return core_of(template, bound).core


def singleton_name(a: int) -> str:
    return f"is_{a}"


def singleton_expansion(template: Template) -> Template:
    """Add the unary relation ``{a}`` for every element not already present."""
    rels = list(template.relations)
    names = {r.name for r in rels}
    present = {r.tuples for r in rels if r.arity == 1}
    for a in range(template.domain_size):
        if ((a,),) in present:
            continue
        name = singleton_name(a)
        while name in names:
            name = "_" + name
        names.add(name)
        rels.append(Relation(name, 1, ((a,),)))
    return Template(template.domain_size, tuple(rels))


# ---------------------------------------------------------------------------
# absorption


@dataclass
class AbsorptionCertificate:
    subuniverse: Tuple[int, ...]
    witness: TermOperation
    placements: Tuple[bool, ...]


@dataclass
class AbsorptionResult:
    subuniverse: Tuple[int, ...]
    certificate: Optional[AbsorptionCertificate]
    saturated: Dict[int, bool]

    @property
    def absorbs(self) -> bool:
        return self.certificate is not None

    @property
    def exact(self) -> bool:
        """True when a negative answer is proven for every tested arity."""
        return self.absorbs or all(self.saturated.values())


def _absorption_points(n, bmask, r):
    inside = np.array(elements_of(bmask), dtype=np.int64)
    everything = np.arange(n, dtype=np.int64)
    rows = set()
    for pos in range(r):
        axes = [everything if j == pos else inside for j in range(r)]
        for t in itertools.product(*axes):
            rows.add(t)
    return np.array(sorted(rows), dtype=np.int64).reshape(-1, r)


def verify_absorption(alg: FiniteAlgebra, subset, table: OperationTable) -> Tuple[bool, ...]:
    """Check ``t(B,..,B,A,B,..,B)`` lies in ``B`` separately at every placement."""
    inside = np.zeros(alg.size, dtype=bool)
    inside[list(subset)] = True
    members = np.flatnonzero(inside)
    everything = np.arange(alg.size)
    cube = table.cube()
    checks = []
    for pos in range(table.arity):
        axes = [everything if j == pos else members for j in range(table.arity)]
        checks.append(bool(inside[cube[np.ix_(*axes)]].all()))
    return tuple(checks)


def test_absorption(alg: FiniteAlgebra, subset, arity_bound: int = DEFAULT_ABSORPTION_ARITY,
                    max_size: int = 200000) -> AbsorptionResult:
    """Search a term witnessing that ``subset`` absorbs ``alg``.

    Arities 2..``arity_bound`` are tried in turn; at each arity the term
    clone is explored through its values on the argument tuples that matter,
    so an exhausted search proves there is no absorbing term of that arity.
    """
    subset = tuple(sorted(set(int(s) for s in subset)))
    bmask = mask_of(subset)
    key = ("absorb", bmask, arity_bound)
    if key in alg._cache:
        return alg._cache[key]
    if not subset or closure_is_not(alg, bmask):
        raise ContractError(f"{subset} is not a subuniverse")
    n = alg.size
    saturated: Dict[int, bool] = {}
    result = None
    if bmask == alg.full_mask:
        proj = TermOperation(1, OperationTable("x1", 1, n, np.arange(n)), ("var", 0))
        result = AbsorptionResult(subset, AbsorptionCertificate(subset, proj, (True,)), saturated)
    else:
        inside = np.zeros(n, dtype=bool)
        inside[list(subset)] = True
        for r in range(2, arity_bound + 1):
            points = _absorption_points(n, bmask, r)
            search = restricted_term_search(alg, points, lambda v: inside[v].all(axis=1),
                                            max_size=max_size)
            saturated[r] = search.saturated
            if search.hit is not None:
                deriv = search.derivations[search.hit]
                table = OperationTable("t", r, n, evaluate_derivation(alg, deriv, r))
                placements = verify_absorption(alg, subset, table)
                if not all(placements):
                    raise AssertionError("absorption witness failed re-verification")
                cert = AbsorptionCertificate(subset, TermOperation(r, table, deriv), placements)
                result = AbsorptionResult(subset, cert, saturated)
                break
        if result is None:
            result = AbsorptionResult(subset, None, saturated)
    alg._cache[key] = result
    return result


def closure_is_not(alg, mask) -> bool:
    from .core import closure_mask
    return closure_mask(alg, mask) != mask


@dataclass
class MinimalAbsorbing:
    subset: Tuple[int, ...]
    absorption_free: bool
    certificate: Optional[AbsorptionCertificate]
    exact: bool


def minimal_absorbing(alg: FiniteAlgebra, arity_bound: int = DEFAULT_ABSORPTION_ARITY,
                      within: Optional[int] = None) -> MinimalAbsorbing:
    """A minimal absorbing subuniverse, least in lexicographic order.

    When nothing proper absorbs (within the arity bound) the whole algebra is
    returned with ``absorption_free=True``.  ``exact`` reports whether all
    negative absorption answers along the way were proven.
    """
    key = ("minabs", arity_bound)
    if key in alg._cache:
        return alg._cache[key]
    full = alg.full_mask
    absorbing = []
    exact = True
    for m in subuniverse_masks(alg, bound=max(alg.size, 12)):
        if m == full:
            continue
        res = test_absorption(alg, elements_of(m), arity_bound)
        exact &= res.exact
        if res.absorbs:
            absorbing.append((m, res.certificate))
    minimal = [(m, c) for m, c in absorbing
               if not any(o != m and (o & m) == o for o, _ in absorbing)]
    if not minimal:
        out = MinimalAbsorbing(tuple(range(alg.size)), True, None, exact)
    else:
        m, cert = min(minimal, key=lambda mc: elements_of(mc[0]))
        out = MinimalAbsorbing(elements_of(m), False, cert, exact)
    alg._cache[key] = out
    return out


def is_absorption_free(alg: FiniteAlgebra, arity_bound: int = DEFAULT_ABSORPTION_ARITY) -> bool:
    return minimal_absorbing(alg, arity_bound).absorption_free


# ---------------------------------------------------------------------------
# trichotomy predicates


def depends_on(op: OperationTable, pos: int) -> bool:
    moved = np.moveaxis(op.cube(), pos, -1).reshape(-1, op.size)
    return bool((moved != moved[:, :1]).any())


def absorbing_elements(alg: FiniteAlgebra) -> Tuple[int, ...]:
    """Every element z with ``f(.., z, ..) = z`` wherever ``f`` depends on that argument.

    Checking basic operations suffices: a term depending on x has an outer
    operation depending on some argument whose subterm depends on x, so the
    property propagates by induction on the term.
    """
    out = []
    for z in range(alg.size):
        ok = True
        for op in alg.operations:
            for pos in range(op.arity):
                if not depends_on(op, pos):
                    continue
                sl = np.take(op.cube(), z, axis=pos)
                if not (sl == z).all():
                    ok = False
                    break
            if not ok:
                break
        if ok:
            out.append(z)
    return tuple(out)


def has_absorbing_element(alg: FiniteAlgebra) -> Optional[int]:
    """The unique absorbing element, or ``None`` if there is none or several."""
    found = absorbing_elements(alg)
    return found[0] if len(found) == 1 else None


@dataclass
class AbelianResult:
    value: Optional[bool]
    witness: Optional[dict] = None


def _term_condition_witness(alg: FiniteAlgebra, max_cols: int = 729):
    n = alg.size
    for op in alg.operations:
        r = op.arity
        if r < 2 or n ** (r - 1) > max_cols:
            continue
        for pos in range(r):
            rows = np.moveaxis(op.cube(), pos, 0).reshape(n, -1)
            eq = rows[:, :, None] == rows[:, None, :]
            for u in range(n):
                for v in range(n):
                    diff = eq[u] != eq[v]
                    if diff.any():
                        c, d = np.argwhere(diff)[0]
                        cols = np.array(np.unravel_index([c, d], (n,) * (r - 1))).T
                        return {"term": op.name, "position": pos, "u": u, "v": v,
                                "a": tuple(int(x) for x in cols[0]),
                                "b": tuple(int(x) for x in cols[1])}
    return None


def is_abelian(alg: FiniteAlgebra) -> AbelianResult:
    """Term-condition test via the congruence of ``A**2`` generated by the diagonal.

    The algebra is Abelian exactly when the diagonal is a whole block of that
    congruence.  On failure a term-condition witness among the basic
    operations is attached when one exists.
    """
    n = alg.size
    if n == 1:
        return AbelianResult(True)
    try:
        sq = power(alg, 2)
        diag = [a * n + a for a in range(n)]
        cong = congruence_generated_by(sq, [(diag[0], d) for d in diag[1:]])
    except BoundExceededError as exc:
        return AbelianResult(None, {"reason": str(exc)})
    block = set(cong.blocks()[cong.labels[diag[0]]])
    if block == set(diag):
        return AbelianResult(True)
    witness = _term_condition_witness(alg)
    extra = sorted(block - set(diag))
    info = {"diagonal_class_extra": [divmod(e, n) for e in extra]}
    if witness:
        info.update(witness)
    return AbelianResult(False, info)


@dataclass
class SkewFreeResult:
    value: Optional[bool]
    verified_n: int = 0
    witness: Optional[Congruence] = None
    reason: str = ""


def is_skew_free(alg: FiniteAlgebra, max_power: int = 2) -> SkewFreeResult:
    """Whether ``Con(A**n)`` consists only of the ``2**n`` product congruences."""
    if alg.size < 2:
        raise ContractError("skew-freeness needs a simple algebra with at least two elements")
    verified = 1
    for k in range(2, max_power + 1):
        try:
            pw = power(alg, k)
            cons = all_congruences(pw, method="joins")
        except BoundExceededError as exc:
            return SkewFreeResult(None, verified, reason=str(exc))
        if len(cons) != 2**k:
            products = set()
            for choice in itertools.product([0, 1], repeat=k):
                products.add(_product_congruence(pw, choice))
            extra = next((c for c in cons if c not in products), None)
            return SkewFreeResult(False, verified, extra, f"Con(A^{k}) has {len(cons)} elements")
        verified = k
    return SkewFreeResult(True, verified)


def _product_congruence(pw, choice) -> Congruence:
    coords = pw._decode(np.arange(pw.size))
    keys = [tuple(row[i] if c == 0 else 0 for i, c in enumerate(choice)) for row in coords.tolist()]
    return Congruence(tuple(keys))


@dataclass
class TrichotomyVerdict:
    kind: str  # "absorbing-element", "abelian", "skew-free" or "unknown"
    element: Optional[int] = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def definite(self) -> bool:
        return self.kind != "unknown"

    def __str__(self):
        if self.kind == "absorbing-element":
            return f"AbsorbingElement({self.element})"
        return {"abelian": "Abelian", "skew-free": "SkewFree"}.get(self.kind, "Unknown")


def classify_simple(alg: FiniteAlgebra, skew_power: int = 2) -> TrichotomyVerdict:
    """Run the three predicates of the trichotomy; anything but one yes is Unknown."""
    key = ("trichotomy", skew_power)
    if key in alg._cache:
        return alg._cache[key]
    if alg.size < 2 or not is_simple(alg):
        raise ContractError("classification needs a simple algebra")
    if not alg.is_idempotent():
        raise ContractError("classification needs an idempotent algebra")
    zero = absorbing_elements(alg)
    ab = is_abelian(alg)
    sf = is_skew_free(alg, skew_power)
    answers = {
        "absorbing-element": len(zero) == 1,
        "abelian": ab.value,
        "skew-free": sf.value,
    }
    yes = [k for k, v in answers.items() if v is True]
    diag = {"answers": answers, "absorbing_elements": zero}
    if ab.witness:
        diag["abelian_witness"] = ab.witness
    if sf.reason:
        diag["skew_free"] = sf.reason
    if len(yes) == 1:
        kind = yes[0]
        out = TrichotomyVerdict(kind, zero[0] if kind == "absorbing-element" else None, diag)
    else:
        out = TrichotomyVerdict("unknown", None, diag)
    alg._cache[key] = out
    return out


# ---------------------------------------------------------------------------
# affine structure


@dataclass
class AffineStructure:
    p: int
    d: int
    vectors: np.ndarray  # element -> coordinate vector over GF(p)
    maltsev: TermOperation
    addition: np.ndarray  # (n, n) table of x + y

    def to_vector(self, a: int) -> Tuple[int, ...]:
        return tuple(int(v) for v in self.vectors[a])

    def from_vector(self, vec) -> int:
        return self._index[tuple(int(v) % self.p for v in vec)]

    @property
    def _index(self):
        idx = self.__dict__.get("_idx")
        if idx is None:
            idx = {tuple(int(v) for v in row): i for i, row in enumerate(self.vectors)}
            self.__dict__["_idx"] = idx
        return idx

    def affine_map(self, perm: Sequence[int]):
        """Interpolate ``perm`` as ``v -> L v + c``; ``None`` if it is not affine."""
        perm = np.asarray(perm)
        zero_idx = self.from_vector([0] * self.d)
        c = self.vectors[perm[zero_idx]]
        L = np.zeros((self.d, self.d), dtype=np.int64)
        for j in range(self.d):
            e = [0] * self.d
            e[j] = 1
            L[:, j] = (self.vectors[perm[self.from_vector(e)]] - c) % self.p
        pred = (self.vectors @ L.T + c) % self.p
        if not np.array_equal(pred, self.vectors[perm]):
            return None
        return L, c


def find_maltsev_term(alg: FiniteAlgebra, max_size: int = 200000):
    """A ternary term with ``m(x,y,y) = x = m(y,y,x)``; ``None`` when proven absent."""
    n = alg.size
    rows = []
    want = []
    for a in range(n):
        for b in range(n):
            rows.append((a, b, b))
            want.append(a)
            rows.append((b, b, a))
            want.append(a)
    points = np.array(rows, dtype=np.int64)
    want = np.array(want, dtype=np.int64)
    res = restricted_term_search(alg, points, lambda v: (v == want).all(axis=1), max_size=max_size)
    if res.hit is not None:
        deriv = res.derivations[res.hit]
        table = OperationTable("m", 3, n, evaluate_derivation(alg, deriv, 3))
        return TermOperation(3, table, deriv)
    if not res.saturated:
        raise UnknownOutcome("Maltsev term search hit its bound")
    return None


def affine_structure(alg: FiniteAlgebra) -> Optional[AffineStructure]:
    """Recognise the algebra as affine over ``GF(p)**d`` with zero at element 0.

    Returns ``None`` (with the reason in ``affine_structure.last_reason``)
    when a check fails; raises :class:`UnknownOutcome` when the Maltsev term
    search is inconclusive.
    """
    if "affine" in alg._cache:
        return alg._cache["affine"]
    out = _affine_structure(alg)
    alg._cache["affine"] = out
    return out


def _fail(reason):
    affine_structure.last_reason = reason
    return None


def _affine_structure(alg):
    n = alg.size
    m = find_maltsev_term(alg)
    if m is None:
        return _fail("no Maltsev term")
    cube = m.table.cube()
    add = cube[:, 0, :].copy()  # x + y := m(x, 0, y)
    ar = np.arange(n)
    if not (add[0] == ar).all() or not (add[:, 0] == ar).all():
        return _fail("0 is not neutral")
    if not (add == add.T).all():
        return _fail("addition is not commutative")
    if not (add[add[:, :, None], ar[None, None, :]] == add[ar[:, None, None], add[None, :, :]]).all():
        return _fail("addition is not associative")
    # element orders
    orders = []
    for a in range(n):
        k, x = 1, a
        while x != 0:
            x = add[x, a]
            k += 1
            if k > n + 1:
                return _fail("no inverses")
        orders.append(k if a else 1)
    ps = {o for o in orders if o > 1}
    if len(ps) > 1 or (ps and not sympy.isprime(next(iter(ps)))):
        return _fail("group is not elementary abelian")
    p = next(iter(ps)) if ps else 1
    if n == 1:
        vecs = np.zeros((1, 0), dtype=np.int64)
        return AffineStructure(1, 0, vecs, m, add)
    d = 0
    size = 1
    while size < n:
        size *= p
        d += 1
    if size != n:
        return _fail("order is not a prime power")
    # greedy basis in increasing element order
    basis = []
    span = {0: ()}
    for a in range(1, n):
        if a in span:
            continue
        basis.append(a)
        new_span = {}
        for elem, coords in span.items():
            x = elem
            for c in range(p):
                new_span[x] = coords + (c,)
                x = add[x, a]
        span = {e: c + (0,) * (len(basis) - len(c)) for e, c in new_span.items()}
        if len(span) == n:
            break
    vecs = np.zeros((n, d), dtype=np.int64)
    for e, coords in span.items():
        vecs[e] = coords
    st = AffineStructure(p, d, vecs, m, add)
    # Maltsev term must be x - y + z in coordinates
    grid = np.array(list(itertools.product(range(n), repeat=3)))
    pred = (vecs[grid[:, 0]] - vecs[grid[:, 1]] + vecs[grid[:, 2]]) % p
    if not np.array_equal(vecs[m.table.table[np.arange(n**3)]], pred):
        return _fail("Maltsev term is not x - y + z")
    for op in alg.operations:
        if not _is_affine_operation(st, op):
            return _fail(f"operation {op.name} is not affine")
    return st


def _is_affine_operation(st: AffineStructure, op: OperationTable) -> bool:
    n, r, p, d = op.size, op.arity, st.p, st.d
    zero = st.from_vector([0] * d)
    c = st.vectors[op.table[_encode([zero] * r, n)]]
    mats = []
    for i in range(r):
        L = np.zeros((d, d), dtype=np.int64)
        for j in range(d):
            e = [0] * d
            e[j] = 1
            args = [zero] * r
            args[i] = st.from_vector(e)
            L[:, j] = (st.vectors[op.table[_encode(args, n)]] - c) % p
        mats.append(L)
    codes = np.arange(n**r)
    pred = np.tile(c, (len(codes), 1))
    rem = codes.copy()
    for i in range(r - 1, -1, -1):
        arg = rem % n
        rem //= n
        pred = pred + st.vectors[arg] @ mats[i].T
    return bool(np.array_equal(pred % p, st.vectors[op.table]))


# ---------------------------------------------------------------------------
# linkedness


@dataclass
class LinkednessResult:
    alpha: Congruence
    beta: Congruence
    linked: bool

    @property
    def is_iso_graph(self) -> bool:
        return self.alpha.is_identity() and self.beta.is_identity()


def linkedness_congruences(pairs, size_a: int, size_b: int) -> LinkednessResult:
    """Linking partitions of a subdirect ``R <= A x B``.

    ``a ~ a'`` when they share a right partner (closed transitively), and
    symmetrically on the right.
    """
    pairs = sorted(set((int(a), int(b)) for a, b in pairs))
    if {a for a, _ in pairs} != set(range(size_a)) or {b for _, b in pairs} != set(range(size_b)):
        raise ContractError("relation is not subdirect")
    ua, ub = _UnionFind(size_a), _UnionFind(size_b)
    by_b: Dict[int, int] = {}
    by_a: Dict[int, int] = {}
    for a, b in pairs:
        if b in by_b:
            ua.union(by_b[b], a)
        else:
            by_b[b] = a
        if a in by_a:
            ub.union(by_a[a], b)
        else:
            by_a[a] = b
    alpha = Congruence(tuple(ua.find(a) for a in range(size_a)))
    beta = Congruence(tuple(ub.find(b) for b in range(size_b)))
    return LinkednessResult(alpha, beta, alpha.is_full() and beta.is_full())
