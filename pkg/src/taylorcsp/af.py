"""AF-consistency: test instances over maximal-congruence quotients.

For every absorption-free subuniverse ``M`` of a domain ``S_x`` and every
maximal congruence ``theta`` of ``M`` a quotient CCSP (the test instance) is
built over the variables whose domains see the ``theta``-blocks separately.
Blocks that appear in no solution of the test instance are removed from
``S_x``; the surviving blocks give the passive subinstances.

All networks here are complete and path consistent, and all domains are
subuniverses of one domain algebra acting on the value codes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numba import njit

from .algebra.analysis import DEFAULT_ABSORPTION_ARITY, classify_simple, is_absorption_free
from .algebra.core import (
    DEFAULT_SUBUNIVERSE_BOUND,
    Congruence,
    FiniteAlgebra,
    closure_mask,
    congruence_generated_by,
    elements_of,
    mask_of,
    maximal_congruences,
    quotient_algebra,
    subalgebra,
    subuniverse_masks,
)
from .ccsp import CCSPInstance, solve_ccsp
from .consistency import run_slac
from .errors import ContractError, PremiseViolation, TaylorCSPError
from .network import Network, enforce_path_consistency, restrict_and_propagate


def _popcount(m: int) -> int:
    return bin(m).count("1")


def r_plus(net: Network, x: int, mask: int, y: int, algebra: Optional[FiniteAlgebra] = None) -> int:
    """Values of ``y`` joined to some value of ``mask`` at ``x`` (as a mask).

    When the pair carries no constraint the whole domain of ``y`` is
    returned.  With ``algebra`` the result is checked to be a subuniverse.
    """
    if x == y:
        raise ContractError("r_plus needs two distinct variables")
    if not (net.edges[x, y] or net.edges[y, x]):
        return net.domain_mask(y)
    out = net.image(x, y, mask & net.domain_mask(x))
    if algebra is not None and closure_mask(algebra, out) != out:
        raise ContractError(f"image at {y} is not a subuniverse")
    return out


@dataclass(frozen=True)
class TestPair:
    """``M`` as a code mask at variable ``x`` and a maximal congruence of it.

    The congruence is indexed by the positions of ``M``'s sorted elements.
    """

    x: int
    mask: int
    congruence: Congruence

    @property
    def elements(self) -> Tuple[int, ...]:
        return elements_of(self.mask)

    @property
    def num_blocks(self) -> int:
        return self.congruence.num_blocks

    def block_masks(self) -> Tuple[int, ...]:
        elems = self.elements
        return tuple(mask_of(elems[i] for i in blk) for blk in self.congruence.blocks())

    def describe(self) -> str:
        blocks = "|".join(",".join(str(e) for e in elements_of(b)) for b in self.block_masks())
        return f"x={self.x} M={{{','.join(map(str, self.elements))}}} blocks={blocks}"


def _sort_key(pair: TestPair):
    return (pair.x, -_popcount(pair.mask), pair.elements[0], pair.elements,
            pair.num_blocks, pair.congruence.labels)


def pairs_for_domain(algebra: FiniteAlgebra, x: int, domain_mask: int,
                     arity_bound: int = DEFAULT_ABSORPTION_ARITY,
                     bound: int = DEFAULT_SUBUNIVERSE_BOUND) -> List[TestPair]:
    out = []
    for m in subuniverse_masks(algebra, within=domain_mask, bound=bound):
        if _popcount(m) < 2:
            continue
        sub = subalgebra(algebra, elements_of(m))
        if not is_absorption_free(sub, arity_bound):
            continue
        for theta in maximal_congruences(sub):
            out.append(TestPair(x, m, theta))
    return out


def build_m_list(net: Network, algebra: FiniteAlgebra,
                 arity_bound: int = DEFAULT_ABSORPTION_ARITY,
                 bound: int = DEFAULT_SUBUNIVERSE_BOUND) -> List[TestPair]:
    """All test pairs, ordered so that a pair precedes pairs inside its blocks."""
    out = []
    for x in range(net.n):
        out.extend(pairs_for_domain(algebra, x, net.domain_mask(x), arity_bound, bound))
    out.sort(key=_sort_key)
    return out


# ---------------------------------------------------------------------------
# test instances


@dataclass
class TestInstance:
    """Quotient CCSP of a test pair.

    ``variables[0]`` is the host ``x``; the rest are the relevant variables in
    index order.  ``labels[v, c]`` is the block index (aligned with the
    blocks of ``theta_M``) of value ``c`` of ``variables[v]``, or ``-1``
    outside ``R+``.
    """

    pair: TestPair
    variables: Tuple[int, ...]
    labels: np.ndarray
    rplus: Dict[int, int]
    quotient: FiniteAlgebra
    ccsp: CCSPInstance
    diagnostics: Dict = field(default_factory=dict)

    @property
    def relevant(self) -> Tuple[int, ...]:
        return self.variables[1:]

    def strand(self, block: int) -> Dict[int, int]:
        """Code masks, per test variable, of the blocks linked to ``block``."""
        weights = 1 << np.arange(self.labels.shape[1], dtype=np.int64)
        masks = ((self.labels == block) * weights).sum(axis=1)
        return dict(zip(self.variables, masks.tolist()))


def pair_quotient(algebra: FiniteAlgebra, pair: TestPair) -> FiniteAlgebra:
    """``M / theta_M`` as an algebra, cached on ``algebra``."""
    key = ("af-quotient", pair.mask, pair.congruence.labels)
    hit = algebra._cache.get(key)
    if hit is None:
        hit = quotient_algebra(subalgebra(algebra, pair.elements), pair.congruence)
        algebra._cache[key] = hit
    return hit


def _aligned_labels(algebra: FiniteAlgebra, rplus: int, images: Tuple[int, ...]):
    """Block labels over codes for ``theta_y`` generated by the images.

    Returns ``None`` when two images fall into one block (not relevant).
    """
    key = ("af-theta", rplus, images)
    cache = algebra._cache
    if key in cache:
        return cache[key]
    elems = elements_of(rplus)
    pos = {e: i for i, e in enumerate(elems)}
    try:
        sub = subalgebra(algebra, elems)
    except ContractError as exc:
        raise PremiseViolation("image set is not a subuniverse", {"rplus": elems}) from exc
    pairs = []
    for img in images:
        members = [pos[e] for e in elements_of(img)]
        pairs.extend((members[0], m) for m in members[1:])
    theta = congruence_generated_by(sub, pairs)
    block_of = [theta.labels[pos[elements_of(img)[0]]] for img in images]
    if len(set(block_of)) < len(images):
        out = None
    else:
        if theta.num_blocks != len(images):
            raise PremiseViolation("quotient is not isomorphic to M/theta_M",
                                   {"blocks": theta.num_blocks, "expected": len(images)})
        out = np.full(algebra.size, -1, dtype=np.int64)
        back = {b: i for i, b in enumerate(block_of)}
        for e in elems:
            out[e] = back[theta.labels[pos[e]]]
    cache[key] = out
    return out


def _images_by_block(rows_x: np.ndarray, block_masks: Sequence[int]) -> np.ndarray:
    """``out[y, i]``: image in ``y`` of block ``i`` of the host variable."""
    out = np.empty((rows_x.shape[0], len(block_masks)), dtype=np.uint64)
    for i, m in enumerate(block_masks):
        out[:, i] = np.bitwise_or.reduce(rows_x[:, list(elements_of(m))], axis=1)
    return out


@njit(cache=True)
def _quotient_rows(rows, variables, labels, k):
    V = variables.shape[0]
    d = rows.shape[2]
    out = np.zeros((V, V, k), dtype=np.uint64)
    one = np.uint64(1)
    for u in range(V):
        for v in range(V):
            if u == v:
                for i in range(k):
                    out[u, u, i] = one << np.uint64(i)
                continue
            for c in range(d):
                lc = labels[u, c]
                if lc < 0:
                    continue
                r = rows[variables[u], variables[v], c]
                acc = out[u, v, lc]
                for b in range(d):
                    if (r >> np.uint64(b)) & one and labels[v, b] >= 0:
                        acc |= one << np.uint64(labels[v, b])
                out[u, v, lc] = acc
    return out


def build_test_instance(net: Network, algebra: FiniteAlgebra, pair: TestPair,
                        method: str = "direct",
                        max_length: Optional[int] = None,
                        relevance: str = "existential") -> TestInstance:
    """Build the test instance of ``pair`` on a path-consistent network.

    ``method="direct"`` reads relevance off the single step ``x -> y``: in a
    path-consistent network longer patterns only enlarge the block images,
    so the direct step separates blocks whenever any pattern does.
    ``method="patterns"`` searches path patterns explicitly (see
    :func:`pattern_thetas`) and works without path consistency.
    """
    d = net.num_values
    x = pair.x
    if pair.mask & ~net.domain_mask(x):
        raise ContractError("M is not inside the current domain")
    blocks = pair.block_masks()
    k = len(blocks)
    diagnostics: Dict = {}
    if method == "direct":
        images = _images_by_block(net.rows[x], blocks)
        unions = np.bitwise_or.reduce(images, axis=1).tolist()
        thetas = {}
        for y, imgs in enumerate(images.tolist()):
            if y == x:
                continue
            lab = _aligned_labels(algebra, unions[y], tuple(imgs))
            if lab is not None:
                thetas[y] = (unions[y], lab)
    elif method == "patterns":
        thetas, diagnostics = pattern_thetas(net, algebra, pair, max_length, relevance)
    else:
        raise ContractError(f"unknown method {method}")

    relevant = tuple(sorted(thetas))
    variables = (x,) + relevant
    labels = np.full((len(variables), d), -1, dtype=np.int64)
    elems = pair.elements
    for pos, e in enumerate(elems):
        labels[0, e] = pair.congruence.labels[pos]
    rplus = {x: pair.mask}
    for v, y in enumerate(relevant, start=1):
        rplus[y] = thetas[y][0]
        labels[v] = thetas[y][1]

    qnet = Network(_quotient_rows(net.rows, np.array(variables, dtype=np.int64), labels, k))
    quotient = pair_quotient(algebra, pair)
    verdict = classify_simple(quotient)
    try:
        ccsp = CCSPInstance.build(qnet, quotient, verdict)
    except ContractError as exc:
        raise PremiseViolation("test instance is not 1-consistent", {"pair": pair.describe()}) from exc
    return TestInstance(pair, variables, labels, rplus, quotient, ccsp, diagnostics)


def pattern_thetas(net: Network, algebra: FiniteAlgebra, pair: TestPair,
                   max_length: Optional[int] = None, relevance: str = "existential"):
    """Relevance by explicit path-pattern search.

    States are ``(variable, block images, last pair)``; a step never reuses
    the pair it just used.  For each ``y`` every separating partition found is
    recorded; distinct ones are reported as an independence violation.
    ``relevance="universal"`` makes ``y`` relevant only when every pattern
    reaching it separates the blocks.
    """
    if relevance not in ("existential", "universal"):
        raise ContractError(f"unknown relevance reading {relevance}")
    n, d = net.n, net.num_values
    x = pair.x
    if max_length is None:
        max_length = n * d
    blocks = pair.block_masks()
    rp = {y: r_plus(net, x, pair.mask, y) for y in range(n) if y != x}
    start = (x, blocks, None)
    seen = {start}
    frontier = [start]
    found: Dict[int, set] = {}
    failed: Dict[int, bool] = {}
    diagnostics: Dict = {"violations": {}}
    for _ in range(max_length):
        nxt = []
        for var, imgs, last in frontier:
            for y in range(n):
                if y == var:
                    continue
                key = (min(var, y), max(var, y))
                if key == last or not (net.edges[var, y] or net.edges[y, var]):
                    continue
                new = tuple(net.image(var, y, m) for m in imgs)
                if y != x:
                    cut = tuple(m & rp[y] for m in new)
                    lab = None
                    if all(cut):
                        try:
                            lab = _aligned_labels(algebra, rp[y], cut)
                        except PremiseViolation as exc:
                            diagnostics.setdefault("premise", {})[y] = str(exc)
                    if lab is None:
                        failed[y] = True
                    else:
                        found.setdefault(y, set()).add((rp[y], tuple(lab.tolist())))
                state = (y, new, key)
                if state not in seen:
                    seen.add(state)
                    nxt.append(state)
        frontier = nxt
        if not frontier:
            break
    thetas = {}
    for y, options in found.items():
        if len(options) > 1:
            diagnostics["violations"][y] = sorted(options)
        if relevance == "universal" and failed.get(y):
            continue
        r, lab = min(options)
        thetas[y] = (r, np.array(lab, dtype=np.int64))
    return thetas, diagnostics


# ---------------------------------------------------------------------------
# passive subinstances and the main loop


@dataclass
class PassiveSubinstance:
    pair: TestPair
    block: int
    cuts: Dict[int, int]
    status: str = "live"
    network: Optional[Network] = None

    def meets(self, net: Network, masks: Optional[Sequence[int]] = None) -> bool:
        if masks is None:
            masks = net.domain_masks().tolist()
        return all(m & masks[v] for v, m in self.cuts.items())


def passive_subinstance(net: Network, test: TestInstance, block: int) -> PassiveSubinstance:
    """Restrict to the strand of ``block`` and restore path consistency."""
    cuts = test.strand(block)
    out = restrict_and_propagate(net, cuts)
    if out is None:
        return PassiveSubinstance(test.pair, block, cuts, "removed", None)
    out.edges = np.ones_like(out.edges) & ~np.eye(out.n, dtype=bool)
    return PassiveSubinstance(test.pair, block, cuts, "live", out)


@dataclass
class PairReport:
    pair: TestPair
    relevant: int
    solvable: Tuple[int, ...]
    removed: Tuple[int, ...]
    skipped: bool = False


@dataclass
class AFResult:
    network: Optional[Network]
    passive: List[PassiveSubinstance]
    reports: List[PairReport]
    shortcut: bool = False

    @property
    def unsat(self) -> bool:
        return self.network is None


def enforce_af_consistency(net: Network, algebra: FiniteAlgebra, depth: Optional[int] = 0,
                           arity_bound: int = DEFAULT_ABSORPTION_ARITY, exact: bool = False,
                           memo: Optional[dict] = None, keep_networks: bool = False,
                           consistent: bool = False) -> AFResult:
    """Enforce AF-consistency on a complete path-consistent network.

    ``depth`` controls what happens to each surviving block: ``0`` keeps it,
    ``1`` also requires its passive subinstance to survive path consistency
    and SLAC, and larger values additionally run AF-consistency on that
    subinstance with ``depth - 1``.  ``None`` uses the largest domain size
    minus one.  ``exact`` declares that every value of the network extends
    to a solution, in which case nothing can be removed and the pass is
    skipped.  ``consistent`` declares ``net`` already path consistent.
    """
    memo = {} if memo is None else memo
    start = net.copy() if consistent else enforce_path_consistency(net)
    if start is None:
        return AFResult(None, [], [])
    start.edges = np.ones_like(start.edges) & ~np.eye(start.n, dtype=bool)
    if exact:
        return AFResult(start, [], [], shortcut=True)
    if depth is None:
        depth = max(start.domain_sizes()) - 1
    key = (start.fingerprint(), depth, arity_bound)
    if key in memo:
        return memo[key]
    cur = start
    reports: List[PairReport] = []
    passive: List[PassiveSubinstance] = []
    for pair in build_m_list(cur, algebra, arity_bound):
        if pair.mask & ~cur.domain_mask(pair.x):
            reports.append(PairReport(pair, 0, (), (), skipped=True))
            continue
        try:
            test = build_test_instance(cur, algebra, pair)
            res = solve_ccsp(test.ccsp, base=0)
        except TaylorCSPError as exc:
            exc.args = (f"{exc.args[0] if exc.args else exc} [pair {pair.describe()}]",)
            raise
        solvable = res.solvable if res.satisfiable else ()
        live = []
        for b in solvable:
            ps = passive_subinstance(cur, test, b) if depth >= 1 else \
                PassiveSubinstance(pair, b, test.strand(b))
            if depth >= 1 and ps.status == "live":
                if run_slac(ps.network).contradiction:
                    ps.status = "removed"
                elif depth >= 2:
                    sub = enforce_af_consistency(ps.network, algebra, depth - 1, arity_bound,
                                                 memo=memo, consistent=True)
                    if sub.unsat:
                        ps.status = "removed"
            if ps.status == "live":
                if not keep_networks:
                    ps.network = None
                live.append(ps)
        kept = {ps.block for ps in live}
        removed = tuple(b for b in range(pair.num_blocks) if b not in kept)
        reports.append(PairReport(pair, len(test.relevant), tuple(solvable), removed))
        if removed:
            cut = cur.domain_mask(pair.x)
            masks = pair.block_masks()
            for b in removed:
                cut &= ~masks[b]
            nxt = restrict_and_propagate(cur, {pair.x: cut})
            if nxt is None:
                result = AFResult(None, [], reports)
                memo[key] = result
                return result
            cur = nxt
            masks_now = cur.domain_masks().tolist()
            passive = [p for p in passive if p.meets(cur, masks_now)]
            passive.extend(p for p in live if p.meets(cur, masks_now))
        else:
            passive.extend(live)
    result = AFResult(cur, passive, reports)
    memo[key] = result
    return result
