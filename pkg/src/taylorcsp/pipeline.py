"""End-to-end solving: template classification, the reduction loop, oracle comparison.

The solver is three-valued.  ``SAT`` always carries a verified assignment;
``UNSAT`` is reported only for contradictions reached by solution-preserving
stages; anything else (a failed algebraic premise, a monitored claim that
does not hold, a dead end after a choice) becomes ``UNKNOWN`` with a
diagnostic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .af import (
    PassiveSubinstance,
    TestPair,
    build_test_instance,
    enforce_af_consistency,
    pair_quotient,
    passive_subinstance,
)
from .algebra.analysis import (
    DEFAULT_ABSORPTION_ARITY,
    DEFAULT_CORE_BOUND,
    CoreResult,
    WNUSearch,
    classify_simple,
    core_of,
    find_wnu,
    minimal_absorbing,
    singleton_expansion,
)
from .algebra.core import (
    FiniteAlgebra,
    OperationTable,
    basic_translations,
    elements_of,
    mask_of,
    maximal_congruences,
    power,
    subalgebra,
    subuniverse_masks,
)
from .binary import (
    BinaryInstance,
    LiftConflictError,
    binary_from_instance,
    reduce_to_binary,
    tuple_arity,
)
from .ccsp import solve_ccsp
from .consistency import enforce_kl_minimality, run_slac
from .errors import BoundExceededError, ContractError, PremiseViolation, UnknownOutcome
from .families import random_instances
from .instance import (
    DEFAULT_ORACLE_BOUND,
    Instance,
    Template,
    brute_force_solve,
    evaluate_assignment,
)
from .network import Network, enforce_path_consistency, restrict_and_propagate

SAT = "SAT"
UNSAT = "UNSAT"
UNKNOWN = "UNKNOWN"

NOT_CORE = "not-core"
NP_HARD_CANDIDATE = "np-hard-candidate"
TAYLOR = "taylor"
UNKNOWN_TEMPLATE = "unknown"

AUTO_ORACLE_LIMIT = 10**4


# ---------------------------------------------------------------------------
# template classification


@dataclass
class TemplateVerdict:
    kind: str
    core: Optional[CoreResult] = None
    wnu: Optional[OperationTable] = None
    search: Optional[WNUSearch] = None
    stage: Optional[str] = None
    detail: str = ""
    _algebra: Optional[FiniteAlgebra] = field(default=None, repr=False, compare=False)

    @property
    def is_taylor(self) -> bool:
        return self.kind == TAYLOR

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"kind": self.kind, "detail": self.detail}
        if self.stage:
            out["stage"] = self.stage
        if self.core is not None:
            out["core_elements"] = list(self.core.elements)
        if self.search is not None:
            out["arities_tested"] = list(self.search.arities_tested)
            out["exhaustive"] = self.search.exhaustive
        if self.wnu is not None:
            out["wnu_arity"] = self.wnu.arity
            out["wnu_table"] = self.wnu.table.tolist()
        return out


def classify_template(template: Template, arities_sufficient: bool = False,
                      bound: int = DEFAULT_CORE_BOUND) -> TemplateVerdict:
    """Core check, then a WNU search on the singleton expansion.

    A template that is not a core is reported as ``not-core`` together with
    its core; the remaining verdicts describe the core itself.
    """
    try:
        core = core_of(template, bound)
    except (BoundExceededError, UnknownOutcome) as exc:
        return TemplateVerdict(UNKNOWN_TEMPLATE, stage="core", detail=str(exc))
    if core.core.domain_size < template.domain_size:
        return TemplateVerdict(NOT_CORE, core=core,
                               detail=f"core has {core.core.domain_size} elements")
    search = find_wnu(singleton_expansion(template), arities_sufficient=arities_sufficient)
    if search.wnu is not None:
        return TemplateVerdict(TAYLOR, core=core, wnu=search.wnu, search=search,
                               detail=f"WNU of arity {search.wnu.arity}")
    if search.taylor is False:
        return TemplateVerdict(NP_HARD_CANDIDATE, core=core, search=search, stage="wnu",
                               detail=f"no WNU at arities {list(search.arities_tested)}")
    why = "search incomplete" if not search.exhaustive else "arities not certified sufficient"
    return TemplateVerdict(UNKNOWN_TEMPLATE, core=core, search=search, stage="wnu",
                           detail=f"no WNU found at arities {list(search.arities_tested)} ({why})")


_VERDICTS: Dict[Template, TemplateVerdict] = {}


def _cached_verdict(template: Template) -> TemplateVerdict:
    hit = _VERDICTS.get(template)
    if hit is None:
        hit = classify_template(template)
        _VERDICTS[template] = hit
    return hit


def domain_algebra(verdict: TemplateVerdict) -> FiniteAlgebra:
    """``(A; w)`` for the WNU ``w`` of a Taylor verdict, shared across solves."""
    if verdict.wnu is None:
        raise ContractError("only Taylor verdicts carry a WNU")
    if verdict._algebra is None:
        verdict._algebra = FiniteAlgebra(verdict.wnu.size, [verdict.wnu])
    return verdict._algebra


def prepare_template(template: Template, arity_bound: int = DEFAULT_ABSORPTION_ARITY) -> int:
    """Precompute the algebra data that solving over ``template`` consults.

    For every subuniverse of the tuple-domain algebra ``A**m`` this settles
    absorption, the maximal congruences and the trichotomy class of each
    maximal quotient.  Results are cached on the domain algebra shared by
    all solves, so this is a one-off cost per template.  Returns the number
    of subuniverses visited (0 when the template is not Taylor).
    """
    verdict = _cached_verdict(template)
    if not verdict.is_taylor:
        return 0
    alg = power(domain_algebra(verdict), tuple_arity(template))
    count = 0
    for mk in subuniverse_masks(alg, bound=max(alg.size, 12)):
        if _popcount(mk) < 2:
            continue
        sub = subalgebra(alg, elements_of(mk))
        basic_translations(sub)
        minimal_absorbing(sub, arity_bound)
        for theta in maximal_congruences(sub):
            classify_simple(pair_quotient(alg, TestPair(0, mk, theta)))
        count += 1
    return count


def restrict_to_core(instance: Instance, core: CoreResult) -> Instance:
    """The same instance over the core template (full domains only)."""
    full = tuple(range(instance.template.domain_size))
    if any(d != full for d in instance.domains):
        raise PremiseViolation("restricting to the core needs full domains",
                               {"core_elements": list(core.elements)})
    k = core.core.domain_size
    return Instance(core.core, instance.variables, tuple(tuple(range(k)) for _ in instance.variables),
                    instance.constraints)


# ---------------------------------------------------------------------------
# solving


@dataclass
class SolveOptions:
    kl_bypass: bool = False
    auto_oracle: bool = False
    oracle: bool = False
    oracle_bound: int = DEFAULT_ORACLE_BOUND
    af_depth: Optional[int] = 0
    arity_bound: int = DEFAULT_ABSORPTION_ARITY


@dataclass
class SolveReport:
    verdict: str
    assignment: Optional[Dict[str, int]] = None
    diagnostic: Optional[Dict[str, Any]] = None
    trace: List[Dict[str, Any]] = field(default_factory=list)
    discrepancies: List[str] = field(default_factory=list)
    oracle: Optional[str] = None

    @property
    def discrepancy(self) -> bool:
        return bool(self.discrepancies)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "verdict": self.verdict,
            "assignment": self.assignment,
            "diagnostic": self.diagnostic,
            "trace": self.trace,
            "discrepancies": self.discrepancies,
            "oracle": self.oracle,
        }

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), sort_keys=True, separators=(",", ":"))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


class _Dead(Exception):
    """The current network has no solution."""


class _Unknown(Exception):
    def __init__(self, reason: str, detail: Optional[Dict] = None):
        super().__init__(reason)
        self.detail = {"reason": reason, **(detail or {})}


def _complete(net: Network) -> Network:
    net.edges = ~np.eye(net.n, dtype=bool)
    return net


def _popcount(m: int) -> int:
    return bin(m).count("1")


class _Run:
    """State of one solve: the current network, the passive list and the trace."""

    def __init__(self, binary: BinaryInstance, algebra: FiniteAlgebra, options: SolveOptions,
                 trace: List[Dict[str, Any]]):
        self.binary = binary
        self.algebra = algebra
        self.options = options
        self.trace = trace
        self.net: Optional[Network] = None
        self.passive: List[PassiveSubinstance] = []
        self.choices = 0

    def log(self, stage: str, net: Optional[Network] = None, **extra):
        entry: Dict[str, Any] = {"stage": stage, "space": "binary"}
        if net is not None:
            entry["sizes"] = [int(s) for s in net.domain_sizes()]
        entry.update(extra)
        self.trace.append(entry)

    def settle(self, net: Optional[Network], stage: str, consistent: bool = True) -> Network:
        """Path consistency and SLAC to a common fixpoint.

        ``consistent`` says ``net`` is already path consistent, as every
        network coming out of :func:`restrict_and_propagate` is.
        """
        if net is None:
            raise _Dead(stage)
        cur = net.copy() if consistent else enforce_path_consistency(net)
        changed = False
        while True:
            if cur is None:
                raise _Dead(stage)
            _complete(cur)
            state = run_slac(cur, path_consistent=True)
            if state.contradiction:
                raise _Dead(stage)
            masks = cur.domain_masks().tolist()
            cuts = {i: int(m) for i, m in enumerate(state.masks) if int(m) != masks[i]}
            if not cuts:
                break
            changed = True
            cur = restrict_and_propagate(cur, cuts)
        if changed:
            self.log("slac-changed", cur, after=stage)
        return cur

    def prune_passive(self, net: Network):
        if not self.passive:
            return
        masks = net.domain_masks().tolist()
        self.passive = [p for p in self.passive if p.meets(net, masks)]
        if not self.passive:
            raise _Unknown("passive list became empty")

    def reduce_variable(self, x: int):
        """Shrink the domain of tuple variable ``x`` to a single value."""
        alg = self.algebra
        while _popcount(self.net.domain_mask(x)) > 1:
            dom = elements_of(self.net.domain_mask(x))
            try:
                sub = subalgebra(alg, dom)
            except ContractError as exc:
                raise _Unknown("domain is not a subuniverse", {"variable": x, "domain": list(dom)}) \
                    from exc
            ma = minimal_absorbing(sub, self.options.arity_bound)
            self.choices += 1
            if not ma.absorption_free:
                keep = mask_of(sub.labels[i] for i in ma.subset)
                nxt = self.settle(restrict_and_propagate(self.net, {x: keep}), "absorption")
                self.log("absorption", nxt, variable=x, subset=list(elements_of(keep)))
            else:
                nxt = self.strand_step(x, sub)
            self.prune_passive(nxt)
            self.net = nxt

    def strand_step(self, x: int, sub: FiniteAlgebra) -> Network:
        theta = maximal_congruences(sub)[0]
        pair = TestPair(x, self.net.domain_mask(x), theta)
        test = build_test_instance(self.net, self.algebra, pair)
        res = solve_ccsp(test.ccsp, base=0)
        for block in (res.solvable if res.satisfiable else ()):
            ps = passive_subinstance(self.net, test, block)
            if ps.status != "live":
                continue
            try:
                nxt = self.settle(ps.network, "strand")
            except _Dead:
                continue
            self.log("strand", nxt, variable=x, block=int(block),
                     block_values=list(elements_of(pair.block_masks()[block])),
                     relevant=len(test.relevant))
            return nxt
        raise _Unknown("no live solution strand", {"variable": x, "pair": pair.describe()})


def _oracle_verdict(instance: Instance, bound: int) -> Optional[str]:
    if instance.search_space > bound:
        return None
    return SAT if brute_force_solve(instance, bound) is not None else UNSAT


def solve(instance: Instance, template: Optional[Template] = None,
          options: Optional[SolveOptions] = None) -> SolveReport:
    """Run the full pipeline on ``instance`` and return a report."""
    options = options or SolveOptions()
    template = template or instance.template
    if template != instance.template:
        raise ContractError("instance is over a different template")
    report = _solve(instance, options)
    if report.verdict == SAT and not evaluate_assignment(instance, report.assignment):
        raise AssertionError("SAT assignment failed verification")
    if options.oracle:
        report.oracle = _oracle_verdict(instance, options.oracle_bound)
        if report.oracle is not None and report.verdict != UNKNOWN and report.oracle != report.verdict:
            report.discrepancies.append(f"solver {report.verdict} vs oracle {report.oracle}")
    return report


def _solve(instance: Instance, options: SolveOptions) -> SolveReport:
    trace: List[Dict[str, Any]] = []
    trace.append({"stage": "input", "space": "original",
                  "sizes": [len(d) for d in instance.domains]})
    if instance.is_trivially_unsat:
        return SolveReport(UNSAT, trace=trace)
    if options.auto_oracle and instance.search_space <= AUTO_ORACLE_LIMIT:
        sol = brute_force_solve(instance)
        trace.append({"stage": "auto-oracle", "space": "original"})
        return SolveReport(SAT if sol is not None else UNSAT, sol, trace=trace)

    verdict = _cached_verdict(instance.template)
    trace.append({"stage": "classify", "space": "original", "template": verdict.kind})
    work = instance
    if verdict.kind == NOT_CORE:
        try:
            work = restrict_to_core(instance, verdict.core)
        except PremiseViolation as exc:
            return SolveReport(UNKNOWN, diagnostic={"reason": str(exc), **exc.diagnostic}, trace=trace)
        verdict = _cached_verdict(work.template)
        trace.append({"stage": "core", "space": "original", "template": verdict.kind,
                      "sizes": [len(d) for d in work.domains]})
    if not verdict.is_taylor:
        return SolveReport(UNKNOWN, diagnostic={"reason": "template is not known to be Taylor",
                                                "template": verdict.kind, "detail": verdict.detail},
                           trace=trace)

    try:
        result = _pipeline(work, verdict, options, trace)
    except _Unknown as exc:
        return SolveReport(UNKNOWN, diagnostic=exc.detail, trace=trace)
    except PremiseViolation as exc:
        return SolveReport(UNKNOWN, diagnostic={"reason": str(exc), **_jsonable(exc.diagnostic or {})},
                           trace=trace)
    except (BoundExceededError, UnknownOutcome) as exc:
        return SolveReport(UNKNOWN, diagnostic={"reason": str(exc)}, trace=trace)
    if result is None:
        return SolveReport(UNSAT, trace=trace)
    if work is not instance:
        result = _from_core(instance, result)
    return SolveReport(SAT, result, trace=trace)


def _from_core(instance: Instance, assignment: Dict[str, int]) -> Dict[str, int]:
    core = _cached_verdict(instance.template).core
    return {v: int(core.elements[a]) for v, a in assignment.items()}


def _pad(instance: Instance, m: int) -> Instance:
    """Add unconstrained variables so that at least ``m`` exist."""
    extra = m - len(instance.variables)
    if extra <= 0:
        return instance
    names = list(instance.variables)
    k = 0
    while len(names) < m:
        name = f"_pad{k}"
        k += 1
        if name not in names:
            names.append(name)
    full = tuple(range(instance.template.domain_size))
    return Instance(instance.template, tuple(names),
                    instance.domains + (full,) * extra, instance.constraints)


def _pipeline(instance: Instance, verdict: TemplateVerdict, options: SolveOptions,
              trace: List[Dict[str, Any]]) -> Optional[Dict[str, int]]:
    """``None`` for UNSAT, an assignment for SAT; raises ``_Unknown`` otherwise."""
    base = domain_algebra(verdict)
    m = tuple_arity(instance)
    padded = _pad(instance, m)
    if options.kl_bypass and instance.template.max_arity <= 2:
        binary = binary_from_instance(padded)
        exact = False
        trace.append({"stage": "direct-binary", "space": "binary",
                      "sizes": [int(s) for s in binary.network.domain_sizes()]})
    else:
        state = enforce_kl_minimality(padded, 2 * m, 3 * m)
        if state.unsat:
            trace.append({"stage": "kl", "space": "original", "result": "contradiction"})
            return None
        trace.append({"stage": "kl", "space": "original",
                      "sizes": [len(d) for d in state.domains()][:len(instance.variables)]})
        binary = reduce_to_binary(state)
        exact = state.is_exact()
        trace.append({"stage": "reduce", "space": "binary",
                      "sizes": [int(s) for s in binary.network.domain_sizes()]})
    alg = power(base, binary.m)
    run = _Run(binary, alg, options, trace)
    try:
        run.net = run.settle(binary.network, "pc+slac", consistent=False)
        run.log("pc+slac", run.net)
        af = enforce_af_consistency(run.net, alg, depth=options.af_depth,
                                    arity_bound=options.arity_bound, exact=exact,
                                    consistent=True)
        if af.unsat:
            raise _Dead("af")
        run.net = run.settle(af.network, "af")
        run.passive = af.passive
        run.log("af", run.net, pairs=len(af.reports), shortcut=af.shortcut,
                removed=sum(len(r.removed) for r in af.reports), passive=len(af.passive))
    except _Dead as exc:
        trace.append({"stage": str(exc), "space": "binary", "result": "contradiction"})
        return None
    try:
        for x in range(run.net.n):
            run.reduce_variable(x)
    except _Dead as exc:
        raise _Unknown("contradiction after a reduction choice",
                       {"stage": str(exc), "choices": run.choices}) from None
    codes = [elements_of(int(mk))[0] for mk in run.net.domain_masks()]
    try:
        lifted = binary.lift_solution(codes, verify=True)
    except (LiftConflictError, ContractError) as exc:
        raise _Unknown("singleton network does not lift", {"error": str(exc)}) from None
    run.log("singletons", run.net)
    return {v: lifted[v] for v in instance.variables}


# ---------------------------------------------------------------------------
# SLAC-only mode


def slac_only(instance: Instance) -> bool:
    """Minimality, binary reduction and plain SLAC; ``True`` when the fixpoint is nonempty."""
    m = tuple_arity(instance)
    padded = _pad(instance, m)
    state = enforce_kl_minimality(padded, 2 * m, 3 * m)
    if state.unsat:
        return False
    binary = reduce_to_binary(state)
    return not run_slac(binary.network, shortcut=False).contradiction


# ---------------------------------------------------------------------------
# oracle comparison


@dataclass
class ComparisonReport:
    template_verdict: str
    count: int
    seed: int
    counts: Dict[str, int]
    disagreements: List[Dict[str, Any]]
    unknowns: List[Dict[str, Any]]

    @property
    def unknown_rate(self) -> float:
        return len(self.unknowns) / self.count if self.count else 0.0

    @property
    def ok(self) -> bool:
        return not self.disagreements

    def to_dict(self) -> Dict[str, Any]:
        return {"template": self.template_verdict, "count": self.count, "seed": self.seed,
                "counts": self.counts, "disagreements": self.disagreements,
                "unknowns": self.unknowns, "unknown_rate": self.unknown_rate}

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), sort_keys=True, separators=(",", ":"))


def compare_with_oracle(template: Template, count: int, seed: int, min_vars: int = 3,
                        max_vars: int = 8, options: Optional[SolveOptions] = None,
                        instances: Optional[Sequence[Instance]] = None) -> ComparisonReport:
    """Solve seeded random instances and compare with brute force.

    Instances come from :func:`taylorcsp.families.random_instances`: the
    variable count is uniform in ``[min_vars, max_vars]``, the constraint
    count uniform in ``[1, 2n]``, relations uniform over the template and
    scopes uniform over tuples of distinct variables.
    """
    options = options or SolveOptions()
    prepare_template(template, options.arity_bound)
    if instances is None:
        instances = list(random_instances(template, count, seed, min_vars, max_vars))
    counts = {SAT: 0, UNSAT: 0, UNKNOWN: 0}
    disagreements, unknowns = [], []
    for i, inst in enumerate(instances):
        rep = solve(inst, options=options)
        oracle = SAT if brute_force_solve(inst, options.oracle_bound) is not None else UNSAT
        counts[rep.verdict] += 1
        if rep.verdict == UNKNOWN:
            unknowns.append({"index": i, "oracle": oracle, "diagnostic": rep.diagnostic})
        elif rep.verdict != oracle:
            disagreements.append({"index": i, "solver": rep.verdict, "oracle": oracle})
    return ComparisonReport(_cached_verdict(template).kind, len(instances), seed, counts,
                            disagreements, unknowns)
