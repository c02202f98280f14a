import json

import pytest
from hypothesis import given, settings, strategies as st

from taylorcsp.errors import ContractError
from taylorcsp.families import FAMILIES, lin3_z2, random_instances, two_sat
from taylorcsp.instance import (
    Instance,
    Relation,
    Template,
    brute_force_solve,
    evaluate_assignment,
)
from taylorcsp.pipeline import (
    NOT_CORE,
    NP_HARD_CANDIDATE,
    SAT,
    TAYLOR,
    UNKNOWN,
    UNKNOWN_TEMPLATE,
    UNSAT,
    SolveOptions,
    classify_template,
    compare_with_oracle,
    slac_only,
    solve,
)

NEQ2 = FAMILIES["neq2"]()


def neq_cycle(n):
    names = [f"v{i}" for i in range(n)]
    return Instance.build(NEQ2, names, [("neq", (names[i], names[(i + 1) % n])) for i in range(n)])


# classification


def test_two_sat_majority():
    v = classify_template(two_sat())
    assert v.kind == TAYLOR and v.wnu.arity == 3
    # the WNU found is the majority operation
    assert all(v.wnu(x, x, y) == x for x in (0, 1) for y in (0, 1))


def test_lin3_z3_is_taylor():
    v = classify_template(FAMILIES["lin3-z3"]())
    assert v.is_taylor
    assert v.to_dict()["wnu_arity"] == v.wnu.arity


def test_k3_needs_the_flag():
    assert classify_template(FAMILIES["k3"]()).kind == UNKNOWN_TEMPLATE
    v = classify_template(FAMILIES["k3"](), arities_sufficient=True)
    assert v.kind == NP_HARD_CANDIDATE
    assert v.search.exhaustive


def test_not_core():
    t = Template(3, (Relation("R", 2, ((0, 1), (1, 0))),))
    v = classify_template(t)
    assert v.kind == NOT_CORE
    assert v.core.core.domain_size == 2


# solving


def test_even_neq_cycle_sat():
    inst = neq_cycle(6)
    rep = solve(inst, options=SolveOptions(oracle=True))
    assert rep.verdict == SAT and evaluate_assignment(inst, rep.assignment)
    assert rep.oracle == SAT and not rep.discrepancy


def test_odd_neq_cycle_unsat():
    rep = solve(neq_cycle(5), options=SolveOptions(oracle=True))
    assert rep.verdict == UNSAT and rep.oracle == UNSAT


def test_inconsistent_lin3_z2_unsat():
    t = lin3_z2()
    # c = d from the first two, e = 0 from the last, so c + d + e = 1 fails
    inst = Instance.build(t, list("abcde"), [
        ("eq0", ("a", "b", "c")), ("eq0", ("a", "b", "d")), ("eq1", ("c", "d", "e")),
        ("eq0", ("e", "e", "e")),
    ])
    assert brute_force_solve(inst) is None
    assert solve(inst).verdict == UNSAT


def test_horn_chain_with_units():
    t = FAMILIES["horn3"]()
    names = [f"h{i}" for i in range(5)]
    cons = [("imp2", (names[i], names[i + 1])) for i in range(4)] + [("t", ("h0",))]
    inst = Instance.build(t, names, cons)
    rep = solve(inst)
    assert rep.verdict == SAT
    assert all(rep.assignment[n] == 1 for n in names)


def test_horn_chain_contradiction():
    t = FAMILIES["horn3"]()
    inst = Instance.build(t, ["a", "b"], [("imp2", ("a", "b")), ("t", ("a",)), ("f", ("b",))])
    assert solve(inst).verdict == UNSAT


def test_padding_for_ternary_template():
    # two variables but tuple arity 2 over a ternary template
    t = lin3_z2()
    inst = Instance.build(t, ["a", "b"], [("eq1", ("a", "a", "b"))])
    rep = solve(inst)
    assert rep.verdict == SAT and rep.assignment["b"] == 1
    assert set(rep.assignment) == {"a", "b"}


def test_not_core_template_solved_on_core():
    t = Template(3, (Relation("R", 2, ((0, 1), (1, 0))),))
    inst = Instance.build(t, ["a", "b", "c", "d"], [("R", ("a", "b")), ("R", ("b", "c")),
                                                     ("R", ("c", "d"))])
    rep = solve(inst)
    assert rep.verdict == SAT and evaluate_assignment(inst, rep.assignment)


def test_not_core_with_restricted_domain_is_unknown():
    t = Template(3, (Relation("R", 2, ((0, 1), (1, 0))),))
    inst = Instance.build(t, ["a", "b"], [("R", ("a", "b"))], domains={"a": (0, 1)})
    rep = solve(inst)
    assert rep.verdict == UNKNOWN
    assert "core" in rep.diagnostic["reason"]
    assert rep.diagnostic["core_elements"] == [0, 1]


def test_hard_template_is_unknown():
    inst = Instance.build(FAMILIES["k3"](), ["a", "b"], [("neq", ("a", "b"))])
    rep = solve(inst)
    assert rep.verdict == UNKNOWN
    assert rep.diagnostic["template"] in (UNKNOWN_TEMPLATE, NP_HARD_CANDIDATE)


def test_kl_bypass_agrees():
    for seed in range(15):
        inst = next(random_instances(two_sat(), 1, seed, 3, 6))
        a = solve(inst).verdict
        b = solve(inst, options=SolveOptions(kl_bypass=True)).verdict
        assert a == b
        assert a == (SAT if brute_force_solve(inst) is not None else UNSAT)


def test_auto_oracle_shortcut():
    rep = solve(neq_cycle(4), options=SolveOptions(auto_oracle=True))
    assert rep.verdict == SAT
    assert [s["stage"] for s in rep.trace] == ["input", "auto-oracle"]


def test_report_json_is_stable():
    inst = neq_cycle(4)
    a, b = solve(inst).to_json(), solve(inst).to_json()
    assert a == b
    data = json.loads(a)
    assert {"verdict", "assignment", "trace", "discrepancies"} <= set(data)


def test_wrong_template_rejected():
    with pytest.raises(ContractError):
        solve(neq_cycle(4), template=two_sat())


def test_trace_sizes_do_not_grow():
    for seed in range(10):
        inst = next(random_instances(FAMILIES["lin3-z3"](), 1, seed, 3, 5))
        rep = solve(inst)
        last = {}
        for step in rep.trace:
            if "sizes" not in step:
                continue
            key = step["space"]
            if key in last and len(last[key]) == len(step["sizes"]) and step["stage"] != "reduce":
                assert all(b <= a for a, b in zip(last[key], step["sizes"]))
            last[key] = step["sizes"]


@settings(max_examples=25)
@given(st.integers(0, 10_000), st.sampled_from(["2sat", "horn3", "lin3-z2"]))
def test_solve_agrees_with_oracle(seed, fam):
    inst = next(random_instances(FAMILIES[fam](), 1, seed, 2, 5))
    rep = solve(inst)
    truth = brute_force_solve(inst)
    assert rep.verdict != UNKNOWN
    assert rep.verdict == (SAT if truth is not None else UNSAT)
    if rep.verdict == SAT:
        assert evaluate_assignment(inst, rep.assignment)


def test_slac_only_on_horn():
    t = FAMILIES["horn3"]()
    for inst in random_instances(t, 20, 4, 3, 6):
        assert slac_only(inst) == (brute_force_solve(inst) is not None)


# oracle comparison


def test_compare_small_run():
    rep = compare_with_oracle(two_sat(), 20, seed=5, max_vars=6)
    assert rep.ok and rep.count == 20
    assert sum(rep.counts.values()) == 20
    assert rep.unknown_rate == 0.0


def test_compare_is_deterministic():
    t = FAMILIES["horn3"]()
    a = compare_with_oracle(t, 10, seed=2, max_vars=5).to_json()
    b = compare_with_oracle(t, 10, seed=2, max_vars=5).to_json()
    assert a == b
