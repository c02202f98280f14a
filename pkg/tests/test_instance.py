import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from taylorcsp.errors import ContractError, ParseError
from taylorcsp.families import FAMILIES, random_instances
from taylorcsp.instance import (
    Instance,
    Relation,
    Template,
    all_solutions,
    backtrack_solve,
    brute_force_solve,
    evaluate_assignment,
    parse_instance,
    parse_template,
    serialize_instance,
    serialize_template,
)

NEQ_TEXT = "domain 2\nrelation NEQ 2\n0 1\n1 0\n"
K3_TEXT = "domain 3\nrelation E 2\n0 1\n1 0\n1 2\n2 1\n0 2\n2 0\n"


@pytest.fixture
def neq():
    return parse_template(NEQ_TEXT)


def cycle(template, n, rel="NEQ"):
    names = [f"v{i}" for i in range(n)]
    return Instance.build(template, names, [(rel, (names[i], names[(i + 1) % n])) for i in range(n)])


def test_parse_neq_template(neq):
    assert neq.domain_size == 2
    assert neq.relation("NEQ").tuples == ((0, 1), (1, 0))
    assert neq.max_arity == 2


def test_parse_k3_template():
    t = parse_template(K3_TEXT)
    assert t.domain_size == 3
    assert set(t.relation("E").tuples) == {(a, b) for a in range(3) for b in range(3) if a != b}


def test_value_out_of_range_reports_line():
    with pytest.raises(ParseError) as err:
        parse_template("domain 2\nrelation R 2\n0 5\n")
    assert err.value.line == 3


@pytest.mark.parametrize("text", [
    "relation R 2\n0 1\n",
    "domain 2\nrelation R 2\n0 1 1\n",
    "domain 2\n0 1\n",
    "domain x\n",
    "domain 2\nrelation R 1\n0\nrelation R 1\n1\n",
])
def test_malformed_templates(text):
    with pytest.raises(ParseError):
        parse_template(text)


def test_parse_instance(neq):
    inst = parse_instance("var x\nvar y\ncon NEQ x y\n", neq)
    assert inst.variables == ("x", "y")
    assert len(inst.constraints) == 1


def test_self_loop_is_valid_but_unsat(neq):
    inst = parse_instance("var x\ncon NEQ x x\n", neq)
    assert len(inst.constraints) == 1
    assert brute_force_solve(inst) is None


def test_scope_length_mismatch():
    t = parse_template(K3_TEXT)
    with pytest.raises(ParseError, match="scope-length"):
        parse_instance("var x\nvar y\nvar z\ncon E x y z\n", t)


@pytest.mark.parametrize("text", ["var x\nvar x\n", "var x\ncon Q x x\n", "var x\ndom y 0\n",
                                  "var x\ndom x 7\n", "bogus\n"])
def test_malformed_instances(neq, text):
    with pytest.raises(ParseError):
        parse_instance(text, neq)


def test_domains_and_dom_line(neq):
    inst = parse_instance("var x\nvar y\ndom x 1\ncon NEQ x y\n", neq)
    assert inst.domains == ((1,), (0, 1))
    assert brute_force_solve(inst) == {"x": 1, "y": 0}


def test_evaluate_assignment(neq):
    inst = parse_instance("var x\nvar y\ncon NEQ x y\n", neq)
    assert evaluate_assignment(inst, {"x": 0, "y": 1})
    assert not evaluate_assignment(inst, {"x": 1, "y": 1})


def test_odd_cycle_has_no_two_colouring(neq):
    inst = cycle(neq, 5)
    assert not any(evaluate_assignment(inst, dict(zip(inst.variables, a)))
                   for a in itertools.product(range(2), repeat=5))
    assert brute_force_solve(inst) is None
    assert backtrack_solve(inst) is None
    assert len(all_solutions(inst)) == 0


def test_even_cycle_two_colourable(neq):
    inst = cycle(neq, 4)
    sol = brute_force_solve(inst)
    assert sol is not None and evaluate_assignment(inst, sol)
    assert len(all_solutions(inst)) == 2


def test_empty_relation_means_no_solution():
    t = Template(2, (Relation("EMPTY", 2, ()),))
    inst = Instance.build(t, ["a", "b"], [("EMPTY", ("a", "b"))])
    assert brute_force_solve(inst) is None


def test_empty_domain_flags_unsat(neq):
    inst = Instance.build(neq, ["a"], [], domains={"a": ()})
    assert inst.is_trivially_unsat
    assert brute_force_solve(inst) is None


def test_assignment_out_of_domain_rejected(neq):
    inst = Instance.build(neq, ["a", "b"], [("NEQ", ("a", "b"))], domains={"a": (0,)})
    assert not evaluate_assignment(inst, {"a": 1, "b": 0})


def test_contract_errors(neq):
    with pytest.raises(ContractError):
        Instance.build(neq, ["a", "a"], [])
    with pytest.raises((ContractError, KeyError)):
        Instance.build(neq, ["a"], [("NOPE", ("a",))])
    with pytest.raises(ContractError):
        Relation("R", 2, ((0, 1, 1),))


def test_relation_index(neq):
    rel = neq.relation("NEQ")
    assert (0, 1) in rel and (1, 1) not in rel
    assert set(rel.index[0][0]) == {0}


@pytest.mark.parametrize("fam", sorted(FAMILIES))
def test_template_round_trip(fam):
    t = FAMILIES[fam]()
    back = parse_template(serialize_template(t))
    assert back.domain_size == t.domain_size
    assert {r.name: set(r.tuples) for r in back.relations} == \
        {r.name: set(r.tuples) for r in t.relations}


@given(st.integers(0, 10_000), st.sampled_from(sorted(FAMILIES)))
def test_instance_round_trip(seed, fam):
    t = FAMILIES[fam]()
    inst = next(random_instances(t, 1, seed, 3, 6))
    back = parse_instance(serialize_instance(inst), t)
    assert back == inst


@given(st.integers(0, 10_000), st.sampled_from(["2sat", "horn3", "lin3-z2", "k3"]))
def test_oracles_agree(seed, fam):
    inst = next(random_instances(FAMILIES[fam](), 1, seed, 2, 6))
    a = brute_force_solve(inst)
    b = backtrack_solve(inst)
    assert (a is None) == (b is None)
    for s in (a, b):
        assert s is None or evaluate_assignment(inst, s)
    sols = all_solutions(inst)
    brute = [v for v in itertools.product(*inst.domains)
             if evaluate_assignment(inst, dict(zip(inst.variables, v)))]
    assert sorted(map(tuple, sols.tolist())) == sorted(brute)


def test_all_solutions_shape(neq):
    sols = all_solutions(cycle(neq, 4))
    assert isinstance(sols, np.ndarray) and sols.shape == (2, 4)
