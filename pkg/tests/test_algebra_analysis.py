import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from taylorcsp.algebra.analysis import (
    PolymorphismQuery,
    absorbing_elements,
    affine_structure,
    classify_simple,
    core_of,
    find_polymorphism,
    find_wnu,
    has_absorbing_element,
    is_abelian,
    is_core,
    is_skew_free,
    linkedness_congruences,
    minimal_absorbing,
    preserves_template,
    satisfies_wnu,
    singleton_expansion,
    test_absorption as absorption_test,
    verify_absorption,
    wnu_arities,
    wnu_identities,
)
from taylorcsp.algebra.core import (
    FiniteAlgebra,
    OperationTable,
    direct_product,
    elements_of,
    is_simple,
    power,
    subalgebra,
    subuniverse_masks,
)
from taylorcsp.errors import ContractError
from taylorcsp.families import (
    affine_algebra,
    k3,
    lin3_z2,
    majority_algebra,
    rock_paper_scissors,
    semilattice,
    two_sat,
)
from taylorcsp.instance import Relation, Template


def one_element():
    return FiniteAlgebra(1, [OperationTable("f", 2, 1, [0])])


def neq2():
    return Template(2, (Relation("NEQ", 2, ((0, 1), (1, 0))),))


def brute_wnu(op):
    n, k = op.size, op.arity
    for x, y in itertools.product(range(n), repeat=2):
        vals = {op(*[y if j == i else x for j in range(k)]) for i in range(k)}
        if len(vals) != 1 or op(*[x] * k) != x:
            return False
    return True


def brute_preserves(op, template):
    for rel in template.relations:
        for rows in itertools.product(rel.tuples, repeat=op.arity):
            image = tuple(op(*(r[i] for r in rows)) for i in range(rel.arity))
            if image not in rel:
                return False
    return True


# polymorphisms and WNUs


def test_neq_unary_polymorphisms():
    unary = [OperationTable("u", 1, 2, t) for t in itertools.product(range(2), repeat=2)]
    truth = {tuple(u.table.tolist()) for u in unary if brute_preserves(u, neq2())}
    assert truth == {(0, 1), (1, 0)}
    found = find_polymorphism(PolymorphismQuery(neq2(), 1))
    assert tuple(found.table.tolist()) in truth
    other = find_polymorphism(PolymorphismQuery(neq2(), 1, avoid=()))
    assert tuple(other.table.tolist()) in truth


def test_two_sat_majority():
    maj = (("x", "x", "x"),)
    ids = tuple((p, maj[0]) for p in (("x", "x", "y"), ("x", "y", "x"), ("y", "x", "x")))
    op = find_polymorphism(PolymorphismQuery(two_sat(), 3, ids, idempotent=True))
    assert np.array_equal(op.table, majority_algebra().operations[0].table)


def test_k3_has_no_ternary_wnu():
    q = PolymorphismQuery(singleton_expansion(k3()), 3, wnu_identities(3), idempotent=True)
    assert find_polymorphism(q) is None


def test_lin3_z2_wnu_is_minority():
    res = find_wnu(singleton_expansion(lin3_z2()))
    assert res.wnu.arity == 3
    xor = OperationTable.from_function("m", 3, 2, lambda x, y, z: x ^ y ^ z)
    assert np.array_equal(res.wnu.table, xor.table)


def test_two_sat_wnu():
    res = find_wnu(singleton_expansion(two_sat()))
    assert res.taylor and brute_wnu(res.wnu)
    assert brute_preserves(res.wnu, singleton_expansion(two_sat()))


def test_three_sat_has_no_ternary_wnu():
    rels = tuple(Relation(f"c{s}", 3, tuple(t for t in itertools.product(range(2), repeat=3)
                                             if t != tuple(int(b) for b in format(s, "03b"))))
                 for s in range(8))
    res = find_wnu(singleton_expansion(Template(2, rels)))
    assert res.wnu is None and res.arities_tested == (3,) and res.exhaustive
    assert res.taylor is None  # absence is not a verdict without the flag
    assert find_wnu(singleton_expansion(Template(2, rels)), arities_sufficient=True).taylor is False


def test_wnu_arity_schedule():
    assert wnu_arities(2) == (3,)
    assert wnu_arities(3) == (3, 5)
    assert wnu_arities(5) == (3, 7)


def test_identity_patterns_checked():
    with pytest.raises(ContractError):
        PolymorphismQuery(neq2(), 2, ((("x",), ("y",)),))


@pytest.mark.parametrize("template", [two_sat(), lin3_z2()])
def test_returned_wnu_sweeps(template):
    res = find_wnu(singleton_expansion(template))
    assert satisfies_wnu(res.wnu) and brute_wnu(res.wnu)
    assert preserves_template(res.wnu, template)


# cores


def test_k3_is_core():
    assert is_core(k3())


def test_loop_template_core():
    t = Template(2, (Relation("R", 2, ((0, 0),)),))
    res = core_of(t)
    assert res.core.domain_size == 1 and res.elements == (0,)
    assert res.retraction == (0, 0)


def test_single_element_core():
    t = Template(1, (Relation("R", 1, ((0,),)),))
    assert core_of(t).core == t


def test_singleton_expansion():
    t2 = singleton_expansion(neq2())
    unary = sorted(r.tuples for r in t2.relations if r.arity == 1)
    assert unary == [((0,),), ((1,),)]
    assert singleton_expansion(t2) == t2
    assert sum(r.arity == 1 for r in singleton_expansion(k3()).relations) == 3


# absorption


def test_whole_algebra_absorbs():
    res = absorption_test(majority_algebra(), [0, 1])
    assert res.absorbs


def test_majority_zero_absorbs():
    res = absorption_test(majority_algebra(), [0])
    assert res.absorbs
    assert all(verify_absorption(majority_algebra(), [0], res.certificate.witness.table))


@pytest.mark.parametrize("p", [2, 3, 5])
def test_affine_has_no_proper_absorption(p):
    alg = affine_algebra(p)
    for m in subuniverse_masks(alg):
        if m == alg.full_mask:
            continue
        res = absorption_test(alg, elements_of(m))
        assert not res.absorbs and res.exact
    assert is_abelian(alg).value is True


def test_minimal_absorbing_examples():
    ma = minimal_absorbing(majority_algebra())
    assert ma.subset == (0,) and not ma.absorption_free
    z3 = minimal_absorbing(affine_algebra(3))
    assert z3.subset == (0, 1, 2) and z3.absorption_free
    one = minimal_absorbing(one_element())
    assert one.subset == (0,)


def test_absorption_needs_subuniverse():
    with pytest.raises(ContractError):
        absorption_test(affine_algebra(3), [0, 1])


@st.composite
def small_algebras(draw):
    n = draw(st.integers(2, 3))
    off = draw(st.lists(st.integers(0, n - 1), min_size=n * n, max_size=n * n))
    table = [a if a == b else off[a * n + b] for a in range(n) for b in range(n)]
    return FiniteAlgebra(n, [OperationTable("f", 2, n, table)])


@given(small_algebras())
def test_certificates_reverify_and_transitivity(alg):
    masks = subuniverse_masks(alg)
    for c in masks:
        res = absorption_test(alg, elements_of(c))
        if not res.absorbs:
            continue
        assert all(verify_absorption(alg, elements_of(c), res.certificate.witness.table))
        for b in masks:
            if b & c and b != alg.full_mask and b.bit_count() > 1:
                sub = subalgebra(alg, elements_of(b))
                local = [i for i, lab in enumerate(sub.labels) if (c >> lab) & 1]
                assert absorption_test(sub, local).absorbs


TAYLOR_SMALL = [majority_algebra(), semilattice(), affine_algebra(2), affine_algebra(3),
                rock_paper_scissors()]


@pytest.mark.parametrize("A", TAYLOR_SMALL, ids=lambda a: a.operations[0].name + str(a.size))
def test_absorption_on_squares(A):
    """Linked subdirect R <= A x A is full or A has a proper absorbing subuniverse."""
    P = power(A, 2)
    has_absorbing = not minimal_absorbing(A).absorption_free
    for m in subuniverse_masks(P):
        els = elements_of(m)
        if not P.is_subdirect(els):
            continue
        pairs = [P.decode(e) for e in els]
        if linkedness_congruences(pairs, A.size, A.size).linked:
            assert len(els) == P.size or has_absorbing


# trichotomy predicates


def test_absorbing_element_examples():
    assert absorbing_elements(semilattice()) == (0,)
    assert has_absorbing_element(semilattice()) == 0
    assert has_absorbing_element(affine_algebra(2)) is None
    assert absorbing_elements(one_element()) == (0,)


def test_abelian_examples():
    assert is_abelian(affine_algebra(3)).value is True
    res = is_abelian(semilattice())
    assert res.value is False and res.witness
    assert is_abelian(rock_paper_scissors()).value is False


def brute_congruence_count(alg):
    from taylorcsp.algebra.core import _set_partitions
    count = 0
    for labels in _set_partitions(alg.size):
        ok = True
        for op in alg.operations:
            for xs in itertools.product(range(alg.size), repeat=op.arity):
                for ys in itertools.product(range(alg.size), repeat=op.arity):
                    if all(labels[x] == labels[y] for x, y in zip(xs, ys)) and \
                            labels[op(*xs)] != labels[op(*ys)]:
                        ok = False
                        break
                if not ok:
                    break
        count += ok
    return count


def test_skew_free_examples():
    assert is_skew_free(rock_paper_scissors()).value is True
    res = is_skew_free(affine_algebra(2))
    assert res.value is False and res.witness is not None
    sl = semilattice()
    count = brute_congruence_count(power(sl, 2))
    assert is_skew_free(sl).value is (count == 4)


def test_classify_simple_examples():
    v = classify_simple(semilattice())
    assert v.kind == "absorbing-element" and v.element == 0 and str(v) == "AbsorbingElement(0)"
    assert classify_simple(affine_algebra(3)).kind == "abelian"
    assert str(classify_simple(rock_paper_scissors())) == "SkewFree"
    with pytest.raises(ContractError):
        classify_simple(affine_algebra(4))


def _idempotent_ops(n):
    off = [(a, b) for a in range(n) for b in range(n) if a != b]
    for vals in itertools.product(range(n), repeat=len(off)):
        table = [0] * (n * n)
        for a in range(n):
            table[a * n + a] = a
        for (a, b), v in zip(off, vals):
            table[a * n + b] = v
        yield table


def _definite_once(alg):
    if not is_simple(alg):
        return True
    v = classify_simple(alg)
    return v.definite and sorted(v.diagnostics["answers"].values(), key=str) == [False, False, True]


def test_trichotomy_two_operations_size_two():
    tables = list(_idempotent_ops(2))
    for t1, t2 in itertools.product(tables, repeat=2):
        alg = FiniteAlgebra(2, [OperationTable("f", 2, 2, t1), OperationTable("g", 2, 2, t2)])
        assert _definite_once(alg)


def test_trichotomy_two_operations_size_three_sample():
    rng = np.random.default_rng(41)
    tables = list(_idempotent_ops(3))
    for _ in range(150):
        i, j = rng.integers(len(tables), size=2)
        alg = FiniteAlgebra(3, [OperationTable("f", 2, 3, tables[i]),
                                OperationTable("g", 2, 3, tables[j])])
        assert _definite_once(alg)


# affine structure


def _check_transport(alg, st):
    assert np.array_equal(
        st.maltsev.table.cube()[tuple(np.indices((alg.size,) * 3))],
        np.array([[[st.from_vector((st.vectors[x] - st.vectors[y] + st.vectors[z]) % st.p)
                    for z in range(alg.size)] for y in range(alg.size)] for x in range(alg.size)]))
    back = [st.from_vector(st.to_vector(a)) for a in range(alg.size)]
    assert back == list(range(alg.size))
    assert st.to_vector(0) == (0,) * st.d


def test_affine_z5():
    st5 = affine_structure(affine_algebra(5))
    assert (st5.p, st5.d) == (5, 1)
    _check_transport(affine_algebra(5), st5)


def test_affine_z2_squared():
    z2 = affine_algebra(2)
    P = direct_product([z2, z2])
    st4 = affine_structure(P)
    assert (st4.p, st4.d) == (2, 2)
    _check_transport(P, st4)


def test_affine_rejects_rps():
    assert affine_structure(rock_paper_scissors()) is None


def test_affine_map_interpolation():
    st3 = affine_structure(affine_algebra(3))
    L, c = st3.affine_map([2, 0, 1])
    assert [int((L @ st3.vectors[a] + c)[0] % 3) for a in range(3)] == \
        [st3.vectors[x][0] for x in (2, 0, 1)]


# linkedness


def test_linkedness_examples():
    full = linkedness_congruences([(a, b) for a in range(2) for b in range(2)], 2, 2)
    assert full.linked
    ident = linkedness_congruences([(0, 0), (1, 1)], 2, 2)
    assert ident.alpha.is_identity() and ident.beta.is_identity() and not ident.linked
    assert ident.is_iso_graph
    step = linkedness_congruences([(0, 0), (0, 1), (1, 1)], 2, 2)
    assert step.alpha.is_full() and step.beta.is_full() and step.linked


def test_linkedness_requires_subdirect():
    with pytest.raises(ContractError):
        linkedness_congruences([(0, 0)], 2, 2)


@given(st.sets(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1))
def test_linked_iff_full_congruences(pairs):
    left = {a for a, _ in pairs}
    right = {b for _, b in pairs}
    la, lb = sorted(left), sorted(right)
    rel = [(la.index(a), lb.index(b)) for a, b in pairs]
    res = linkedness_congruences(rel, len(la), len(lb))
    assert res.linked == (res.alpha.is_full() and res.beta.is_full())
    # brute-force connectivity of the bipartite graph
    seen = {("a", 0)}
    stack = [("a", 0)]
    while stack:
        side, v = stack.pop()
        for a, b in rel:
            for nxt in ((("b", b),) if side == "a" and a == v else
                        (("a", a),) if side == "b" and b == v else ()):
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
    assert res.linked == (len(seen) == len(la) + len(lb))
