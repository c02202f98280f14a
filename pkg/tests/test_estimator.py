import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from taylorcsp.errors import ContractError
from taylorcsp.estimator import TemplateSolver, check_instance, check_instances, check_template
from taylorcsp.families import FAMILIES, random_instances
from taylorcsp.instance import ParseError, brute_force_solve, serialize_template

NEQ2 = FAMILIES["neq2"]()
C4 = "var a\nvar b\nvar c\nvar d\ncon neq a b\ncon neq b c\ncon neq c d\ncon neq d a\n"
C3 = "var a\nvar b\nvar c\ncon neq a b\ncon neq b c\ncon neq c a\n"


def test_check_template_forms(tmp_path):
    text = serialize_template(NEQ2)
    assert check_template(NEQ2) is NEQ2
    assert check_template(text) == NEQ2
    path = tmp_path / "t.tpl"
    path.write_text(text)
    assert check_template(str(path)) == NEQ2
    with pytest.raises(ContractError):
        check_template(3)


def test_check_instance_forms():
    inst = check_instance(C4, NEQ2)
    assert inst.variables == ("a", "b", "c", "d")
    assert check_instance(inst, NEQ2) is inst
    with pytest.raises(ContractError):
        check_instance(inst, FAMILIES["2sat"]())
    with pytest.raises(ParseError):
        check_instance("var a\ncon neq a\n", NEQ2)


def test_check_instances():
    assert len(check_instances(C4, NEQ2)) == 1
    assert len(check_instances([C4, C3], NEQ2)) == 2
    with pytest.raises(ContractError):
        check_instances([], NEQ2)
    with pytest.raises(ContractError):
        check_instances(5, NEQ2)


def test_unfitted():
    with pytest.raises(NotFittedError):
        TemplateSolver().predict([C4])


def test_fit_predict():
    est = TemplateSolver().fit(NEQ2)
    assert est.verdict_.is_taylor
    out = est.predict([C4, C3])
    assert out.dtype == object
    assert out.tolist() == ["SAT", "UNSAT"]


def test_transform_reports():
    est = TemplateSolver(oracle=True).fit(NEQ2)
    reports = est.transform(C4)
    assert len(reports) == 1 and reports[0].oracle == "SAT"


def test_fit_from_instances():
    insts = list(random_instances(FAMILIES["2sat"](), 6, 3, 3, 5))
    pred = TemplateSolver(kl_bypass=True).fit_predict(insts)
    truth = ["SAT" if brute_force_solve(i) is not None else "UNSAT" for i in insts]
    assert pred.tolist() == truth


def test_fit_rejects_garbage():
    with pytest.raises(ContractError):
        TemplateSolver().fit([1, 2])


def test_params_and_clone():
    est = TemplateSolver(af_depth=1, kl_bypass=True)
    params = est.get_params()
    assert params["af_depth"] == 1 and params["kl_bypass"] is True
    copy = clone(est)
    assert copy.get_params() == params
    assert not hasattr(copy, "template_")
    est.set_params(af_depth=0)
    assert est.af_depth == 0


def test_predict_is_deterministic():
    est = TemplateSolver().fit(FAMILIES["lin3-z3"]())
    insts = list(random_instances(FAMILIES["lin3-z3"](), 4, 8, 3, 4))
    assert np.array_equal(est.predict(insts), est.predict(insts))
