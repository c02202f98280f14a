import json

import pytest
from click.testing import CliRunner

from taylorcsp.algebra.core import serialize_algebra
from taylorcsp.cli import main
from taylorcsp.families import FAMILIES, affine_algebra, rock_paper_scissors
from taylorcsp.instance import serialize_template

NEQ_CYCLE4 = """\
var a
var b
var c
var d
con neq a b
con neq b c
con neq c d
con neq d a
"""

NEQ_CYCLE3 = """\
var a
var b
var c
con neq a b
con neq b c
con neq c a
"""


@pytest.fixture
def files(tmp_path):
    def write(name, text):
        p = tmp_path / name
        p.write_text(text)
        return str(p)
    return write


@pytest.fixture
def neq(files):
    return files("neq2.tpl", serialize_template(FAMILIES["neq2"]()))


def run(*args):
    return CliRunner().invoke(main, [str(a) for a in args])


def test_solve_sat(neq, files):
    res = run("solve", neq, files("c4.inst", NEQ_CYCLE4))
    assert res.exit_code == 0
    assert "verdict: SAT" in res.output
    assert "oracle: SAT" in res.output


def test_solve_unsat(neq, files):
    res = run("solve", neq, files("c3.inst", NEQ_CYCLE3), "--no-oracle")
    assert res.exit_code == 1
    assert "verdict: UNSAT" in res.output
    assert "oracle" not in res.output


def test_solve_json(neq, files):
    inst = files("c4.inst", NEQ_CYCLE4)
    a = run("solve", neq, inst, "--json", "--kl-bypass")
    b = run("solve", neq, inst, "--json", "--kl-bypass")
    assert a.output == b.output
    data = json.loads(a.output)
    assert data["verdict"] == "SAT"
    assert sorted(data["assignment"]) == ["a", "b", "c", "d"]


def test_solve_unknown_on_hard_template(files):
    k3 = files("k3.tpl", serialize_template(FAMILIES["k3"]()))
    inst = files("e.inst", "var a\nvar b\ncon neq a b\n")
    res = run("solve", k3, inst, "--no-oracle")
    assert res.exit_code == 2
    assert "verdict: UNKNOWN" in res.output


def test_malformed_input(neq, files):
    res = run("solve", neq, files("bad.inst", "var a\ncon neq a\n"))
    assert res.exit_code == 4
    assert "line 2" in res.output
    assert run("solve", neq, "/nonexistent/file").exit_code == 4


def test_classify(files):
    res = run("classify", files("2sat.tpl", serialize_template(FAMILIES["2sat"]())))
    assert res.exit_code == 0
    assert "verdict: taylor" in res.output and "wnu_arity: 3" in res.output


def test_classify_k3(files):
    path = files("k3.tpl", serialize_template(FAMILIES["k3"]()))
    assert run("classify", path).exit_code == 2
    res = run("classify", path, "--wnu-arities-sufficient")
    assert res.exit_code == 0
    assert "verdict: np-hard-candidate" in res.output
    assert "arities_tested: 3 5" in res.output


def test_classify_not_core(files):
    path = files("nc.tpl", "domain 3\nrelation R 2\n0 1\n1 0\n")
    res = run("classify", path)
    assert "verdict: not-core" in res.output
    assert "core_elements: 0 1" in res.output


def test_analyze_algebra(files):
    res = run("analyze-algebra", files("z3.alg", serialize_algebra(affine_algebra(3))))
    assert res.exit_code == 0
    lines = dict(line.split(": ", 1) for line in res.output.splitlines())
    assert lines["size"] == "3"
    assert lines["subuniverses"] == "4"  # three singletons and the whole
    assert lines["congruences"] == "2"
    assert lines["simple"] == "True"
    assert lines["affine"] == "GF(3)^1"


def test_analyze_rps(files):
    res = run("analyze-algebra", files("rps.alg", serialize_algebra(rock_paper_scissors())))
    assert "absorption_free: True" in res.output
    assert "affine" not in res.output


def test_analyze_algebra_bad_table(files):
    res = run("analyze-algebra", files("bad.alg", "universe 2\nop f 2\n0 1\n"))
    assert res.exit_code == 4


@pytest.mark.parametrize("mode,code", [("lac", 0), ("slac", 1), ("kl", 1)])
def test_check_consistency_modes(neq, files, mode, code):
    res = run("check-consistency", neq, files("c3.inst", NEQ_CYCLE3), "--mode", mode)
    assert res.exit_code == code
    if code == 0:
        assert res.output.splitlines() == ["a: 2", "b: 2", "c: 2"]
    else:
        assert "contradiction" in res.output


def test_check_consistency_kl_argument(neq, files):
    res = run("check-consistency", neq, files("c4.inst", NEQ_CYCLE4), "--mode", "kl", "--kl", "2,3")
    assert res.exit_code == 0
    assert res.output.splitlines() == ["a: 2", "b: 2", "c: 2", "d: 2"]


def test_reduce_then_solve_ccsp(files, tmp_path):
    lin = files("lin.tpl", serialize_template(FAMILIES["lin3-z2"]()))
    inst = files("lin.inst", "var x\nvar y\nvar z\ncon eq1 x y z\n")
    out = str(tmp_path / "bin.inst")
    res = run("reduce", lin, inst, "--emit-binary", out)
    assert res.exit_code == 0
    assert "tuple_variables: 6" in res.output
    assert (tmp_path / "bin.inst.template").exists()


def test_solve_ccsp(files):
    tpl = files("iso.tpl", "domain 3\nrelation id 2\n0 0\n1 1\n2 2\n")
    inst = files("chain.inst", "var a\nvar b\nvar c\ncon id a b\ncon id b c\n")
    alg = files("z3.alg", serialize_algebra(affine_algebra(3)))
    res = run("solve-ccsp", inst, alg, "--template", tpl, "--base", 0)
    assert res.exit_code == 0
    assert "method: gaussian" in res.output
    assert "component 0: a b c" in res.output
    assert "base_solvable: 0 1 2" in res.output
    assert "verdict: SAT" in res.output


def test_solve_ccsp_parity_conflict(files):
    tpl = files("z2.tpl", "domain 2\nrelation id 2\n0 0\n1 1\nrelation flip 2\n0 1\n1 0\n")
    inst = files("tri.inst", "var a\nvar b\nvar c\ncon id a b\ncon id b c\ncon flip a c\n")
    alg = files("z2.alg", serialize_algebra(affine_algebra(2)))
    res = run("solve-ccsp", inst, alg, "--template", tpl)
    assert res.exit_code == 1
    assert "verdict: UNSAT" in res.output


def test_af_check(files):
    lin = files("lin.tpl", serialize_template(FAMILIES["lin3-z2"]()))
    inst = files("lin.inst", "var x\nvar y\nvar z\ncon eq1 x y z\n")
    res = run("af-check", lin, inst)
    assert res.exit_code == 0
    assert "passive:" in res.output and "sizes:" in res.output
    assert any(line.startswith("pair ") for line in res.output.splitlines())


def test_af_check_hard_template(files):
    k3 = files("k3.tpl", serialize_template(FAMILIES["k3"]()))
    inst = files("e.inst", "var a\nvar b\ncon neq a b\n")
    assert run("af-check", k3, inst).exit_code == 2


def test_compare_family():
    a = run("compare", "--template", "2sat", "--count", 8, "--seed", 1, "--max-vars", 5, "--json")
    assert a.exit_code == 0
    data = json.loads(a.output)
    assert data["count"] == 8 and data["disagreements"] == []
    b = run("compare", "--template", "2sat", "--count", 8, "--seed", 1, "--max-vars", 5, "--json")
    assert a.output == b.output


def test_compare_text(files):
    path = files("horn.tpl", serialize_template(FAMILIES["horn3"]()))
    res = run("compare", "--template", path, "--count", 5, "--seed", 2, "--max-vars", 4)
    assert res.exit_code == 0
    assert "instances: 5" in res.output and "disagreements: 0" in res.output
