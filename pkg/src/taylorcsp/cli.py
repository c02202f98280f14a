"""Command line interface.

Exit codes: 0 SAT / agreement, 1 UNSAT, 2 Unknown, 3 discrepancy with the
oracle; 4 for malformed input.
"""

from __future__ import annotations

import json
import os
import sys

import click

from .af import build_m_list, enforce_af_consistency
from .algebra.analysis import affine_structure, classify_simple, is_absorption_free
from .algebra.core import (
    all_congruences,
    enumerate_subuniverses,
    is_simple,
    parse_algebra,
    power,
)
from .binary import binary_from_instance, minimal_binary_instance, tuple_arity
from .ccsp import CCSPInstance, solve_ccsp
from .consistency import enforce_kl_minimality, run_lac, run_slac
from .errors import TaylorCSPError
from .families import FAMILIES
from .instance import (
    Instance,
    parse_instance,
    parse_template,
    serialize_instance,
    serialize_template,
)
from .network import enforce_path_consistency
from .pipeline import (
    SAT,
    UNSAT,
    SolveOptions,
    _cached_verdict,
    classify_template,
    compare_with_oracle,
    domain_algebra,
    solve,
)

EXIT_SAT, EXIT_UNSAT, EXIT_UNKNOWN, EXIT_DISCREPANCY, EXIT_INPUT = 0, 1, 2, 3, 4


def _read(path: str) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _load(template_path: str, instance_path: str = None):
    template = parse_template(_read(template_path))
    if instance_path is None:
        return template, None
    return template, parse_instance(_read(instance_path), template)


def _fail(exc: Exception):
    click.echo(f"error: {exc}", err=True)
    sys.exit(EXIT_INPUT)


@click.group()
def main():
    """Fixed-template CSP solver built on finite algebra."""


@main.command("solve")
@click.argument("template_path", metavar="TEMPLATE")
@click.argument("instance_path", metavar="INSTANCE")
@click.option("--kl-bypass", is_flag=True, help="Skip minimality for templates of arity <= 2.")
@click.option("--no-oracle", is_flag=True, help="Do not cross-check with brute force.")
@click.option("--auto-oracle", is_flag=True, help="Hand small instances straight to brute force.")
@click.option("--af-depth", type=int, default=0, show_default=True)
@click.option("--json", "as_json", is_flag=True, help="Print the JSON report.")
def solve_cmd(template_path, instance_path, kl_bypass, no_oracle, auto_oracle, af_depth, as_json):
    """Solve INSTANCE over TEMPLATE."""
    try:
        _, inst = _load(template_path, instance_path)
    except (OSError, TaylorCSPError) as exc:
        _fail(exc)
    opts = SolveOptions(kl_bypass=kl_bypass, oracle=not no_oracle, auto_oracle=auto_oracle,
                        af_depth=af_depth)
    rep = solve(inst, options=opts)
    if as_json:
        click.echo(rep.to_json())
    else:
        click.echo(f"verdict: {rep.verdict}")
        if rep.assignment is not None:
            for v in inst.variables:
                click.echo(f"{v} = {rep.assignment[v]}")
        if rep.diagnostic:
            click.echo(f"diagnostic: {json.dumps(rep.diagnostic, sort_keys=True, default=str)}")
        if rep.oracle is not None:
            click.echo(f"oracle: {rep.oracle}")
        for d in rep.discrepancies:
            click.echo(f"discrepancy: {d}")
    if rep.discrepancy:
        sys.exit(EXIT_DISCREPANCY)
    sys.exit({SAT: EXIT_SAT, UNSAT: EXIT_UNSAT}.get(rep.verdict, EXIT_UNKNOWN))


@main.command("classify")
@click.argument("template_path", metavar="TEMPLATE")
@click.option("--wnu-arities-sufficient", is_flag=True,
              help="Treat absence of a WNU at the tested arities as proof of hardness.")
def classify_cmd(template_path, wnu_arities_sufficient):
    """Classify TEMPLATE as not-core, Taylor, NP-hard candidate or unknown."""
    try:
        template, _ = _load(template_path)
    except (OSError, TaylorCSPError) as exc:
        _fail(exc)
    v = classify_template(template, arities_sufficient=wnu_arities_sufficient)
    click.echo(f"verdict: {v.kind}")
    click.echo(f"detail: {v.detail}")
    if v.core is not None and v.kind == "not-core":
        click.echo(f"core_elements: {' '.join(map(str, v.core.elements))}")
        click.echo(serialize_template(v.core.core).rstrip())
    if v.search is not None:
        click.echo(f"arities_tested: {' '.join(map(str, v.search.arities_tested))}")
    if v.wnu is not None:
        click.echo(f"wnu_arity: {v.wnu.arity}")
        click.echo(f"wnu_table: {' '.join(map(str, v.wnu.table.tolist()))}")
    sys.exit(EXIT_UNKNOWN if v.kind == "unknown" else EXIT_SAT)


@main.command("analyze-algebra")
@click.argument("path", metavar="ALGEBRA")
def analyze_algebra_cmd(path):
    """Print structural facts about an algebra as key: value lines."""
    try:
        alg = parse_algebra(_read(path))
    except (OSError, TaylorCSPError) as exc:
        _fail(exc)
    click.echo(f"size: {alg.size}")
    click.echo(f"idempotent: {alg.is_idempotent()}")
    click.echo(f"subuniverses: {len(enumerate_subuniverses(alg))}")
    click.echo(f"congruences: {len(all_congruences(alg))}")
    simple = alg.size >= 2 and is_simple(alg)
    click.echo(f"simple: {simple}")
    if alg.is_idempotent():
        click.echo(f"absorption_free: {is_absorption_free(alg)}")
    if simple and alg.is_idempotent():
        click.echo(f"trichotomy: {classify_simple(alg)}")
        st = affine_structure(alg)
        if st is not None:
            click.echo(f"affine: GF({st.p})^{st.d}")
            for a in range(alg.size):
                click.echo(f"vector {a}: {' '.join(map(str, st.to_vector(a)))}")


@main.command("check-consistency")
@click.argument("template_path", metavar="TEMPLATE")
@click.argument("instance_path", metavar="INSTANCE")
@click.option("--mode", type=click.Choice(["kl", "lac", "slac"]), default="slac", show_default=True)
@click.option("--kl", "kl", default=None, help="k,l for --mode kl (default 2m,3m).")
def check_consistency_cmd(template_path, instance_path, mode, kl):
    """Print surviving domain sizes per variable after a consistency pass."""
    try:
        template, inst = _load(template_path, instance_path)
    except (OSError, TaylorCSPError) as exc:
        _fail(exc)
    if mode == "kl":
        m = tuple_arity(inst)
        k, l = (2 * m, 3 * m) if kl is None else (int(s) for s in kl.split(","))
        state = enforce_kl_minimality(inst, k, l)
        if state.unsat:
            click.echo("contradiction")
            sys.exit(EXIT_UNSAT)
        sizes = [len(d) for d in state.domains()]
    else:
        res = run_lac(inst) if mode == "lac" else run_slac(inst)
        if res.contradiction:
            click.echo("contradiction")
            sys.exit(EXIT_UNSAT)
        masks = res.supported.masks if mode == "lac" else res.masks
        sizes = [bin(m).count("1") for m in masks]
    for v, s in zip(inst.variables, sizes):
        click.echo(f"{v}: {s}")


@main.command("reduce")
@click.argument("template_path", metavar="TEMPLATE")
@click.argument("instance_path", metavar="INSTANCE")
@click.option("--emit-binary", "emit", required=True, type=click.Path(dir_okay=False),
              help="Write the binary instance here and its template to <path>.template.")
def reduce_cmd(template_path, instance_path, emit):
    """Minimality plus binary reduction over tuple variables."""
    try:
        _, inst = _load(template_path, instance_path)
    except (OSError, TaylorCSPError) as exc:
        _fail(exc)
    b = minimal_binary_instance(inst)
    if b is None:
        click.echo("contradiction")
        sys.exit(EXIT_UNSAT)
    out = b.to_instance()
    with open(emit, "w", encoding="utf-8") as fh:
        fh.write(serialize_instance(out))
    with open(emit + ".template", "w", encoding="utf-8") as fh:
        fh.write(serialize_template(out.template))
    click.echo(f"tuple_variables: {len(b.tuple_vars)}")
    click.echo(f"values: {b.num_values}")


@main.command("solve-ccsp")
@click.argument("instance_path", metavar="BINARY_INSTANCE")
@click.argument("algebra_path", metavar="ALGEBRA")
@click.option("--template", "template_path", default=None,
              help="Template of the binary instance (default <instance>.template).")
@click.option("--base", type=int, default=None, help="Report which values of this variable extend.")
def solve_ccsp_cmd(instance_path, algebra_path, template_path, base):
    """Solve a cyclic CSP whose values are the elements of ALGEBRA."""
    try:
        template = parse_template(_read(template_path or instance_path + ".template"))
        inst = parse_instance(_read(instance_path), template)
        alg = parse_algebra(_read(algebra_path))
        ccsp = CCSPInstance.build(binary_from_instance(inst).network, alg)
        res = solve_ccsp(ccsp, base=base)
    except (OSError, TaylorCSPError) as exc:
        _fail(exc)
    click.echo(f"method: {res.method}")
    for i, comp in enumerate(res.components):
        names = " ".join(inst.variables[v] for v in comp)
        click.echo(f"component {i}: {names}")
    if base is not None:
        click.echo(f"base_solvable: {' '.join(map(str, res.solvable))}")
    if not res.satisfiable:
        click.echo("verdict: UNSAT")
        sys.exit(EXIT_UNSAT)
    click.echo("verdict: SAT")
    for v, a in zip(inst.variables, res.solution):
        click.echo(f"{v} = {a}")


@main.command("af-check")
@click.argument("template_path", metavar="TEMPLATE")
@click.argument("instance_path", metavar="INSTANCE")
@click.option("--depth", type=int, default=0, show_default=True)
def af_check_cmd(template_path, instance_path, depth):
    """Print the test pairs, per-pair verdicts, removed blocks and passive count."""
    try:
        template, inst = _load(template_path, instance_path)
    except (OSError, TaylorCSPError) as exc:
        _fail(exc)
    verdict = _cached_verdict(template)
    if not verdict.is_taylor:
        click.echo(f"template verdict {verdict.kind}: no domain algebra")
        sys.exit(EXIT_UNKNOWN)
    b = minimal_binary_instance(inst)
    net = None if b is None else enforce_path_consistency(b.network)
    if net is None:
        click.echo("contradiction before AF")
        sys.exit(EXIT_UNSAT)
    alg = power(domain_algebra(verdict), b.m)
    for pair in build_m_list(net, alg):
        click.echo(f"pair {pair.describe()}")
    res = enforce_af_consistency(net, alg, depth=depth)
    for r in res.reports:
        status = "skipped" if r.skipped else (
            f"relevant={r.relevant} solvable={list(r.solvable)} removed={list(r.removed)}")
        click.echo(f"verdict {r.pair.describe()}: {status}")
    click.echo(f"passive: {len(res.passive)}")
    if res.unsat:
        click.echo("contradiction")
        sys.exit(EXIT_UNSAT)
    sizes = " ".join(map(str, res.network.domain_sizes()))
    click.echo(f"sizes: {sizes}")


@main.command("compare")
@click.option("--template", "template_path", required=True,
              help=f"Template file or a built-in family ({', '.join(FAMILIES)}).")
@click.option("--count", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--min-vars", type=int, default=3, show_default=True)
@click.option("--max-vars", type=int, default=8, show_default=True)
@click.option("--kl-bypass", is_flag=True)
@click.option("--json", "as_json", is_flag=True)
def compare_cmd(template_path, count, seed, min_vars, max_vars, kl_bypass, as_json):
    """Compare the solver with brute force on seeded random instances."""
    try:
        if template_path in FAMILIES and not os.path.exists(template_path):
            template = FAMILIES[template_path]()
        else:
            template, _ = _load(template_path)
    except (OSError, TaylorCSPError) as exc:
        _fail(exc)
    rep = compare_with_oracle(template, count, seed, min_vars, max_vars,
                              SolveOptions(kl_bypass=kl_bypass))
    if as_json:
        click.echo(rep.to_json())
    else:
        click.echo(f"instances: {rep.count}")
        for k in sorted(rep.counts):
            click.echo(f"{k}: {rep.counts[k]}")
        click.echo(f"unknown_rate: {rep.unknown_rate:.4f}")
        click.echo(f"disagreements: {len(rep.disagreements)}")
        for d in rep.disagreements:
            click.echo(f"  instance {d['index']}: solver {d['solver']} oracle {d['oracle']}")
    sys.exit(EXIT_SAT if rep.ok else EXIT_DISCREPANCY)


if __name__ == "__main__":
    main()
