"""scikit-learn style facade over the solver, plus input validation helpers."""

from __future__ import annotations

import os
from typing import Iterable, List, Optional, Union

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .errors import ContractError
from .instance import Instance, Template, parse_instance, parse_template
from .pipeline import (
    SolveOptions,
    SolveReport,
    TemplateVerdict,
    classify_template,
    solve,
)


def _read_text(obj: str) -> str:
    if "\n" not in obj and os.path.exists(obj):
        with open(obj) as fh:
            return fh.read()
    return obj


def check_template(obj: Union[Template, str]) -> Template:
    """Accept a :class:`Template`, template text, or a path to a template file."""
    if isinstance(obj, Template):
        return obj
    if isinstance(obj, str):
        return parse_template(_read_text(obj))
    raise ContractError(f"expected a Template, template text or a path, got {type(obj).__name__}")


def check_instance(obj: Union[Instance, str], template: Template) -> Instance:
    if isinstance(obj, Instance):
        if obj.template != template:
            raise ContractError("instance is over a different template")
        return obj
    if isinstance(obj, str):
        return parse_instance(_read_text(obj), template)
    raise ContractError(f"expected an Instance, instance text or a path, got {type(obj).__name__}")


def check_instances(X, template: Template) -> List[Instance]:
    """A list of instances from one instance, a sequence, or texts/paths."""
    if isinstance(X, (Instance, str)):
        X = [X]
    if not isinstance(X, Iterable):
        raise ContractError("expected an instance or a sequence of instances")
    out = [check_instance(x, template) for x in X]
    if not out:
        raise ContractError("no instances given")
    return out


class TemplateSolver(BaseEstimator):
    """Solver for a fixed template.

    ``fit`` takes the template (or instances over it) and classifies it;
    ``predict`` returns one verdict string per instance and ``transform``
    returns the full :class:`SolveReport` objects.
    """

    def __init__(self, kl_bypass: bool = False, af_depth: Optional[int] = 0,
                 arity_bound: int = 3, oracle: bool = False, auto_oracle: bool = False,
                 arities_sufficient: bool = False):
        self.kl_bypass = kl_bypass
        self.af_depth = af_depth
        self.arity_bound = arity_bound
        self.oracle = oracle
        self.auto_oracle = auto_oracle
        self.arities_sufficient = arities_sufficient

    def _options(self) -> SolveOptions:
        return SolveOptions(kl_bypass=self.kl_bypass, auto_oracle=self.auto_oracle,
                            oracle=self.oracle, af_depth=self.af_depth,
                            arity_bound=self.arity_bound)

    def fit(self, X, y=None):
        if isinstance(X, (Template, str)):
            template = check_template(X)
        else:
            first = X if isinstance(X, Instance) else next(iter(X), None)
            if not isinstance(first, Instance):
                raise ContractError("fit needs a template or parsed instances")
            template = first.template
            check_instances(X, template)
        self.template_ = template
        self.verdict_: TemplateVerdict = classify_template(template, self.arities_sufficient)
        return self

    def _check_fitted(self):
        if not hasattr(self, "template_"):
            raise NotFittedError("call fit with a template first")

    def transform(self, X) -> List[SolveReport]:
        self._check_fitted()
        opts = self._options()
        return [solve(inst, options=opts) for inst in check_instances(X, self.template_)]

    def predict(self, X) -> np.ndarray:
        return np.array([r.verdict for r in self.transform(X)], dtype=object)

    def fit_predict(self, X, y=None) -> np.ndarray:
        return self.fit(X).predict(X)
