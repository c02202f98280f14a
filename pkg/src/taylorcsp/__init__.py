"""Fixed-template CSP solving on top of a finite universal-algebra engine."""

from .errors import (
    BoundExceededError,
    ContractError,
    ParseError,
    PremiseViolation,
    SignatureMismatchError,
    TaylorCSPError,
    UnknownOutcome,
)
from .instance import (
    Constraint,
    Instance,
    Relation,
    Template,
    brute_force_solve,
    evaluate_assignment,
    parse_instance,
    parse_template,
    serialize_instance,
    serialize_template,
)
from .pipeline import (
    SolveOptions,
    SolveReport,
    TemplateVerdict,
    classify_template,
    compare_with_oracle,
    solve,
)
from .estimator import TemplateSolver

__version__ = "0.1.0"
