from .core import (
    Congruence,
    FiniteAlgebra,
    OperationTable,
    congruence_generated_by,
    direct_product,
    maximal_congruences,
    parse_algebra,
    power,
    quotient_algebra,
    serialize_algebra,
    subalgebra,
)
from .analysis import (
    affine_structure,
    classify_simple,
    compute_core,
    find_wnu,
    minimal_absorbing,
    singleton_expansion,
)
