"""Optimal information laundering for models over finite alphabets.

The effective model seen by a user is the cascade X -> K1 -> K* -> K2 -> Y of
an input kernel, the authentic model and an output kernel.  The kernels are
chosen to keep the cascade close to K* in expected KL divergence while
penalizing the mutual information through each interface.
"""

from .engine import (
    AlgorithmState,
    OilConfig,
    OilSolution,
    fixed_point_residual,
    j_functional,
    objective,
    objective_components,
    oil_optimize,
    update_k1,
    update_k2,
)
from .errors import (
    BudgetExceeded,
    DegenerateInputError,
    DomainError,
    FileFormatError,
    LaunderError,
    NumericalFailure,
    PositivityError,
    ShapeError,
)
from .prob import (
    Alphabet,
    DeterministicModel,
    Distribution,
    Kernel,
    cascade,
    entropy,
    expected_kl,
    kl_divergence,
    mutual_information,
    normalize,
    one_hot_kernel,
    pushforward,
    sample,
)
from .special import (
    OilYInput,
    beta_infinity_kernel,
    beta_zero_kernel,
    joint_deterministic_updates,
    oil_x,
    oil_y,
    oil_y_general,
)

__version__ = "0.1.0"
