"""Global sensitivity analysis with tensor trains.

Typical use::

    from ttsense import uniform_space, sobol_g_evaluator, tt_cross, build_sobol_tt, full_report

    space = uniform_space(20, 100)
    surrogate, info = tt_cross(sobol_g_evaluator(20), space)
    report = full_report(build_sobol_tt(surrogate, space))
"""

__version__ = "0.1.0"

from .cross import CrossConfig, CrossReport, maxvol, tt_cross
from .errors import (
    ApproximationError,
    ConsistencyError,
    DataError,
    DegenerateModelError,
    DomainError,
    EvaluatorTimeout,
    RangeError,
    ResourceError,
    ShapeError,
    TransportError,
    TTSenseError,
)
from .masks import (
    hamming_mask_tt,
    hamming_state_tt,
    hamming_weight_tt,
    length_mask_tt,
    length_state_tt,
    reciprocal_weight_tt,
)
from .metrics import (
    SensitivityReport,
    dimension_distribution,
    effective_successive,
    effective_superposition,
    effective_truncation,
    full_report,
    mean_dimension,
    shapley_values,
)
from .models import (
    Evaluator,
    FunctionEvaluator,
    SubprocessEvaluator,
    decay_chain_evaluator,
    sobol_g_evaluator,
    spawn_subprocess_evaluator,
)
from .sobol import SobolTT, build_sobol_tt, closed_tt, query_index, total_index
from .space import Distribution, ModelSpace, build_axis, uniform_space
from .tt import TTTensor
