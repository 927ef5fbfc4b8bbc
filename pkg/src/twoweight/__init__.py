"""Two-weight inequalities for dyadic operators on finite truncated lattices."""

from .lattice import (CapacityError, Cube, DyadicLattice, Measure, MeasureError, average,
                      build_lattice, haar_system, lp_norm, martingale_difference, reconstruct,
                      square_function, square_function_norm)
from .norms import (Budget, ExponentPair, NormEstimate, norm_bruteforce, norm_l2_exact,
                    norm_lplq_ascent, operator_norm, vector_extension_norm)
from .operators import (GeneralOperator, HaarMultiplier, PositiveDyadic, paraproduct_apply,
                        to_general, well_localized_check)
from .signs import khintchine_moments, sign_patterns
from .stopping import (CubeFamily, StoppingTree, carleson_constant, carleson_embedding_constant,
                       principal_cubes, verify_sparse_carleson)
from .testing import (TestingReport, equivalence_experiment, gap_search, randomized_testing_constant,
                      sawyer_constant, square_testing_constant, testing_report)

__version__ = "0.1.0"
