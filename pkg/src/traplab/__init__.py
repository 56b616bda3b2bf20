"""traplab: trapped interacting Brownian motions as a numerical laboratory.

Core objects: cubic grids and densities (grid), trap/pair potentials
(potentials), Brownian path ensembles and occupation measures (paths),
path Hamiltonians and intersection local times (hamiltonians), the
Feynman-Kac cumulant functional (feynman_kac), the occupation rate
function (rate_function), the variational solvers (variational), and
Monte Carlo free-energy estimators (montecarlo).  The cli module drives
experiments from a config file.
"""

__version__ = "0.1.0"

from .errors import TraplabError
from .grid import (
    DensityField,
    GridFunction,
    GridSpec,
    convolve,
    inner_product,
    lp_distance,
    make_grid,
    normalize,
    point_mass,
    quadrature,
)
from .potentials import (
    PairSpec,
    RescaledPair,
    TrapSpec,
    alpha_of_v,
    alpha_of_v_quadrature,
    eval_pair,
    eval_trap,
    rescale_pair,
)
from .paths import (
    InitialDistribution,
    OccupationMeasure,
    PathEnsemble,
    mean_occupation,
    occupation_measure,
    sample_paths,
)
from .hamiltonians import (
    IltField,
    Mollifier,
    ilt_grid,
    make_mollifier,
    mollified_ilt_zero,
    mollified_ilt_zero_via_histogram,
    pair_energy,
    scaled_pair_energy,
    trap_energy,
)
from .feynman_kac import (
    FkSolution,
    cgf,
    cgf_mc,
    default_dt_pde,
    tilted_occupation,
)
from .rate_function import (
    RateFunctionResult,
    alternate_expression_check,
    evaluate_J,
    j_lower_bound,
)
from .variational import (
    VariationalResult,
    VarOptions,
    gateaux_check,
    solve_chi_otimes,
    solve_gp,
    solve_hartree,
)
from .montecarlo import (
    McEstimate,
    WeightedOccupation,
    free_energy,
    tilted_free_energy,
    weighted_mean_occupation,
)
