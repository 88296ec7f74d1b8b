"""shrinktori: numerics for Lagrangian self-shrinking tori in R^4.

Submodules
----------
grid         periodic torus maps, derivatives, induced geometry
functionals  Gaussian-weighted functionals (F, entropy, energy, Willmore)
lagrangian   symplectic residual, Lagrangian angle, Maslov pair, variations
variational  weighted gradient, linearized operator, critical points,
             Lojasiewicz sampling
flow         mean curvature flow, singularity detection, type-I rescaling
piecewise    piecewise Lagrangian flow driver and entropy census
seeds        seed surfaces, snapshot and config I/O
cli          command-line entry points
"""

from .grid import (
    ConformalStructure,
    GridSpec,
    ImmersionData,
    TorusMap,
    area,
    derivatives,
    fundamental_forms,
    metric_g_tau,
    min_distance_to_origin,
)
from .functionals import (
    BasePoint,
    EntropyReport,
    drift_identity_residual,
    energy,
    entropy,
    f_functional,
    shrinker_residual,
    willmore,
)
from .lagrangian import (
    AngleField,
    OneForm,
    lagrangian_angle,
    lagrangian_perturb,
    maslov_numbers,
    one_form_to_variation,
    symplectic_residual,
)
from .seeds import (
    RunConfig,
    ShrinkerCurve,
    abresch_langer_curve,
    clifford_seed,
    product_torus_seed,
    read_snapshot,
    write_snapshot,
)

__version__ = "0.1.0"

__all__ = [
    "ConformalStructure", "GridSpec", "ImmersionData", "TorusMap",
    "area", "derivatives", "fundamental_forms", "metric_g_tau",
    "min_distance_to_origin",
    "BasePoint", "EntropyReport", "drift_identity_residual", "energy",
    "entropy", "f_functional", "shrinker_residual", "willmore",
    "AngleField", "OneForm", "lagrangian_angle", "lagrangian_perturb",
    "maslov_numbers", "one_form_to_variation", "symplectic_residual",
    "RunConfig", "ShrinkerCurve", "abresch_langer_curve", "clifford_seed",
    "product_torus_seed", "read_snapshot", "write_snapshot",
    "__version__",
]
