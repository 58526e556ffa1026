"""Permutation model reliance and model class reliance bounds."""

from .dataset import Dataset, SplitSpec, impute_residualize, load_csv, split, write_csv
from .estimators import (
    Estimator,
    FunctionModel,
    Hinge,
    RelianceMode,
    SquaredError,
    algorithm_reliance,
    e_divide,
    e_orig,
    e_switch,
    e_switch_all_perm_oracle,
    model_reliance,
)
from .inference import BootstrapConfig, bootstrap_mcr_ci, rashomon_phi_ci
from .linear_class import LinearClass, LinearModel, e_switch_fast
from .mcr_search import bound_curve, search_mcr, search_mcr_minus, search_mcr_plus
from .qp1qc import EllipsoidConstraint, QuadraticObjective, solve_qp1qc
from .rkhs_class import RBF, RkhsClass, RkhsSolvable
from .theory_bounds import TheoryConstants, best_in_class_ci, inner_bounds, outer_bounds

__version__ = "0.1.0"


def schema_path(name: str):
    """Location of a shipped JSON schema, e.g. ``schema_path("mcr_curve")``."""
    from importlib.resources import files

    return files(__name__) / "schemas" / f"{name}.json"
