"""Exact Shapley values for decision-tree ensembles.

Three coalition utilities are supported: observational TreeSHAP,
interventional (reference-set) and Eject, which stops at the first
out-of-coalition split on the instance's own decision path.
"""

__version__ = "0.1.0"

from .tree_model import (  # noqa: E402
    LEAF,
    DecisionPath,
    EnsembleModel,
    TreeArrays,
    assign_internal_values,
    assign_internal_values_from_leaves,
    decision_path,
    ensemble_predict,
    predict,
    validate_tree,
)
from .utilities import Coalition, utility_eject, utility_interventional, utility_treeshap  # noqa: E402
from .shapley import (  # noqa: E402
    Attribution,
    brute_force_shapley,
    local_null_report,
    relevant_players,
    shapley_ensemble,
    shapley_interventional_fast,
    shapley_reduced,
    shapley_treeshap_leafwise,
)
