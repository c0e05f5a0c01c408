"""Counterfactual harm for discrete structural causal models and
heteroskedastic Gaussian outcome models."""

from .harm import (
    Objective,
    UtilityTable,
    expected_benefit,
    expected_harm,
    expected_utility,
    harm_report,
    harmful_objective,
    hpu_objective,
    hpu_optimal_action,
    needlessly_harmful,
)
from .hetanm import HarmInputs, HetAnm, closed_form_expected_harm, mc_expected_harm
from .scm import (
    CapacityError,
    DiscreteScm,
    Exogenous,
    Mechanism,
    ModelError,
    Roles,
    ScmBuilder,
    Variable,
    cate,
    counterfactual_joint,
    interventional_distribution,
    prob_necessity,
)

__version__ = "0.1.0"

__all__ = [
    "CapacityError", "DiscreteScm", "Exogenous", "HarmInputs", "HetAnm", "Mechanism", "ModelError",
    "Objective", "Roles", "ScmBuilder", "UtilityTable", "Variable", "cate",
    "closed_form_expected_harm", "counterfactual_joint", "expected_benefit", "expected_harm",
    "expected_utility", "harm_report", "harmful_objective", "hpu_objective",
    "hpu_optimal_action", "interventional_distribution", "mc_expected_harm", "needlessly_harmful",
    "prob_necessity",
]
