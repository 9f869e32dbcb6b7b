"""Verification and explanation of neural maintenance policies on explicit-state MDPs."""

__version__ = "0.1.0"

from policymc.errors import ModelError, ModelSyntaxError, PolicyError, VerificationError
from policymc.lang import ModelAst, PctlQuery, format_model, format_property, parse_model, parse_property
from policymc.mdp import ExplicitMdp, ModelExplorer, build_explicit, enabled_actions
from policymc.pctl import CheckResult, check_dtmc, check_mdp_extremal
from policymc.policy import PolicyNet, forward, saliency, select_action
from policymc.induced import (
    ActionReplacement,
    InducedDtmc,
    Lump,
    Remap,
    action_distribution,
    build_induced_dtmc,
    conditional_saliency,
)

__all__ = [
    "ActionReplacement",
    "CheckResult",
    "ExplicitMdp",
    "InducedDtmc",
    "Lump",
    "ModelAst",
    "ModelError",
    "ModelExplorer",
    "ModelSyntaxError",
    "PctlQuery",
    "PolicyError",
    "PolicyNet",
    "Remap",
    "VerificationError",
    "action_distribution",
    "build_explicit",
    "build_induced_dtmc",
    "check_dtmc",
    "check_mdp_extremal",
    "conditional_saliency",
    "enabled_actions",
    "format_model",
    "format_property",
    "forward",
    "parse_model",
    "parse_property",
    "saliency",
    "select_action",
]
