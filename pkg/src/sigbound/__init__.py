"""Certified margin bounds for Sigmoid/Tanh networks with configurable tangent-point search."""

from .configurator import ConfigSpace, ConfiguratorResult, configure
from .model import (
    ActivationKind,
    AffineLayer,
    InputRegion,
    Network,
    append_margin_layer,
    eval_forward,
    gen_random_network,
    load_network,
)
from .propagation import global_lower_bound
from .search import MultiplicativeSearch, SearchConfig, baseline_tangents
from .verification import VerificationOutcome, verify_instance

__version__ = "0.1.0"

__all__ = [
    "ActivationKind",
    "AffineLayer",
    "ConfigSpace",
    "ConfiguratorResult",
    "InputRegion",
    "MultiplicativeSearch",
    "Network",
    "SearchConfig",
    "VerificationOutcome",
    "append_margin_layer",
    "baseline_tangents",
    "configure",
    "eval_forward",
    "gen_random_network",
    "global_lower_bound",
    "load_network",
    "verify_instance",
]
