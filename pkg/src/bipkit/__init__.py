"""Bayesian interaction primitives: learn a joint prior over two agents' motion
from demonstrations, track phase and latent weights online with an extended
Kalman filter, and generate the controlled agent's response."""

from bipkit.basis import BasisConfig, WeightVector, decompose, reconstruct
from bipkit.filter import FilterState, NoiseConfig, SpatiotemporalFilter
from bipkit.interaction import DofLayout, Interaction, PartialObservation, load_interaction, save_interaction
from bipkit.prior import PriorModel, learn_prior
from bipkit.response import LoopRates, generate_response, interaction_loop

__version__ = "0.1.0"

__all__ = [
    "BasisConfig",
    "DofLayout",
    "FilterState",
    "Interaction",
    "LoopRates",
    "NoiseConfig",
    "PartialObservation",
    "PriorModel",
    "SpatiotemporalFilter",
    "WeightVector",
    "decompose",
    "generate_response",
    "interaction_loop",
    "learn_prior",
    "load_interaction",
    "reconstruct",
    "save_interaction",
]
